"""Per-tile Delaunay cell networks and connection-frequency vectors.

The triangulation is exact.  Cocircular configurations are resolved by
symbolic perturbation of the lifting (see :mod:`tissuepheno.predicates`)
with points ranked lexicographically by (x, y, input index), which makes the
edge set a deterministic function of the input.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cellmap import CELL_CLASSES, Tile
from .errors import DegenerateGeometryError, ValidationError
from .predicates import incircle_sos, orient

PAIRS = tuple(
    (CELL_CLASSES[i], CELL_CLASSES[j]) for i in range(4) for j in range(i, 4)
)
PAIR_NAMES = tuple("h_" + a + b for a, b in PAIRS)
N_PAIRS = len(PAIRS)

_PAIR_INDEX = np.zeros((4, 4), dtype=np.int64)
for _k, (_a, _b) in enumerate(PAIRS):
    _i, _j = CELL_CLASSES.index(_a), CELL_CLASSES.index(_b)
    _PAIR_INDEX[_i, _j] = _PAIR_INDEX[_j, _i] = _k


class DuplicateCellWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EdgeSet:
    edges: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)


@dataclass(frozen=True)
class CFVector:
    h: tuple[float, ...]
    edge_count: int

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.h, dtype=float)

    @classmethod
    def empty(cls) -> "CFVector":
        return cls((0.0,) * N_PAIRS, 0)


def tie_break_order(points: Sequence[tuple[float, float]]) -> list[int]:
    return sorted(range(len(points)), key=lambda i: (points[i][0], points[i][1], i))


def _third(tri, a, b):
    for v in tri:
        if v != a and v != b:
            return v
    raise AssertionError("degenerate triangle")


def _sweep_triangulation(pts, order):
    """Any valid triangulation of the point set, built by inserting points in
    lexicographic order; each new point lies outside the current hull."""
    n = len(order)
    p0, p1 = pts[order[0]], pts[order[1]]
    m = 2
    while m < n and orient(*p0, *p1, *pts[order[m]]) == 0:
        m += 1
    if m == n:
        raise DegenerateGeometryError("all points are collinear")
    apex = order[m]
    chain = order[:m]
    side = orient(*p0, *pts[chain[-1]], *pts[apex])
    tris = []
    for u, v in zip(chain[:-1], chain[1:]):
        tris.append((u, v, apex) if side > 0 else (v, u, apex))
    if side > 0:
        hull = list(chain) + [apex]
    else:
        hull = [chain[0], apex] + list(chain[:0:-1])

    for p in order[m + 1:]:
        px, py = pts[p]
        h = len(hull)
        vis = [
            orient(*pts[hull[i]], *pts[hull[(i + 1) % h]], px, py) < 0
            for i in range(h)
        ]
        start = next(i for i in range(h) if vis[i] and not vis[i - 1])
        run = 0
        while vis[(start + run) % h]:
            tris.append((hull[(start + run + 1) % h], hull[(start + run) % h], p))
            run += 1
        rotated = hull[start:] + hull[:start]
        hull = [rotated[0], p] + rotated[run:]
    return tris


def _lawson_flip(pts, rank, tris):
    tri_of = {}
    store = {}
    next_id = 0

    def add(t):
        nonlocal next_id
        tid = next_id
        next_id += 1
        store[tid] = t
        a, b, c = t
        tri_of[(a, b)] = tid
        tri_of[(b, c)] = tid
        tri_of[(c, a)] = tid

    def remove(tid):
        a, b, c = store.pop(tid)
        del tri_of[(a, b)], tri_of[(b, c)], tri_of[(c, a)]

    for t in tris:
        add(t)
    stack = list(tri_of)
    while stack:
        a, b = stack.pop()
        t1 = tri_of.get((a, b))
        t2 = tri_of.get((b, a))
        if t1 is None or t2 is None:
            continue
        c = _third(store[t1], a, b)
        d = _third(store[t2], a, b)
        if incircle_sos(pts, rank, a, b, c, d) <= 0:
            continue
        if orient(*pts[a], *pts[d], *pts[c]) <= 0 or orient(*pts[d], *pts[b], *pts[c]) <= 0:
            continue
        remove(t1)
        remove(t2)
        add((a, d, c))
        add((d, b, c))
        stack.extend(((a, d), (d, b), (b, c), (c, a)))
    return list(store.values())


def delaunay_triangles(points) -> list[tuple[int, int, int]]:
    """Counter-clockwise Delaunay triangles as index triples."""
    pts = [(float(x), float(y)) for x, y in points]
    n = len(pts)
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 points, got {n}")
    order = tie_break_order(pts)
    for a, b in zip(order[:-1], order[1:]):
        if pts[a] == pts[b]:
            raise DegenerateGeometryError(f"duplicate points {a} and {b} at {pts[a]}")
    rank = [0] * n
    for r, i in enumerate(order):
        rank[i] = r
    return _lawson_flip(pts, rank, _sweep_triangulation(pts, order))


def delaunay(points) -> EdgeSet:
    """Delaunay edges of a planar point set (>= 3 distinct, not all collinear)."""
    edges = set()
    for a, b, c in delaunay_triangles(points):
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((u, v) if u < v else (v, u))
    return EdgeSet(tuple(sorted(edges)))


def connection_frequency(codes: Sequence[int], edges: EdgeSet) -> CFVector:
    """Connection-frequency vector from per-cell class codes and edges.

    ``codes`` are indices into ``CELL_CLASSES`` (a Tile's cells may be passed
    through :func:`class_codes`).
    """
    counts = np.zeros(N_PAIRS, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.int64)
    if len(edges) == 0:
        return CFVector.empty()
    e = np.asarray(edges.edges, dtype=np.int64)
    np.add.at(counts, _PAIR_INDEX[codes[e[:, 0]], codes[e[:, 1]]], 1)
    total = int(counts.sum())
    return CFVector(tuple(float(c) / total for c in counts), total)


def class_codes(cells) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(CELL_CLASSES)}
    return np.array([lookup[c.cls] for c in cells], dtype=np.int64)


@dataclass(frozen=True)
class TileGraph:
    """A tile's triangulated network, after duplicate collapsing.

    ``sites`` index into ``tile.cells``; edges index into ``sites``.
    """

    row: int
    col: int
    n_cells: int
    sites: tuple[int, ...]
    edges: EdgeSet
    cf: CFVector

    @property
    def address(self) -> tuple[int, int]:
        return (self.row, self.col)

    @property
    def phenotypable(self) -> bool:
        return self.cf.edge_count > 0


def tile_graph(tile: Tile) -> TileGraph:
    """Triangulate one tile and compute its CF vector.

    Exact duplicate coordinates collapse to the lowest-index cell.  Tiles with
    fewer than three distinct sites, or only collinear sites, get an empty
    CF vector and are left unphenotyped.
    """
    seen: dict[tuple[float, float], int] = {}
    sites = []
    for i, c in enumerate(tile.cells):
        key = (c.x, c.y)
        if key in seen:
            warnings.warn(
                f"tile ({tile.row}, {tile.col}): cell {i} duplicates cell {seen[key]} at {key}",
                DuplicateCellWarning,
                stacklevel=2,
            )
            continue
        seen[key] = i
        sites.append(i)
    empty = TileGraph(tile.row, tile.col, len(tile.cells), tuple(sites), EdgeSet(()), CFVector.empty())
    if len(sites) < 3:
        return empty
    pts = [(tile.cells[i].x, tile.cells[i].y) for i in sites]
    try:
        edges = delaunay(pts)
    except DegenerateGeometryError:
        return empty
    codes = class_codes([tile.cells[i] for i in sites])
    return TileGraph(tile.row, tile.col, len(tile.cells), tuple(sites), edges,
                     connection_frequency(codes, edges))


def _as_array(v) -> np.ndarray:
    return v.array if isinstance(v, CFVector) else np.asarray(v, dtype=float)


def chi_squared_distance(h, m) -> float:
    """Sum over components of (h_k - m_k)^2 / (h_k + m_k), with 0/0 taken as 0."""
    h = _as_array(h)
    m = _as_array(m)
    if h.shape != m.shape:
        raise ValidationError(f"shape mismatch {h.shape} vs {m.shape}")
    if (h < 0).any() or (m < 0).any():
        raise ValidationError("chi-squared distance needs non-negative entries")
    den = h + m
    num = (h - m) ** 2
    nz = den > 0
    return float(np.sum(num[nz] / den[nz]))


def chi_squared_matrix(A, B=None, block: int = 1024) -> np.ndarray:
    """Pairwise chi-squared distances between the rows of A and B."""
    A = np.asarray(A, dtype=float)
    B = A if B is None else np.asarray(B, dtype=float)
    if (A < 0).any() or (B < 0).any():
        raise ValidationError("chi-squared distance needs non-negative entries")
    out = np.zeros((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], block):
        blk = out[s:s + block]
        for j in range(A.shape[1]):
            a = A[s:s + block, j, None]
            b = B[None, :, j]
            den = a + b
            # 0/0 terms contribute nothing
            den[den == 0] = np.inf
            diff = a - b
            blk += diff * diff / den
    if B is A:
        np.fill_diagonal(out, 0.0)
    return out


def write_edges_csv(graphs: Sequence[TileGraph], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tile_row", "tile_col", "cell_a", "cell_b"])
        for g in graphs:
            for a, b in g.edges:
                w.writerow([g.row, g.col, g.sites[a], g.sites[b]])


def write_cf_csv(graphs: Sequence[TileGraph], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tile_row", "tile_col", *PAIR_NAMES, "edge_count"])
        for g in graphs:
            w.writerow([g.row, g.col, *(repr(v) for v in g.cf.h), g.cf.edge_count])
