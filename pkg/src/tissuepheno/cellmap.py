"""Cell maps, tissue-label grids and the fixed tile grid.

Coordinates are micrometres.  A tile at (row, col) covers the half-open
rectangle ``[col*T, (col+1)*T) x [row*T, (row+1)*T)`` so a cell lying exactly
on a grid line belongs to the higher-index tile.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParseError, ValidationError

CELL_CLASSES = ("M", "I", "S", "N")

TISSUE_CATEGORIES = (
    "normal",
    "background",
    "loose_connective",
    "fat",
    "stroma",
    "inflammation",
    "necrosis",
    "smooth_muscle",
    "tumor",
)
NON_TISSUE = frozenset({"normal", "fat", "background"})
COUNTED_CATEGORIES = tuple(c for c in TISSUE_CATEGORIES if c not in NON_TISSUE)

DEFAULT_TILE_SIZE = 200.0

_EXTENT_RE = re.compile(r"^#\s*extent_um\s*=\s*([0-9.eE+-]+)\s*x\s*([0-9.eE+-]+)\s*$")
_TILE_RE = re.compile(r"^#\s*tile_um\s*=\s*([0-9.eE+-]+)\s*$")


@dataclass(frozen=True)
class CellRecord:
    x: float
    y: float
    cls: str

    def __post_init__(self):
        if self.cls not in CELL_CLASSES:
            raise ValidationError(f"unknown cell class {self.cls!r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite coordinate ({self.x}, {self.y})")
        if self.x < 0 or self.y < 0:
            raise ValidationError(f"negative coordinate ({self.x}, {self.y})")


@dataclass(frozen=True)
class CellMap:
    slide_id: str
    cells: tuple[CellRecord, ...]
    extent: tuple[float, float]

    def __post_init__(self):
        if not self.slide_id:
            raise ValidationError("slide_id must be non-empty")
        w, h = self.extent
        if w < 0 or h < 0:
            raise ValidationError(f"negative extent {self.extent}")
        for c in self.cells:
            if c.x > w or c.y > h:
                raise ValidationError(
                    f"{self.slide_id}: cell ({c.x}, {c.y}) outside extent {w}x{h}"
                )

    @cached_property
    def xy(self) -> np.ndarray:
        return np.array([(c.x, c.y) for c in self.cells], dtype=float).reshape(-1, 2)

    @cached_property
    def class_codes(self) -> np.ndarray:
        """Class of each cell as an index into ``CELL_CLASSES``."""
        lookup = {c: i for i, c in enumerate(CELL_CLASSES)}
        return np.array([lookup[c.cls] for c in self.cells], dtype=np.int64)

    def grid_shape(self, tile_size: float) -> tuple[int, int]:
        """(rows, cols) of the tile grid covering the extent and every cell."""
        w, h = self.extent
        rows = max(1, math.ceil(h / tile_size))
        cols = max(1, math.ceil(w / tile_size))
        if self.cells:
            rows = max(rows, int(self.xy[:, 1].max() // tile_size) + 1)
            cols = max(cols, int(self.xy[:, 0].max() // tile_size) + 1)
        return rows, cols


@dataclass(frozen=True)
class TissueLabelGrid:
    slide_id: str
    labels: dict[tuple[int, int], str]
    tile_size: float = DEFAULT_TILE_SIZE

    def __post_init__(self):
        for (r, c), lab in self.labels.items():
            if r < 0 or c < 0:
                raise ValidationError(f"negative grid index ({r}, {c})")
            if lab not in TISSUE_CATEGORIES:
                raise ValidationError(f"unknown tissue category {lab!r}")

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class Tile:
    row: int
    col: int
    tile_size: float
    cells: tuple[CellRecord, ...]
    # positions of the cells in the parent CellMap
    indices: tuple[int, ...] = field(default=(), compare=False)

    @property
    def address(self) -> tuple[int, int]:
        return (self.row, self.col)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x0, x1, y0, y1), half-open on the upper side."""
        t = self.tile_size
        return (self.col * t, (self.col + 1) * t, self.row * t, (self.row + 1) * t)

    def contains(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.bounds
        return x0 <= x < x1 and y0 <= y < y1


@dataclass(frozen=True)
class TileSet:
    slide_id: str
    tile_size: float
    tiles: tuple[Tile, ...]
    grid_shape: tuple[int, int] = (0, 0)

    def __len__(self):
        return len(self.tiles)

    def __iter__(self):
        return iter(self.tiles)

    def addresses(self) -> list[tuple[int, int]]:
        """Every address on the grid, including cell-free tiles."""
        rows, cols = self.grid_shape
        return [(r, c) for r in range(rows) for c in range(cols)]


def _parse_float(token: str, path, lineno: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cannot parse {what} {token!r}", path, lineno) from None


def parse_cell_rows(lines: Iterable[str], slide_id: str, path=None) -> CellMap:
    extent = None
    cells = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _EXTENT_RE.match(line)
            if m:
                extent = (
                    _parse_float(m.group(1), path, lineno, "extent width"),
                    _parse_float(m.group(2), path, lineno, "extent height"),
                )
            continue
        parts = [p.strip() for p in line.split(",")]
        if not header_seen:
            if parts != ["x_um", "y_um", "class"]:
                raise ParseError(f"expected header 'x_um,y_um,class', got {line!r}", path, lineno)
            header_seen = True
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", path, lineno)
        x = _parse_float(parts[0], path, lineno, "x_um")
        y = _parse_float(parts[1], path, lineno, "y_um")
        if parts[2] not in CELL_CLASSES:
            raise ParseError(f"unknown cell class {parts[2]!r}", path, lineno)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(f"non-finite coordinate ({x}, {y})", path, lineno)
        if x < 0 or y < 0:
            raise ValidationError(
                f"{path}:{lineno}: negative coordinate ({x}, {y})" if path else
                f"line {lineno}: negative coordinate ({x}, {y})"
            )
        cells.append(CellRecord(x, y, parts[2]))
    if not header_seen and cells:
        raise ParseError("missing header row", path)
    if extent is None:
        if cells:
            extent = (max(c.x for c in cells), max(c.y for c in cells))
        else:
            extent = (0.0, 0.0)
    return CellMap(slide_id=slide_id, cells=tuple(cells), extent=extent)


def load_cell_map(path, slide_id: str | None = None) -> CellMap:
    """Read a cell CSV; the slide id defaults to the file stem."""
    path = Path(path)
    if slide_id is None:
        slide_id = path.stem
    with open(path, encoding="utf-8") as fh:
        return parse_cell_rows(fh, slide_id, path)


def write_cell_map(cmap: CellMap, path) -> None:
    w, h = cmap.extent
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# extent_um={w!r}x{h!r}\n")
        fh.write("x_um,y_um,class\n")
        for c in cmap.cells:
            fh.write(f"{c.x!r},{c.y!r},{c.cls}\n")


def load_tissue_labels(path, slide_id: str | None = None) -> TissueLabelGrid:
    path = Path(path)
    if slide_id is None:
        slide_id = path.stem
    tile_size = DEFAULT_TILE_SIZE
    labels: dict[tuple[int, int], str] = {}
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _TILE_RE.match(line)
                if m:
                    tile_size = _parse_float(m.group(1), path, lineno, "tile size")
                continue
            parts = [p.strip() for p in line.split(",")]
            if not header_seen:
                if parts != ["row", "col", "label"]:
                    raise ParseError(f"expected header 'row,col,label', got {line!r}", path, lineno)
                header_seen = True
                continue
            if len(parts) != 3:
                raise ParseError(f"expected 3 fields, got {len(parts)}", path, lineno)
            try:
                r, c = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"bad grid address {parts[0]!r},{parts[1]!r}", path, lineno) from None
            if r < 0 or c < 0:
                raise ParseError(f"negative grid address ({r}, {c})", path, lineno)
            if parts[2] not in TISSUE_CATEGORIES:
                raise ParseError(f"unknown tissue category {parts[2]!r}", path, lineno)
            if (r, c) in labels:
                raise ParseError(f"duplicate grid address ({r}, {c})", path, lineno)
            labels[(r, c)] = parts[2]
    return TissueLabelGrid(slide_id=slide_id, labels=labels, tile_size=tile_size)


def write_tissue_labels(grid: TissueLabelGrid, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# tile_um={grid.tile_size!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "label"])
        for (r, c) in sorted(grid.labels):
            w.writerow([r, c, grid.labels[(r, c)]])


def tile_cells(cmap: CellMap, tile_size: float = DEFAULT_TILE_SIZE) -> TileSet:
    """Partition the cells of a slide into the non-overlapping tile grid.

    Tiles without cells are not materialised.
    """
    if not tile_size > 0:
        raise ValidationError(f"tile_size must be positive, got {tile_size}")
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, c in enumerate(cmap.cells):
        key = (int(c.y // tile_size), int(c.x // tile_size))
        buckets.setdefault(key, []).append(i)
    tiles = tuple(
        Tile(
            row=r,
            col=col,
            tile_size=tile_size,
            cells=tuple(cmap.cells[i] for i in idx),
            indices=tuple(idx),
        )
        for (r, col), idx in sorted(buckets.items())
    )
    return TileSet(cmap.slide_id, tile_size, tiles, cmap.grid_shape(tile_size))
