"""Seeded synthetic slides and cohorts with planted structure.

Cells are homogeneous Poisson per region and class.  Cohort outcomes come
from a logistic model (5-year metastasis) and an exponential proportional
hazards model with independent uniform censoring (DMFS).
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .cellmap import (
    CELL_CLASSES,
    DEFAULT_TILE_SIZE,
    TISSUE_CATEGORIES,
    CellMap,
    CellRecord,
    TissueLabelGrid,
)
from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class Region:
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1 in um
    category: str
    intensity: dict[str, float]  # cells per mm^2 by class

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        if not (x0 <= x1 and y0 <= y1):
            raise ValidationError(f"bad rectangle {self.rect}")
        if self.category not in TISSUE_CATEGORIES:
            raise ValidationError(f"unknown tissue category {self.category!r}")
        for c, lam in self.intensity.items():
            if c not in CELL_CLASSES or lam < 0:
                raise ValidationError(f"bad intensity {c}={lam}")


@dataclass(frozen=True)
class SlideSpec:
    slide_id: str
    extent: tuple[float, float]
    regions: tuple[Region, ...]
    seed: int = 0
    tile_size: float = DEFAULT_TILE_SIZE

    def __post_init__(self):
        w, h = self.extent
        for r in self.regions:
            x0, y0, x1, y1 = r.rect
            if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
                raise ValidationError(f"region {r.rect} outside extent {self.extent}")


def generate_slide(spec: SlideSpec) -> tuple[CellMap, TissueLabelGrid]:
    rng = np.random.default_rng(spec.seed)
    cells = []
    for reg in spec.regions:
        x0, y0, x1, y1 = reg.rect
        area_mm2 = (x1 - x0) * (y1 - y0) / 1e6
        for cls in CELL_CLASSES:
            lam = reg.intensity.get(cls, 0.0)
            n = int(rng.poisson(lam * area_mm2)) if lam > 0 and area_mm2 > 0 else 0
            if n == 0:
                continue
            xs = rng.uniform(x0, x1, n)
            ys = rng.uniform(y0, y1, n)
            cells.extend(CellRecord(float(x), float(y), cls) for x, y in zip(xs, ys))
    cmap = CellMap(spec.slide_id, tuple(cells), spec.extent)
    return cmap, _label_grid(spec)


def _label_grid(spec: SlideSpec, sub: int = 4) -> TissueLabelGrid:
    """Majority category of each tile, sampled on a sub x sub lattice; later
    regions paint over earlier ones, uncovered area is background."""
    T = spec.tile_size
    w, h = spec.extent
    rows, cols = max(1, math.ceil(h / T)), max(1, math.ceil(w / T))
    offs = (np.arange(sub) + 0.5) / sub * T
    labels = {}
    order = {c: i for i, c in enumerate(TISSUE_CATEGORIES)}
    for r in range(rows):
        for c in range(cols):
            votes = Counter()
            for oy in offs:
                for ox in offs:
                    x, y = c * T + ox, r * T + oy
                    cat = "background"
                    for reg in spec.regions:
                        x0, y0, x1, y1 = reg.rect
                        if x0 <= x < x1 and y0 <= y < y1:
                            cat = reg.category
                    votes[cat] += 1
            labels[(r, c)] = min(votes, key=lambda k: (-votes[k], order[k]))
    return TissueLabelGrid(spec.slide_id, labels, T)


# ----------------------------------------------------------------------------
# planted CF phenotypes

# class mixture (M, I, S, N) and the AP category a tile of that phenotype gets
PLANTED_PHENOTYPES = {
    "tumor": ((0.9, 0.0, 0.1, 0.0), "tumor"),
    "inflammation": ((0.0, 0.85, 0.15, 0.0), "inflammation"),
    "smooth_muscle": ((0.0, 0.0, 1.0, 0.0), "smooth_muscle"),
    "stroma": ((0.0, 0.3, 0.7, 0.0), "stroma"),
    "interface": ((0.5, 0.0, 0.5, 0.0), "tumor"),
    "necrosis": ((0.2, 0.0, 0.0, 0.8), "necrosis"),
}


def planted_slide_spec(slide_id: str, proportions: Sequence[float], rng: np.random.Generator,
                       grid: tuple[int, int] = (8, 8), density: float = 1000.0,
                       empty_fraction: float = 0.1, tile_size: float = DEFAULT_TILE_SIZE,
                       phenotypes=None):
    """One region per tile; each tissue tile draws a planted phenotype from
    ``proportions``.  Returns the spec and the per-tile phenotype names."""
    phenotypes = phenotypes or PLANTED_PHENOTYPES
    names = list(phenotypes)
    rows, cols = grid
    regions = []
    truth = {}
    for r in range(rows):
        for c in range(cols):
            rect = (c * tile_size, r * tile_size, (c + 1) * tile_size, (r + 1) * tile_size)
            if rng.random() < empty_fraction:
                regions.append(Region(rect, "fat" if rng.random() < 0.7 else "background", {}))
                continue
            name = names[int(rng.choice(len(names), p=proportions))]
            mix, cat = phenotypes[name]
            regions.append(Region(rect, cat, {cls: density * m for cls, m in zip(CELL_CLASSES, mix)}))
            truth[(r, c)] = name
    spec = SlideSpec(slide_id, (cols * tile_size, rows * tile_size), tuple(regions),
                     seed=int(rng.integers(2**31)), tile_size=tile_size)
    return spec, truth


@dataclass
class PlantedTiles:
    H: np.ndarray  # (n_tiles, 10) CF vectors
    labels: np.ndarray  # index into PLANTED_PHENOTYPES
    slides: list[str]
    names: list[str]


def planted_tiles(n_tiles: int = 300, n_slides: int = 30, seed: int = 0,
                  density: float = 2000.0, concentration: float = 2.0) -> PlantedTiles:
    """CF vectors of tiles drawn from the planted phenotypes, grouped into
    slides whose phenotype mixtures vary (Dirichlet)."""
    from .cellgraph import tile_graph
    from .cellmap import tile_cells

    if n_tiles < n_slides or n_tiles % n_slides:
        raise ValidationError("n_tiles must be a positive multiple of n_slides")
    rng = np.random.default_rng(seed)
    names = list(PLANTED_PHENOTYPES)
    per = n_tiles // n_slides
    T = DEFAULT_TILE_SIZE
    H, labels, slides = [], [], []
    for s in range(n_slides):
        sid = f"T{s:03d}"
        mix = rng.dirichlet(np.full(len(names), concentration))
        picks = rng.choice(len(names), size=per, p=mix)
        regions = []
        for j, p in enumerate(picks):
            m, cat = PLANTED_PHENOTYPES[names[p]]
            regions.append(Region((j * T, 0.0, (j + 1) * T, T), cat,
                                  {cls: density * w for cls, w in zip(CELL_CLASSES, m)}))
        spec = SlideSpec(sid, (per * T, T), tuple(regions), seed=int(rng.integers(2**31)))
        cmap, _ = generate_slide(spec)
        graphs = {t.col: tile_graph(t) for t in tile_cells(cmap, T)}
        for j, p in enumerate(picks):
            g = graphs.get(j)
            if g is None or not g.phenotypable:
                raise ValidationError(f"{sid}: planted tile {j} has no edges; raise the density")
            H.append(g.cf.h)
            labels.append(int(p))
            slides.append(sid)
    return PlantedTiles(np.asarray(H), np.asarray(labels, dtype=np.int64), slides, names)


# ----------------------------------------------------------------------------
# cohorts


@dataclass(frozen=True)
class CohortSpec:
    n: int
    logistic_intercept: float = -1.0
    logistic_coef: tuple[float, ...] = (0.0,)
    cox_coef: tuple[float, ...] = (0.0,)
    baseline_hazard: float = 0.1  # per year
    censoring_rate: float = 0.3
    feature_kind: tuple[str, ...] = ("uniform",)  # "uniform" on [0,1) or "binary"
    missing_rate: float = 0.0  # for clinical covariates
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("cohort needs n >= 2")
        if not 0.0 <= self.censoring_rate < 1.0:
            raise ValidationError("censoring rate must lie in [0, 1)")
        p = len(self.feature_kind)
        if len(self.logistic_coef) != p or len(self.cox_coef) != p:
            raise ValidationError("coefficient vectors must match the number of features")


@dataclass
class CohortTable:
    ids: list[str]
    features: np.ndarray  # (n, p), NaN for missing
    feature_names: list[str]
    differentiation: list[str | None]  # "MD" / "PD" / None
    histological_type: list[str | None]  # "adenocarcinoma" / "mucinous" / None
    t_stage: list[str | None]  # "pT3" / "pT4"
    metastasis_5yr: np.ndarray
    dmfs_time: np.ndarray  # NaN when missing
    event: np.ndarray  # NaN when missing
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    def clinical_matrix(self) -> tuple[list[str], np.ndarray]:
        """Indicator coding of the clinical covariates, NaN where missing."""
        def ind(vals, level):
            return [np.nan if v is None else float(v == level) for v in vals]
        cols = {
            "differentiation_PD": ind(self.differentiation, "PD"),
            "histology_mucinous": ind(self.histological_type, "mucinous"),
            "t_stage_pT4": ind(self.t_stage, "pT4"),
        }
        return list(cols), np.column_stack([np.asarray(v) for v in cols.values()])


_DIFF = {"WD": "MD", "MD": "MD", "PD": "PD"}
_HIST = {"adenocarcinoma", "mucinous"}
_STAGE = {"pT3", "pT4"}
CLINICAL_HEADER = ["slide_id", "differentiation", "histological_type", "t_stage",
                   "metastasis_5yr", "dmfs_years", "event"]


def write_clinical(table: CohortTable, path) -> None:
    def f(v):
        return "" if v is None or (isinstance(v, float) and math.isnan(v)) else v
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLINICAL_HEADER)
        for i, sid in enumerate(table.ids):
            t = table.dmfs_time[i]
            w.writerow([sid, f(table.differentiation[i]), f(table.histological_type[i]),
                        f(table.t_stage[i]), int(table.metastasis_5yr[i]),
                        "" if math.isnan(t) else repr(float(t)),
                        "" if math.isnan(table.event[i]) else int(table.event[i])])


def load_clinical(path) -> CohortTable:
    """Read the clinical CSV; well-differentiated is merged into moderate."""
    ids, diff, hist, stage, met, tt, ev = [], [], [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CLINICAL_HEADER:
            raise ParseError(f"expected header {','.join(CLINICAL_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CLINICAL_HEADER):
                raise ParseError(f"expected {len(CLINICAL_HEADER)} fields", path, lineno)
            sid, d, h, s, m, t, e = (x.strip() for x in row)
            if d and d not in _DIFF:
                raise ParseError(f"unknown differentiation {d!r}", path, lineno)
            if h and h not in _HIST:
                raise ParseError(f"unknown histological type {h!r}", path, lineno)
            if s and s not in _STAGE:
                raise ParseError(f"unknown T stage {s!r}", path, lineno)
            if m not in ("0", "1"):
                raise ParseError(f"metastasis_5yr must be 0 or 1, got {m!r}", path, lineno)
            if bool(t) != bool(e):
                raise ParseError("dmfs_years and event must be both present or both missing",
                                 path, lineno)
            try:
                tv = float(t) if t else math.nan
            except ValueError:
                raise ParseError(f"bad dmfs_years {t!r}", path, lineno) from None
            if t and tv < 0:
                raise ParseError("negative dmfs_years", path, lineno)
            if e and e not in ("0", "1"):
                raise ParseError(f"event must be 0 or 1, got {e!r}", path, lineno)
            ids.append(sid)
            diff.append(_DIFF[d] if d else None)
            hist.append(h or None)
            stage.append(s or None)
            met.append(int(m))
            tt.append(tv)
            ev.append(float(e) if e else math.nan)
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate slide ids")
    return CohortTable(ids, np.zeros((len(ids), 0)), [], diff, hist, stage,
                       np.asarray(met, dtype=np.int64), np.asarray(tt), np.asarray(ev))


def _censor_horizon(rates: np.ndarray, target: float) -> float:
    """Upper bound c of U(0, c) censoring giving the target censored fraction."""
    def frac(c):
        x = rates * c
        return float(np.mean(-np.expm1(-x) / x)) - target
    lo, hi = 1e-9, 1.0
    while frac(hi) > 0:
        hi *= 2.0
    return brentq(frac, lo, hi, xtol=1e-12)


def generate_cohort(spec: CohortSpec, features: np.ndarray | None = None,
                    ids: Sequence[str] | None = None,
                    feature_names: Sequence[str] | None = None) -> CohortTable:
    """Draw a cohort.  ``features`` overrides the feature generator (used to
    attach outcomes to the planted composition of synthetic slides)."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    p = len(spec.feature_kind)
    if features is None:
        cols = []
        for kind in spec.feature_kind:
            if kind == "uniform":
                cols.append(rng.random(n))
            elif kind == "binary":
                cols.append(rng.integers(0, 2, n).astype(float))
            else:
                raise ValidationError(f"unknown feature kind {kind!r}")
        X = np.column_stack(cols) if cols else np.zeros((n, 0))
    else:
        X = np.asarray(features, dtype=float).reshape(n, p)
        # keep the stream aligned with the generated-feature case
        rng.random(n * p)
    ids = list(ids) if ids is not None else [f"P{i:04d}" for i in range(n)]
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(p)]

    eta_log = spec.logistic_intercept + X @ np.asarray(spec.logistic_coef)
    met = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta_log))).astype(np.int64)

    rates = spec.baseline_hazard * np.exp(X @ np.asarray(spec.cox_coef))
    T = rng.exponential(1.0 / rates)
    U = rng.random(n)
    if spec.censoring_rate > 0:
        C = U * _censor_horizon(rates, spec.censoring_rate)
        time = np.minimum(T, C)
        event = (T <= C).astype(float)
    else:
        time, event = T, np.ones(n)

    diff = ["PD" if u < 0.25 else "MD" for u in rng.random(n)]
    hist = ["mucinous" if u < 0.15 else "adenocarcinoma" for u in rng.random(n)]
    stage = ["pT4" if u < 0.3 else "pT3" for u in rng.random(n)]
    if spec.missing_rate > 0:
        miss = rng.random((n, 2)) < spec.missing_rate
        diff = [None if m else v for v, m in zip(diff, miss[:, 0])]
        hist = [None if m else v for v, m in zip(hist, miss[:, 1])]
    return CohortTable(ids, X, names, diff, hist, stage, met, time, event,
                       meta={"seed": spec.seed})


# ----------------------------------------------------------------------------
# end-to-end fixture


@dataclass
class Fixture:
    slides: list[CellMap]
    grids: list[TissueLabelGrid]
    truth: dict[str, dict[tuple[int, int], str]]
    proportions: np.ndarray  # (n_slides, n_phenotypes) realised tissue fractions
    cohort: CohortTable


def generate_fixture(n_slides: int = 40, seed: int = 0, grid=(8, 8), density: float = 1000.0,
                     concentration: float = 2.0, cox_coef=None, logistic_coef=None,
                     censoring_rate: float = 0.3) -> Fixture:
    """Slides with the six planted phenotypes plus a cohort whose outcomes
    depend on each slide's realised phenotype fractions."""
    rng = np.random.default_rng(seed)
    names = list(PLANTED_PHENOTYPES)
    k = len(names)
    slides, grids, truth, props = [], [], {}, []
    for s in range(n_slides):
        sid = f"S{s:03d}"
        mix = rng.dirichlet(np.full(k, concentration))
        spec, tr = planted_slide_spec(sid, mix, rng, grid=grid, density=density)
        cmap, g = generate_slide(spec)
        slides.append(cmap)
        grids.append(g)
        truth[sid] = tr
        n_tissue = sum(1 for lab in g.labels.values() if lab not in ("normal", "fat", "background"))
        cnt = Counter(tr.values())
        props.append([cnt.get(nm, 0) / max(n_tissue, 1) for nm in names])
    P = np.asarray(props)
    if cox_coef is None:
        cox_coef = tuple(-3.0 if nm == "inflammation" else 2.0 if nm == "smooth_muscle" else 0.0
                         for nm in names)
    if logistic_coef is None:
        logistic_coef = tuple(-4.0 if nm == "inflammation" else 3.0 if nm == "smooth_muscle" else 0.0
                              for nm in names)
    cspec = CohortSpec(n=n_slides, logistic_intercept=-0.5, logistic_coef=tuple(logistic_coef),
                       cox_coef=tuple(cox_coef), baseline_hazard=0.15,
                       censoring_rate=censoring_rate, feature_kind=("uniform",) * k,
                       seed=int(rng.integers(2**31)))
    cohort = generate_cohort(cspec, features=P, ids=[c.slide_id for c in slides],
                             feature_names=[f"planted_{nm}" for nm in names])
    return Fixture(slides, grids, truth, P, cohort)
