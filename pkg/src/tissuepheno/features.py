"""Slide-level phenotypic signatures.

Areas are counted in whole tiles.  Undefined ratios (empty denominators)
raise :class:`UndefinedRatioError` from the single-feature functions and
become ``None`` in :func:`slide_features`.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cellmap import COUNTED_CATEGORIES, NON_TISSUE, CellMap, TissueLabelGrid
from .errors import UndefinedRatioError, ValidationError


@dataclass(frozen=True)
class SlideFeatures:
    slide_id: str
    cf_ratio: dict[int, float | None]
    ap_ratio: dict[str, float | None]
    morisita: float | None
    stroma_tumor: float | None
    necrosis_tumor: float | None
    unphenotyped_fraction: float | None = None

    def as_row(self, k: int) -> dict[str, float | None]:
        row: dict[str, float | None] = {}
        for p in range(k):
            row[f"cf_ratio_{p}"] = self.cf_ratio.get(p)
        for c in COUNTED_CATEGORIES:
            row[f"ap_{c}"] = self.ap_ratio.get(c)
        row["morisita"] = self.morisita
        row["stroma_tumor"] = self.stroma_tumor
        row["necrosis_tumor"] = self.necrosis_tumor
        return row


def feature_columns(k: int) -> list[str]:
    return ([f"cf_ratio_{p}" for p in range(k)]
            + [f"ap_{c}" for c in COUNTED_CATEGORIES]
            + ["morisita", "stroma_tumor", "necrosis_tumor"])


def tissue_tiles(grid: TissueLabelGrid) -> set[tuple[int, int]]:
    """Addresses of tiles that count towards the total tissue area."""
    return {addr for addr, lab in grid.labels.items() if lab not in NON_TISSUE}


def cf_phenotype_ratios(assignments: Mapping[tuple[int, int], int], tissue,
                        k: int | None = None) -> dict[int, float]:
    """Fraction of tissue tiles carrying each CF phenotype.

    Tissue tiles without a phenotype (too few cells) count in the
    denominator only; phenotyped tiles outside the tissue are ignored.
    """
    tissue = set(tissue)
    if not tissue:
        raise UndefinedRatioError("slide has no tissue tiles")
    counts = Counter(p for addr, p in assignments.items() if addr in tissue and p is not None)
    if k is None:
        k = max((p for p in assignments.values() if p is not None), default=-1) + 1
    return {p: counts.get(p, 0) / len(tissue) for p in range(k)}


def ap_phenotype_ratios(grid: TissueLabelGrid) -> dict[str, float]:
    counts = Counter(lab for lab in grid.labels.values() if lab not in NON_TISSUE)
    total = sum(counts.values())
    if total == 0:
        raise UndefinedRatioError(f"{grid.slide_id}: no tissue tiles")
    return {c: counts.get(c, 0) / total for c in COUNTED_CATEGORIES}


def area_pair_ratio(a_area: float, b_area: float) -> float:
    if a_area < 0 or b_area < 0:
        raise ValidationError(f"areas must be non-negative, got {a_area}, {b_area}")
    if a_area + b_area == 0:
        raise UndefinedRatioError("both areas are zero")
    return a_area / (a_area + b_area)


def morisita_horn(x: Sequence[float], y: Sequence[float]) -> float:
    """Morisita-Horn overlap of two count vectors over the same quadrats."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X, Y = x.sum(), y.sum()
    if X == 0 or Y == 0:
        raise UndefinedRatioError("Morisita index needs both populations present")
    dx = np.dot(x, x) / X**2
    dy = np.dot(y, y) / Y**2
    mh = 2.0 * np.dot(x, y) / ((dx + dy) * X * Y)
    return float(min(max(mh, 0.0), 1.0))


def quadrat_counts(cmap: CellMap, quadrat_size: float, cls: str) -> np.ndarray:
    if not quadrat_size > 0:
        raise ValidationError(f"quadrat_size must be positive, got {quadrat_size}")
    rows, cols = cmap.grid_shape(quadrat_size)
    counts = np.zeros((rows, cols), dtype=np.int64)
    for c in cmap.cells:
        if c.cls == cls:
            counts[int(c.y // quadrat_size), int(c.x // quadrat_size)] += 1
    return counts.ravel()


def morisita_index(cmap: CellMap, quadrat_size: float = 200.0) -> float:
    """Co-localisation of inflammatory (I) and malignant (M) cells."""
    return morisita_horn(quadrat_counts(cmap, quadrat_size, "I"),
                         quadrat_counts(cmap, quadrat_size, "M"))


def _or_none(fn, *args):
    try:
        return fn(*args)
    except UndefinedRatioError:
        return None


def slide_features(grid: TissueLabelGrid, assignments: Mapping[tuple[int, int], int], k: int,
                   cmap: CellMap | None = None, quadrat_size: float = 200.0) -> SlideFeatures:
    """Every slide-level feature; undefined values come back as None."""
    tissue = tissue_tiles(grid)
    cf = _or_none(cf_phenotype_ratios, assignments, tissue, k)
    if cf is None:
        cf = {p: None for p in range(k)}
        unphen = None
    else:
        unphen = 1.0 - sum(cf.values())
    ap = _or_none(ap_phenotype_ratios, grid) or {c: None for c in COUNTED_CATEGORIES}
    counts = Counter(grid.labels.values())
    return SlideFeatures(
        slide_id=grid.slide_id,
        cf_ratio=cf,
        ap_ratio=ap,
        morisita=None if cmap is None else _or_none(morisita_index, cmap, quadrat_size),
        stroma_tumor=_or_none(area_pair_ratio, counts["stroma"], counts["tumor"]),
        necrosis_tumor=_or_none(area_pair_ratio, counts["necrosis"], counts["tumor"]),
        unphenotyped_fraction=unphen,
    )


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def write_feature_table(features: Sequence[SlideFeatures], k: int, path) -> None:
    cols = feature_columns(k)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slide_id", *cols])
        for f in sorted(features, key=lambda f: f.slide_id):
            row = f.as_row(k)
            w.writerow([f.slide_id, *(_fmt(row[c]) for c in cols)])


def read_feature_table(path) -> tuple[list[str], list[str], np.ndarray]:
    """(slide_ids, column names, values) with missing entries as NaN."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "slide_id":
        raise ValidationError(f"{path}: not a feature table")
    cols = rows[0][1:]
    ids = [r[0] for r in rows[1:]]
    vals = np.array([[float(v) if v != "" else np.nan for v in r[1:]] for r in rows[1:]],
                    dtype=float).reshape(len(ids), len(cols))
    return ids, cols, vals
