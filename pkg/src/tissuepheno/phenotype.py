"""CF tissue phenotypes: k-medoid clustering under the chi-squared distance.

Each run alternates nearest-medoid assignment with an in-cluster medoid
update.  The best of many seeded restarts (lowest total cost, ties to the
lowest restart index) is returned.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import __version__
from .cellgraph import CFVector, N_PAIRS, chi_squared_distance, chi_squared_matrix
from .errors import (
    InsufficientDataError,
    NotAssignableError,
    UndefinedCorrelationError,
    ValidationError,
)

log = logging.getLogger(__name__)

MAX_ITER = 300
DEFAULT_RESTARTS = 100
MIN_MEDOID_DISTANCE = 0.2
MAX_FEATURE_CORRELATION = 0.8
DEFAULT_K_RANGE = (2, 10)


@dataclass(frozen=True)
class PhenotypeModel:
    k: int
    medoids: np.ndarray  # (k, 10)
    medoid_indices: tuple[int, ...]
    labels: np.ndarray  # phenotype of each input vector
    total_cost: float
    seed: int = 0
    restarts: int = 1
    restart_costs: tuple[float, ...] = field(default=(), compare=False)
    iterations: int = 0

    def assign(self, h) -> int:
        return assign(self, h)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "medoids": [[float(v) for v in row] for row in self.medoids],
            "medoid_indices": list(self.medoid_indices),
            "total_cost": float(self.total_cost),
            "seed": self.seed,
            "restarts": self.restarts,
            "thresholds": {
                "min_medoid_distance": MIN_MEDOID_DISTANCE,
                "max_feature_correlation": MAX_FEATURE_CORRELATION,
            },
            "version": __version__,
        }

    @classmethod
    def from_json(cls, obj: dict, labels=None) -> "PhenotypeModel":
        medoids = np.asarray(obj["medoids"], dtype=float)
        if medoids.shape != (obj["k"], N_PAIRS):
            raise ValidationError(f"medoid array has shape {medoids.shape}")
        return cls(
            k=int(obj["k"]),
            medoids=medoids,
            medoid_indices=tuple(obj.get("medoid_indices", ())),
            labels=np.asarray(labels if labels is not None else [], dtype=np.int64),
            total_cost=float(obj["total_cost"]),
            seed=int(obj.get("seed", 0)),
            restarts=int(obj.get("restarts", 1)),
        )


def save_model(model: PhenotypeModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> PhenotypeModel:
    with open(path, encoding="utf-8") as fh:
        return PhenotypeModel.from_json(json.load(fh))


def _as_matrix(data) -> np.ndarray:
    if len(data) and isinstance(data[0], CFVector):
        X = np.array([v.h for v in data], dtype=float)
    else:
        X = np.asarray(data, dtype=float)
    if X.size == 0:
        return X.reshape(0, N_PAIRS)
    return X.reshape(len(X), -1)


def _nearest(D: np.ndarray, medoids: np.ndarray):
    """argmin over medoid columns, ties to the lowest medoid position."""
    sub = D[:, medoids]
    lab = np.argmin(sub, axis=1)
    return lab, sub[np.arange(len(lab)), lab]


def _single_run(D: np.ndarray, k: int, rng: np.random.Generator, history=None):
    n = D.shape[0]
    medoids = np.sort(rng.choice(n, size=k, replace=False))
    labels, dist = _nearest(D, medoids)
    if history is not None:
        history.append(float(dist.sum()))
    it = 0
    for it in range(1, MAX_ITER + 1):
        new_medoids = medoids.copy()
        onehot = np.zeros((k, n))
        onehot[labels, np.arange(n)] = 1.0
        # within-cluster cost of every point as candidate medoid of every cluster
        within = onehot @ D
        for j in range(k):
            members = np.flatnonzero(labels == j)
            if members.size == 0:
                # reseed to the point farthest from its nearest medoid
                _, d_now = _nearest(D, new_medoids)
                new_medoids[j] = int(np.argmax(d_now))
                continue
            costs = within[j, members]
            best = members[int(np.argmin(costs))]
            # keep the current medoid unless strictly improved
            if medoids[j] in members:
                cur = costs[np.searchsorted(members, medoids[j])]
                if not costs.min() < cur:
                    best = medoids[j]
            new_medoids[j] = best
        new_labels, dist = _nearest(D, new_medoids)
        if history is not None:
            history.append(float(dist.sum()))
        changed = not (np.array_equal(new_labels, labels) and np.array_equal(new_medoids, medoids))
        medoids, labels = new_medoids, new_labels
        if not changed:
            break
    return medoids, labels, float(dist.sum()), it


def kmedoids(data, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0, *,
             distances: np.ndarray | None = None, allow_k1: bool = False) -> PhenotypeModel:
    """Cluster CF vectors into k phenotypes.

    ``distances`` may carry a precomputed chi-squared matrix for ``data``.
    ``allow_k1`` admits k = 1, used only for diagnostics.
    """
    X = _as_matrix(data)
    n = X.shape[0]
    if k < 1 or (k < 2 and not allow_k1):
        raise ValidationError(f"k must be >= 2, got {k}")
    if n < k:
        raise InsufficientDataError(f"{n} vectors cannot form {k} clusters")
    if restarts < 1:
        raise ValidationError(f"restarts must be >= 1, got {restarts}")
    if np.any(X.sum(axis=1) <= 0):
        raise ValidationError("all-zero CF vectors cannot be clustered")
    D = chi_squared_matrix(X) if distances is None else distances
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    costs = []
    for r, ss in enumerate(seeds):
        run = _single_run(D, k, np.random.default_rng(ss))
        costs.append(run[2])
        if best is None or run[2] < best[2]:
            best = run
    medoids, labels, cost, iters = best
    return PhenotypeModel(
        k=k,
        medoids=X[medoids].copy(),
        medoid_indices=tuple(int(i) for i in medoids),
        labels=labels.astype(np.int64),
        total_cost=cost,
        seed=seed,
        restarts=restarts,
        restart_costs=tuple(costs),
        iterations=iters,
    )


def assign(model: PhenotypeModel, h) -> int:
    """Nearest medoid by chi-squared distance; ties go to the lowest index."""
    v = h.array if isinstance(h, CFVector) else np.asarray(h, dtype=float)
    if not np.any(v > 0):
        raise NotAssignableError("all-zero CF vector has no phenotype")
    d = [chi_squared_distance(v, m) for m in model.medoids]
    return int(np.argmin(d))


def assign_many(model: PhenotypeModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if np.any(X.sum(axis=1) <= 0):
        raise NotAssignableError("all-zero CF vector has no phenotype")
    return np.argmin(chi_squared_matrix(X, model.medoids), axis=1).astype(np.int64)


# ----------------------------------------------------------------------------
# choice of k


@dataclass(frozen=True)
class KSelectionRow:
    k: int
    min_medoid_distance: float
    max_abs_spearman: float
    total_cost: float

    @property
    def passes(self) -> bool:
        return (self.min_medoid_distance >= MIN_MEDOID_DISTANCE
                and not self.max_abs_spearman > MAX_FEATURE_CORRELATION)


@dataclass(frozen=True)
class KSelectionReport:
    rows: tuple[KSelectionRow, ...]
    chosen_k: int
    fallback: bool = False
    min_medoid_distance: float = MIN_MEDOID_DISTANCE
    max_feature_correlation: float = MAX_FEATURE_CORRELATION

    def to_json(self) -> dict:
        return {
            "chosen_k": self.chosen_k,
            "fallback": self.fallback,
            "thresholds": {
                "min_medoid_distance": self.min_medoid_distance,
                "max_feature_correlation": self.max_feature_correlation,
            },
            "rows": [
                {
                    "k": r.k,
                    "min_medoid_distance": r.min_medoid_distance,
                    "max_abs_spearman": r.max_abs_spearman,
                    "total_cost": r.total_cost,
                    "passes": r.passes,
                }
                for r in self.rows
            ],
        }


def slide_ratio_matrix(labels, slides, k: int, denominators=None):
    """Per-slide fraction of tiles in each phenotype, shape (n_slides, k).

    ``denominators`` maps slide id to its tissue tile count; by default the
    number of clustered tiles of that slide is used.
    """
    slides = np.asarray(slides)
    ids = sorted(set(slides.tolist()))
    R = np.zeros((len(ids), k))
    for s, sid in enumerate(ids):
        lab = labels[slides == sid]
        den = len(lab) if denominators is None else denominators[sid]
        if den > 0:
            R[s] = np.bincount(lab, minlength=k)[:k] / den
    return ids, R


def max_abs_spearman(R: np.ndarray) -> float:
    """Largest |rho| over pairs of columns; constant columns are skipped."""
    from .stats.association import spearman

    best = 0.0
    for i, j in combinations(range(R.shape[1]), 2):
        try:
            rho = spearman(R[:, i], R[:, j])
        except UndefinedCorrelationError:
            continue
        best = max(best, abs(rho))
    return best


def min_medoid_distance(medoids: np.ndarray) -> float:
    if len(medoids) < 2:
        return float("inf")
    return float(min(chi_squared_distance(a, b) for a, b in combinations(medoids, 2)))


def select_k(data, slides: Sequence, k_range=DEFAULT_K_RANGE, seed: int = 0,
             restarts: int = DEFAULT_RESTARTS, denominators=None,
             return_models: bool = False):
    """Largest k whose medoids are pairwise >= 0.2 apart and whose slide-level
    phenotype ratios have no pairwise Spearman |rho| above 0.8."""
    X = _as_matrix(data)
    if X.shape[0] == 0:
        raise ValidationError("no CF vectors to cluster")
    lo, hi = int(k_range[0]), int(k_range[1])
    if not (2 <= lo <= hi <= 12):
        raise ValidationError(f"k range must lie within [2, 12], got {k_range}")
    if len(set(np.asarray(slides).tolist())) < 2:
        raise ValidationError("need at least 2 slides for the correlation criterion")
    D = chi_squared_matrix(X)
    rows, models = [], {}
    for k in range(lo, min(hi, X.shape[0]) + 1):
        model = kmedoids(X, k, restarts=restarts, seed=seed, distances=D)
        _, R = slide_ratio_matrix(model.labels, slides, k, denominators)
        rows.append(KSelectionRow(k, min_medoid_distance(model.medoids),
                                  max_abs_spearman(R), model.total_cost))
        models[k] = model
    passing = [r.k for r in rows if r.passes]
    if passing:
        chosen, fallback = max(passing), False
    else:
        chosen = max(rows, key=lambda r: (r.min_medoid_distance, -r.k)).k
        fallback = True
        log.warning("no k in %s meets both criteria; falling back to k=%d", k_range, chosen)
    report = KSelectionReport(tuple(rows), chosen, fallback)
    if return_models:
        return report, models
    return report
