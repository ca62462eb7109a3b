"""Rank-based association tests."""
from __future__ import annotations

from itertools import combinations
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, rankdata

from ..errors import UndefinedCorrelationError, ValidationError

EXACT_LIMIT = 10


class MannWhitneyResult(NamedTuple):
    U: float
    p: float
    r2: float
    z: float


def mann_whitney(xs, ys) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test with effect size r^2 = Z^2 / N.

    U is the statistic of ``xs``.  For N <= 10 the p-value comes from full
    enumeration of the rank splits (mid-ranks under ties); otherwise from the
    tie-corrected normal approximation without continuity correction.
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValidationError("Mann-Whitney needs two non-empty samples")
    N = n1 + n2
    ranks = rankdata(np.concatenate([x, y]))
    U = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    _, t = np.unique(ranks, return_counts=True)
    ties = (t**3 - t).sum()
    var = n1 * n2 / 12.0 * ((N + 1) - ties / (N * (N - 1))) if N > 1 else 0.0
    z = (U - mu) / np.sqrt(var) if var > 0 else 0.0
    if N <= EXACT_LIMIT:
        obs = abs(U - mu)
        hits = total = 0
        for idx in combinations(range(N), n1):
            u = ranks[list(idx)].sum() - n1 * (n1 + 1) / 2.0
            hits += abs(u - mu) >= obs - 1e-9
            total += 1
        p = hits / total
    else:
        p = float(2.0 * norm.sf(abs(z)))
    return MannWhitneyResult(float(U), float(min(p, 1.0)), float(z * z / N), float(z))


def spearman(xs, ys) -> float:
    """Spearman's rho as the Pearson correlation of mid-ranks."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if len(x) != len(y) or len(x) < 2:
        raise ValidationError("spearman needs two samples of equal length >= 2")
    rx = rankdata(x) - (len(x) + 1) / 2.0
    ry = rankdata(y) - (len(y) + 1) / 2.0
    sxx, syy = np.dot(rx, rx), np.dot(ry, ry)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("spearman correlation undefined for constant input")
    rho = np.dot(rx, ry) / np.sqrt(sxx * syy)
    return float(np.clip(rho, -1.0, 1.0))


def interquartile_delta(values) -> tuple[float, float, float]:
    """(Q1, Q3, Q3 - Q1) with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    q1, q3 = np.quantile(v, [0.25, 0.75], method="linear")
    return float(q1), float(q3), float(q3 - q1)
