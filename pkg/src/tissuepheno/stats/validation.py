"""Discrimination measures and bootstrap optimism correction."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from ..errors import EstimationError, TissuePhenoError, ValidationError

log = logging.getLogger(__name__)


def roc_auc(scores, labels) -> float:
    """P(score of a positive > score of a negative), ties counted as 1/2."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes present")
    r = rankdata(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def concordance_index(risk, times, events) -> float:
    """Harrell's C for a risk score (higher means earlier event).

    A pair is usable when the shorter time is an observed event; tied risk
    scores count 1/2.
    """
    risk = np.asarray(risk, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events).astype(bool)
    num = 0.0
    den = 0
    for i in np.flatnonzero(e):
        later = t > t[i]
        m = int(later.sum())
        if m == 0:
            continue
        den += m
        num += np.sum(risk[i] > risk[later]) + 0.5 * np.sum(risk[i] == risk[later])
    if den == 0:
        raise ValidationError("no usable pairs for the concordance index")
    return float(num / den)


@dataclass(frozen=True)
class BootstrapResult:
    apparent: float
    optimism: float
    corrected: float
    replicates: int
    failures: int


def bootstrap_auc(fit: Callable, evaluate: Callable, n: int, B: int = 100,
                  seed: int = 0) -> BootstrapResult:
    """Optimism-corrected discrimination by resampling patients.

    ``fit(rows)`` fits a model on the given row indices (with repeats) and
    ``evaluate(model, rows)`` returns its AUC on rows.  Replicate b draws
    from ``default_rng(seed + b)``; the optimism of a replicate is its AUC on
    its own sample minus its AUC on the original sample.
    """
    if B < 0:
        raise ValidationError(f"B must be >= 0, got {B}")
    everyone = np.arange(n)
    apparent = float(evaluate(fit(everyone), everyone))
    optimism = []
    failures = 0
    for b in range(B):
        rows = np.random.default_rng(seed + b).integers(0, n, size=n)
        try:
            model = fit(rows)
            optimism.append(evaluate(model, rows) - evaluate(model, everyone))
        except TissuePhenoError as exc:
            failures += 1
            log.debug("bootstrap replicate %d skipped: %s", b, exc)
    if B and failures > B / 2:
        raise EstimationError(f"{failures} of {B} bootstrap replicates failed")
    opt = float(np.mean(optimism)) if optimism else 0.0
    return BootstrapResult(apparent, opt, apparent - opt, B, failures)
