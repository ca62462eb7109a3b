"""Kaplan-Meier curves, log-rank tests and minimum-p stratification."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from ..errors import ValidationError

Z95 = 1.959963984540054
ALTMAN_DOMAIN = 0.1
MIN_STRATUM_FRACTION = 0.1


class AltmanDomainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KMCurve:
    times: np.ndarray  # distinct event times, ascending
    survival: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    censor_times: np.ndarray
    n: int

    def __call__(self, t) -> np.ndarray:
        """S(t), right-continuous, with S = 1 before the first event."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        s = np.r_[1.0, self.survival]
        return s[idx]

    def rows(self):
        """(t, S, lo, hi, at_risk) starting at t = 0."""
        yield 0.0, 1.0, 1.0, 1.0, self.n
        for row in zip(self.times, self.survival, self.ci_lower, self.ci_upper, self.at_risk):
            yield tuple(float(v) for v in row[:4]) + (int(row[4]),)


def _check_survival(times, events):
    t = np.asarray(times, dtype=float).ravel()
    e = np.asarray(events).ravel()
    if len(t) != len(e):
        raise ValidationError("times and events differ in length")
    if len(t) == 0:
        raise ValidationError("need at least one observation")
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise ValidationError("survival times must be finite and non-negative")
    if not np.all((e == 0) | (e == 1)):
        raise ValidationError("events must be 0/1")
    return t, e.astype(bool)


def kaplan_meier(times, events) -> KMCurve:
    """Product-limit estimate with Greenwood log-scale 95% intervals."""
    t, e = _check_survival(times, events)
    ev_times = np.unique(t[e])
    ts = np.sort(t)
    at_risk = len(t) - np.searchsorted(ts, ev_times, side="left")
    d = np.array([np.count_nonzero(t[e] == u) for u in ev_times], dtype=float)
    surv = np.cumprod(1.0 - d / at_risk)
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.cumsum(d / (at_risk * (at_risk - d)))
        half = Z95 * np.sqrt(gw)
        lo = np.where(surv > 0, surv * np.exp(-half), 0.0)
        hi = np.where(surv > 0, np.minimum(surv * np.exp(half), 1.0), 0.0)
    return KMCurve(ev_times, surv, lo, hi, at_risk.astype(np.int64), d.astype(np.int64),
                   np.sort(t[~e]), len(t))


@dataclass(frozen=True)
class LogRankResult:
    chi2: float
    p: float
    df: int
    observed: np.ndarray
    expected: np.ndarray


def logrank(groups, times, events) -> LogRankResult:
    """k-sample log-rank test with hypergeometric variance."""
    t, e = _check_survival(times, events)
    g = np.asarray(groups).ravel()
    if len(g) != len(t):
        raise ValidationError("groups, times and events differ in length")
    labels = sorted(set(g.tolist()))
    G = len(labels)
    if G < 2:
        raise ValidationError("log-rank test needs at least two groups")
    ev_times = np.unique(t[e])
    n_gt = np.empty((G, len(ev_times)))
    d_gt = np.empty((G, len(ev_times)))
    for i, lab in enumerate(labels):
        m = g == lab
        tg = np.sort(t[m])
        n_gt[i] = len(tg) - np.searchsorted(tg, ev_times, side="left")
        eg = np.sort(t[m & e])
        d_gt[i] = np.searchsorted(eg, ev_times, side="right") - np.searchsorted(eg, ev_times, side="left")
    n_t = n_gt.sum(axis=0)
    d_t = d_gt.sum(axis=0)
    O = d_gt.sum(axis=1)
    E = (n_gt * (d_t / n_t)).sum(axis=1)
    frac = n_gt / n_t
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(n_t > 1, d_t * (n_t - d_t) / (n_t - 1), 0.0)
    V = np.einsum("t,it,jt->ij", c, frac, -frac)
    V[np.diag_indices(G)] += (c * frac).sum(axis=1)
    diff = (O - E)[:-1]
    Vr = V[:-1, :-1]
    if np.allclose(diff, 0.0):
        stat = 0.0
    else:
        stat = float(diff @ np.linalg.pinv(Vr) @ diff)
    return LogRankResult(stat, float(chi2.sf(stat, G - 1)), G - 1, O, E)


def altman_adjust(p_min: float) -> float:
    """Correct a minimum p-value found by scanning cutpoints (10% trimmed).

    Outside p_min < 0.1 the approximation is not valid; the clamped value is
    still returned but an :class:`AltmanDomainWarning` is issued.
    """
    if not 0.0 <= p_min <= 1.0:
        raise ValidationError(f"p-value out of range: {p_min}")
    if p_min == 0.0:
        return 0.0
    raw = -1.63 * p_min * (1.0 + 2.35 * math.log(p_min))
    if p_min >= ALTMAN_DOMAIN:
        warnings.warn(
            f"Altman correction used outside its validity range (p_min={p_min:.4g})",
            AltmanDomainWarning,
            stacklevel=2,
        )
    return float(min(max(raw, p_min), 1.0))


@dataclass(frozen=True)
class CutoffResult:
    cutoff: float
    p_min: float
    p_adj: float
    chi2: float
    low: KMCurve
    high: KMCurve
    n_low: int
    n_high: int
    in_domain: bool = True


def candidate_cutoffs(values, min_fraction: float = MIN_STRATUM_FRACTION) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    u = np.unique(v)
    mids = (u[:-1] + u[1:]) / 2.0
    n = len(v)
    n_low = np.searchsorted(np.sort(v), mids, side="right")
    ok = (n_low >= min_fraction * n) & (n - n_low >= min_fraction * n)
    return mids[ok]


def optimal_cutoff_stratify(values, times, events) -> CutoffResult:
    """Two-group split minimising the log-rank p-value, Altman-adjusted.

    Candidates are midpoints between consecutive distinct values leaving at
    least 10% of cases on each side; ties in p go to the candidate nearest
    the median.
    """
    v = np.asarray(values, dtype=float).ravel()
    t, e = _check_survival(times, events)
    if len(v) != len(t):
        raise ValidationError("values, times and events differ in length")
    if len(v) < 10:
        raise ValidationError(f"need at least 10 observations, got {len(v)}")
    cands = candidate_cutoffs(v)
    if len(cands) == 0:
        raise ValidationError("no admissible cutoff")
    results = [logrank(v > c, t, e) for c in cands]
    ps = np.array([r.p for r in results])
    pmin = ps.min()
    tied = np.flatnonzero(ps <= pmin * (1 + 1e-12))
    med = np.median(v)
    best = min(tied, key=lambda i: (abs(cands[i] - med), cands[i]))
    cut = float(cands[best])
    low = v <= cut
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AltmanDomainWarning)
        p_adj = altman_adjust(float(ps[best]))
    return CutoffResult(
        cutoff=cut,
        p_min=float(ps[best]),
        p_adj=p_adj,
        chi2=results[best].chi2,
        low=kaplan_meier(t[low], e[low]),
        high=kaplan_meier(t[~low], e[~low]),
        n_low=int(low.sum()),
        n_high=int((~low).sum()),
        in_domain=bool(ps[best] < ALTMAN_DOMAIN),
    )
