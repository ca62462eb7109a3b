"""Cox proportional hazards regression (Breslow ties)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from ..errors import CollinearityError, DivergenceError, NoEventsError, ValidationError

MAX_ITER = 100
GRAD_TOL = 1e-8
STEP_TOL = 1e-6
DIVERGENCE_BETA = 15.0
Z95 = 1.959963984540054


def partial_likelihood(beta, X, times, events, hessian: bool = True):
    """Breslow log partial likelihood, gradient and Hessian."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    order = np.argsort(-t, kind="stable")
    X, t, e = X[order], t[order], e[order]
    eta = X @ beta
    shift = eta.max()
    w = np.exp(eta - shift)
    S0 = np.cumsum(w)
    S1 = np.cumsum(w[:, None] * X, axis=0)
    # last position of each run of equal times (descending order)
    ends = np.flatnonzero(np.r_[t[1:] != t[:-1], True])
    starts = np.r_[0, ends[:-1] + 1]
    d = np.add.reduceat(e.astype(float), starts)
    xs = np.add.reduceat(X * e[:, None], starts, axis=0)
    es = np.add.reduceat(eta * e, starts)
    keep = d > 0
    d, xs, es, ends = d[keep], xs[keep], es[keep], ends[keep]
    s0 = S0[ends]
    s1 = S1[ends]
    ll = float(np.sum(es - d * (np.log(s0) + shift)))
    xbar = s1 / s0[:, None]
    grad = np.sum(xs - d[:, None] * xbar, axis=0)
    if not hessian:
        return ll, grad
    S2 = np.cumsum(w[:, None, None] * X[:, :, None] * X[:, None, :], axis=0)[ends]
    H = -np.sum(d[:, None, None] * (S2 / s0[:, None, None]
                                    - xbar[:, :, None] * xbar[:, None, :]), axis=0)
    return ll, grad, H


@dataclass(frozen=True)
class CoxFit:
    names: tuple[str, ...]
    beta: np.ndarray
    cov: np.ndarray
    loglik: float
    loglik_null: float
    deltas: np.ndarray
    score_stat: float
    score_p: float
    n: int
    n_events: int
    iterations: int
    converged: bool

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def hr_factor(self, name: str) -> tuple[float, float, float]:
        """Hazard-ratio factor and 95% Wald CI for the configured change."""
        j = self.names.index(name)
        b, s, d = self.beta[j], self.se[j], self.deltas[j]
        lo, hi = sorted((np.exp((b - Z95 * s) * d), np.exp((b + Z95 * s) * d)))
        return float(np.exp(b * d)), float(lo), float(hi)

    def wald_p(self, name: str) -> float:
        j = self.names.index(name)
        return float(2.0 * norm.sf(abs(self.beta[j] / self.se[j])))

    @property
    def lr_p(self) -> float:
        stat = max(2.0 * (self.loglik - self.loglik_null), 0.0)
        return float(chi2.sf(stat, len(self.beta)))

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X[:, None] if X.ndim == 1 else X) @ self.beta


def score_test(X, times, events) -> tuple[float, float]:
    """Rao score test of beta = 0; returns (statistic, p)."""
    X = _design(X)
    _, U, H = partial_likelihood(np.zeros(X.shape[1]), X, times, events)
    try:
        stat = float(U @ np.linalg.solve(-H, U))
    except np.linalg.LinAlgError:
        raise CollinearityError("singular information at beta = 0") from None
    return stat, float(chi2.sf(stat, X.shape[1]))


def _design(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def cox_fit(X, times, events, feature_deltas=None, names=None) -> CoxFit:
    """Maximise the Breslow partial likelihood by damped Newton-Raphson."""
    X = _design(X)
    t = np.asarray(times, dtype=float).ravel()
    e = np.asarray(events).ravel()
    n, p = X.shape
    if len(t) != n or len(e) != n:
        raise ValidationError("X, times and events must have the same length")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(t)):
        raise ValidationError("missing or non-finite values in Cox inputs")
    if np.any(t < 0):
        raise ValidationError("negative survival time")
    if not np.all((e == 0) | (e == 1)):
        raise ValidationError("events must be 0/1")
    e = e.astype(bool)
    if not e.any():
        raise NoEventsError("no events observed")
    const = np.ptp(X, axis=0) == 0
    if const.any():
        raise ValidationError(f"constant covariate(s) at columns {np.flatnonzero(const).tolist()}")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    deltas = np.ones(p) if feature_deltas is None else np.asarray(feature_deltas, dtype=float)

    center = X.mean(axis=0)
    scale = X.std(axis=0)
    Xs = (X - center) / scale
    if np.linalg.matrix_rank(Xs) < p:
        raise CollinearityError("design matrix is rank deficient")

    theta = np.zeros(p)
    ll, g, H = partial_likelihood(theta, Xs, t, e)
    ll_null = ll
    try:
        score_stat = float(g @ np.linalg.solve(-H, g))
    except np.linalg.LinAlgError:
        raise CollinearityError("singular information at beta = 0") from None
    it = 0
    converged = False
    while True:
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            raise CollinearityError("singular information matrix") from None
        # a vanishing gradient with a large Newton step is a flat ridge, not an optimum
        if np.max(np.abs(g / scale)) < GRAD_TOL and np.max(np.abs(step)) < STEP_TOL:
            converged = True
            break
        if it == MAX_ITER:
            break
        for _ in range(30):
            cand = theta + step
            ll_new, g_new, H_new = partial_likelihood(cand, Xs, t, e)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2.0
        theta, ll, g, H = cand, ll_new, g_new, H_new
        it += 1
        if np.any(np.abs(theta) > DIVERGENCE_BETA):
            raise DivergenceError("monotone partial likelihood: coefficient diverges")
    beta = theta / scale
    _, _, H_orig = partial_likelihood(beta, X, t, e)
    try:
        cov = np.linalg.inv(-H_orig)
    except np.linalg.LinAlgError:
        raise CollinearityError("singular information matrix") from None
    return CoxFit(
        names=names,
        beta=beta,
        cov=cov,
        loglik=ll,
        loglik_null=ll_null,
        deltas=deltas,
        score_stat=score_stat,
        score_p=float(chi2.sf(score_stat, p)),
        n=n,
        n_events=int(e.sum()),
        iterations=it,
        converged=converged,
    )
