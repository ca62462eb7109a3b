"""Logistic regression by Newton-Raphson maximum likelihood."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from ..errors import CollinearityError, SeparationError, ValidationError
from .validation import roc_auc

MAX_ITER = 100
GRAD_TOL = 1e-8
STEP_TOL = 1e-6
SEPARATION_BETA = 15.0
Z95 = 1.959963984540054


def loglik(beta, Z, y) -> float:
    eta = Z @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def gradient(beta, Z, y) -> np.ndarray:
    mu = _expit(Z @ beta)
    return Z.T @ (y - mu)


def information(beta, Z) -> np.ndarray:
    mu = _expit(Z @ beta)
    w = mu * (1.0 - mu)
    return (Z * w[:, None]).T @ Z


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


@dataclass(frozen=True)
class LogisticFit:
    names: tuple[str, ...]
    coef: np.ndarray  # intercept first
    cov: np.ndarray
    loglik: float
    deltas: np.ndarray
    lr_p: dict[str, float]
    auc: float
    n: int
    iterations: int
    converged: bool

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def beta(self) -> np.ndarray:
        return self.coef[1:]

    def or_factor(self, name: str) -> tuple[float, float, float]:
        """Odds-ratio factor and 95% Wald CI for the configured change."""
        j = self.names.index(name)
        b, s, d = self.coef[j + 1], self.se[j + 1], self.deltas[j]
        lo, hi = sorted((np.exp((b - Z95 * s) * d), np.exp((b + Z95 * s) * d)))
        return float(np.exp(b * d)), float(lo), float(hi)

    def wald_p(self, name: str) -> float:
        j = self.names.index(name) + 1
        return float(2.0 * norm.sf(abs(self.coef[j] / self.se[j])))


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _newton(Z, y):
    """Maximise the log-likelihood on a standardised copy of the design.

    Returns coefficients on the original scale.  Convergence is judged on
    the gradient of the original parametrisation.
    """
    n, q = Z.shape
    center = np.zeros(q)
    scale = np.ones(q)
    center[1:] = Z[:, 1:].mean(axis=0)
    scale[1:] = Z[:, 1:].std(axis=0)
    Zs = (Z - center) / scale
    Zs[:, 0] = 1.0
    # theta -> beta: beta_j = theta_j / s_j, intercept absorbs the centering
    T = np.diag(1.0 / scale)
    T[0, 1:] = -center[1:] / scale[1:]

    if np.linalg.matrix_rank(Zs) < q:
        raise CollinearityError("design matrix is rank deficient")
    theta = np.zeros(q)
    p0 = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    theta[0] = np.log(p0 / (1 - p0))
    ll = loglik(theta, Zs, y)
    it = 0
    converged = False
    while True:
        g = gradient(theta, Zs, y)
        H = information(theta, Zs)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise CollinearityError("singular information matrix") from None
        if not np.all(np.isfinite(step)):
            raise CollinearityError("singular information matrix")
        # a vanishing gradient with a large Newton step is a flat ridge, not an optimum
        if (np.max(np.abs(gradient(T @ theta, Z, y))) < GRAD_TOL
                and np.max(np.abs(step)) < STEP_TOL):
            converged = True
            break
        if it == MAX_ITER:
            break
        for _ in range(30):
            cand = theta + step
            ll_new = loglik(cand, Zs, y)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2.0
        theta, ll = cand, ll_new
        it += 1
        if np.any(np.abs(theta) > SEPARATION_BETA):
            raise SeparationError(
                "coefficient divergence: outcome is (quasi-)completely separated"
            )
    beta = T @ theta
    return beta, it, converged


def _null_loglik(y) -> float:
    p = y.mean()
    if p in (0.0, 1.0):
        return 0.0
    return float(np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)))


def logistic_fit(X, y, feature_deltas=None, names=None, lr_tests: bool = True) -> LogisticFit:
    """Fit P(y=1) = expit(b0 + X b).

    ``feature_deltas`` sets, per covariate, the change over which the
    odds-ratio factor is reported (interquartile range for continuous
    features, 1 for indicators).
    """
    X = _design(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if len(y) != n:
        raise ValidationError(f"X has {n} rows but y has {len(y)}")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("outcome must be binary 0/1")
    if not np.all(np.isfinite(X)):
        raise ValidationError("covariates contain missing or non-finite values")
    if n <= p + 1:
        raise ValidationError(f"need more observations ({n}) than parameters ({p + 1})")
    if y.min() == y.max():
        raise ValidationError("outcome has a single class")
    const = np.ptp(X, axis=0) == 0
    if const.any():
        raise ValidationError(f"constant covariate(s) at columns {np.flatnonzero(const).tolist()}")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    deltas = np.ones(p) if feature_deltas is None else np.asarray(feature_deltas, dtype=float)

    Z = np.column_stack([np.ones(n), X])
    beta, it, converged = _newton(Z, y)
    try:
        cov = np.linalg.inv(information(beta, Z))
    except np.linalg.LinAlgError:
        raise CollinearityError("singular information matrix") from None
    ll = loglik(beta, Z, y)

    lr_p = {}
    if lr_tests:
        for j, name in enumerate(names):
            if p == 1:
                ll0 = _null_loglik(y)
            else:
                keep = [c for c in range(p) if c != j]
                Zr = np.column_stack([np.ones(n), X[:, keep]])
                br, _, _ = _newton(Zr, y)
                ll0 = loglik(br, Zr, y)
            stat = max(2.0 * (ll - ll0), 0.0)
            lr_p[name] = float(chi2.sf(stat, 1))
    auc = roc_auc(Z @ beta, y)
    return LogisticFit(names, beta, cov, ll, deltas, lr_p, auc, n, it, converged)
