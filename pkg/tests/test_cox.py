import numpy as np
import pytest

from oracles import logrank_two_group
from tissuepheno.errors import DivergenceError, NoEventsError, ValidationError
from tissuepheno.stats import cox_fit, logrank, partial_likelihood, score_test


def exp_survival(X, beta, seed, censor=0.0, base=1.0):
    rng = np.random.default_rng(seed)
    rate = base * np.exp(X @ np.atleast_1d(beta))
    T = rng.exponential(1 / rate)
    if censor:
        C = rng.exponential(1 / (censor * rate.mean()), len(T))
        return np.minimum(T, C), (T <= C).astype(float)
    return T, np.ones(len(T))


def test_hazard_ratio_two_recovery():
    g = np.repeat([0.0, 1.0], 1000)[:, None]
    t, e = exp_survival(g, np.log(2), seed=0, censor=0.3)
    fit = cox_fit(g, t, e)
    assert 1.8 <= np.exp(fit.beta[0]) <= 2.2
    _, grad, _ = partial_likelihood(fit.beta, g, t, e)
    assert np.max(np.abs(grad)) < 1e-6


def test_finite_difference_gradient():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(150, 3))
    t = np.round(rng.exponential(1, 150), 1)  # rounding creates ties
    e = (rng.random(150) < 0.7).astype(float)
    h = 1e-5
    for _ in range(20):
        b = rng.normal(0, 0.5, 3)
        _, g, H = partial_likelihood(b, X, t, e)
        fd = np.array([(partial_likelihood(b + h * u, X, t, e, hessian=False)[0]
                        - partial_likelihood(b - h * u, X, t, e, hessian=False)[0]) / (2 * h)
                       for u in np.eye(3)])
        assert np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-8)) < 1e-4
        fdH = np.array([(partial_likelihood(b + h * u, X, t, e)[1]
                         - partial_likelihood(b - h * u, X, t, e)[1]) / (2 * h) for u in np.eye(3)])
        np.testing.assert_allclose(fdH, H, rtol=1e-4, atol=1e-6)


def test_breslow_hand_case():
    # times 1, 1, 2 all events; x = 0, 1, 0
    X = np.array([[0.0], [1.0], [0.0]])
    t = np.array([1.0, 1.0, 2.0])
    e = np.ones(3)
    b = 0.3
    expected = (0 + b) - 2 * np.log(2 + np.exp(b)) + 0 - np.log(1.0)
    assert partial_likelihood(np.array([b]), X, t, e, hessian=False)[0] == pytest.approx(expected)


def test_score_equals_logrank_without_ties():
    rng = np.random.default_rng(2)
    for s in range(20):
        g = rng.integers(0, 2, 80).astype(float)
        t = rng.exponential(1, 80) * (1 + 0.5 * g)
        e = (rng.random(80) < 0.8).astype(float)
        _, p_score = score_test(g[:, None], t, e)
        lr = logrank(g, t, e)
        assert abs(p_score - lr.p) < 1e-6
        assert lr.chi2 == pytest.approx(logrank_two_group(g, t, e), rel=1e-10)


def test_tied_times_differ_only_by_hypergeometric_factor():
    # Breslow information at zero omits the (n - d) / (n - 1) factor
    rng = np.random.default_rng(3)
    g = rng.integers(0, 2, 80).astype(float)
    t = np.round(rng.exponential(1, 80), 1)
    e = (rng.random(80) < 0.8).astype(float)
    O = E = V = 0.0
    for u in np.unique(t[e == 1]):
        risk = t >= u
        n, n1 = risk.sum(), (risk & (g == 1)).sum()
        d = ((t == u) & (e == 1)).sum()
        O += ((t == u) & (e == 1) & (g == 1)).sum()
        E += d * n1 / n
        V += d * (n1 / n) * (1 - n1 / n)
    stat, _ = score_test(g[:, None], t, e)
    assert stat == pytest.approx((O - E) ** 2 / V, rel=1e-10)
    assert logrank(g, t, e).chi2 == pytest.approx(logrank_two_group(g, t, e), rel=1e-10)


def test_null_hr_and_uniform_score_p():
    ps, hrs = [], []
    for s in range(150):
        rng = np.random.default_rng(100 + s)
        x = rng.normal(size=(100, 1))
        t, e = exp_survival(x, 0.0, seed=s, censor=0.2)
        fit = cox_fit(x, t, e, feature_deltas=[1.0])
        ps.append(fit.score_p)
        hrs.append(fit.hr_factor("x0")[0])
    assert 0.02 <= np.mean(np.array(ps) < 0.05) <= 0.10
    assert abs(np.median(np.log(hrs))) < 0.05


def test_multivariate_wald_and_ci():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.normal(size=400), rng.integers(0, 2, 400)])
    t, e = exp_survival(X, np.array([0.7, -0.5]), seed=4, censor=0.3)
    fit = cox_fit(X, t, e, feature_deltas=[1.35, 1.0], names=["f", "c"])
    f, lo, hi = fit.hr_factor("f")
    assert f == pytest.approx(np.exp(1.35 * fit.beta[0]))
    assert lo < f < hi
    assert fit.wald_p("f") < 1e-6
    assert 0 <= fit.wald_p("c") <= 1
    assert fit.converged


def test_no_events():
    with pytest.raises(NoEventsError):
        cox_fit(np.arange(5.0), np.arange(5.0) + 1, np.zeros(5))


def test_monotone_likelihood_diverges():
    x = np.r_[np.zeros(10), np.ones(10)]
    t = np.r_[np.arange(11, 21.0), np.arange(1, 11.0)]  # every x=1 subject fails first
    with pytest.raises(DivergenceError):
        cox_fit(x, t, np.ones(20))


@pytest.mark.parametrize("X,t,e", [
    (np.ones(5), np.arange(5.0), np.ones(5)),
    (np.arange(5.0), -np.arange(5.0), np.ones(5)),
    (np.arange(5.0), np.arange(5.0), np.full(5, 2.0)),
])
def test_invalid(X, t, e):
    with pytest.raises(ValidationError):
        cox_fit(X, t, e)
