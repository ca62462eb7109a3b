import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chi2_scalar
from tissuepheno.errors import InsufficientDataError, NotAssignableError, ValidationError
from tissuepheno.phenotype import (
    MIN_MEDOID_DISTANCE,
    PhenotypeModel,
    _single_run,
    assign,
    assign_many,
    kmedoids,
    load_model,
    min_medoid_distance,
    save_model,
    select_k,
)
from tissuepheno.cellgraph import chi_squared_matrix


def onehot_clusters(n_per=50, k=6, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c in range(k):
        base = np.full(10, noise / 9)
        base[c] = 1.0 - noise
        for _ in range(n_per):
            v = np.abs(base + rng.normal(0, noise / 3, 10))
            X.append(v / v.sum())
            y.append(c)
    return np.array(X), np.array(y)


def same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def test_two_planted_copies():
    A = np.eye(10)[0] * 0.6 + np.eye(10)[1] * 0.4
    B = np.eye(10)[7]
    m = kmedoids([A] * 5 + [B] * 5, 2, restarts=10, seed=0)
    assert m.total_cost == 0.0
    assert {tuple(r) for r in m.medoids} == {tuple(A), tuple(B)}


def test_k1_medoid_is_exhaustive_minimiser():
    X, _ = onehot_clusters(n_per=8, k=3, seed=1)
    m = kmedoids(X, 1, restarts=3, seed=0, allow_k1=True)
    costs = [sum(chi2_scalar(x, c) for x in X) for c in X]
    assert m.total_cost == pytest.approx(min(costs), abs=1e-12)
    with pytest.raises(ValidationError):
        kmedoids(X, 1)


def test_six_onehot_clusters_recovered():
    X, y = onehot_clusters()
    m = kmedoids(X, 6, restarts=20, seed=0)
    assert same_partition(m.labels, y)


def test_errors():
    X, _ = onehot_clusters(n_per=1, k=3)
    with pytest.raises(InsufficientDataError):
        kmedoids(X, 4)
    with pytest.raises(ValidationError):
        kmedoids(np.vstack([X, np.zeros(10)]), 2)
    with pytest.raises(ValidationError):
        kmedoids(X, 2, restarts=0)


def test_determinism_and_best_of_restarts():
    X, _ = onehot_clusters(n_per=20, noise=0.4, seed=3)
    a = kmedoids(X, 5, restarts=15, seed=11)
    b = kmedoids(X, 5, restarts=15, seed=11)
    assert a.medoid_indices == b.medoid_indices
    assert np.array_equal(a.labels, b.labels)
    assert a.total_cost == b.total_cost == min(a.restart_costs)
    for row in a.medoids:
        assert any(np.array_equal(row, x) for x in X)


def test_cost_non_increasing_within_run():
    X, _ = onehot_clusters(n_per=30, noise=0.5, seed=4)
    D = chi_squared_matrix(X)
    for s in range(10):
        hist = []
        _single_run(D, 6, np.random.default_rng(s), history=hist)
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def _model(medoids):
    medoids = np.asarray(medoids, dtype=float)
    return PhenotypeModel(len(medoids), medoids, tuple(range(len(medoids))), np.array([]), 0.0)


def test_assign_examples():
    rng = np.random.default_rng(0)
    M = rng.dirichlet(np.ones(10), 5)
    model = _model(M)
    assert assign(model, M[3]) == 3
    E = np.eye(10)
    tie = _model([E[7], E[0], E[8], E[9], E[1]])
    h = 0.5 * E[0] + 0.5 * E[1]
    assert chi2_scalar(h, E[0]) == chi2_scalar(h, E[1])
    assert assign(tie, h) == 1
    assert assign_many(tie, h[None])[0] == 1
    with pytest.raises(NotAssignableError):
        assign(model, np.zeros(10))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_assign_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    M = rng.dirichlet(np.ones(10) * 0.5, 6)
    h = rng.dirichlet(np.ones(10) * 0.5)
    d = [chi2_scalar(h, m) for m in M]
    assert assign(_model(M), h) == int(np.argmin(d))
    assert assign_many(_model(M), h[None])[0] == int(np.argmin(d))


def test_model_json_round_trip(tmp_path):
    X, _ = onehot_clusters(n_per=5, k=3)
    m = kmedoids(X, 3, restarts=4, seed=2)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.medoids, m.medoids)
    assert back.k == 3
    obj = json.loads((tmp_path / "m.json").read_text())
    assert obj["thresholds"]["min_medoid_distance"] == MIN_MEDOID_DISTANCE


def _slides(y, n_slides, seed):
    """Assign tiles to slides with varying cluster mixtures."""
    rng = np.random.default_rng(seed)
    slides = np.empty(len(y), dtype=object)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        w = rng.dirichlet(np.ones(n_slides))
        slides[idx] = [f"s{j}" for j in rng.choice(n_slides, size=len(idx), p=w)]
    return slides.tolist()


def test_select_k_single_row():
    X, y = onehot_clusters(n_per=20, k=2)
    rep = select_k(X, _slides(y, 8, 0), (2, 2), restarts=5)
    assert len(rep.rows) == 1
    assert rep.chosen_k == 2
    assert rep.rows[0].passes is (not rep.fallback)


def test_select_k_two_groups_falls_back(caplog):
    # two groups give ratios r and 1 - r on every slide, so |rho| = 1 for k = 2
    X, y = onehot_clusters(n_per=60, k=2, noise=0.02, seed=5)
    with caplog.at_level(logging.WARNING):
        rep = select_k(X, _slides(y, 10, 1), (2, 8), restarts=20)
    assert rep.chosen_k == 2
    assert rep.fallback
    assert rep.rows[0].max_abs_spearman == pytest.approx(1.0)
    assert "falling back" in caplog.text


def test_select_k_planted_six():
    X, y = onehot_clusters(n_per=50, k=6, noise=0.05, seed=2)
    rep = select_k(X, _slides(y, 30, 2), (2, 8), restarts=30)
    assert rep.chosen_k == 6 and not rep.fallback
    assert min_medoid_distance(np.eye(10)[:6]) == 2.0


def test_select_k_input_errors():
    X, y = onehot_clusters(n_per=5, k=2)
    with pytest.raises(ValidationError):
        select_k(X[:0], [], (2, 3))
    with pytest.raises(ValidationError):
        select_k(X, ["a"] * len(X), (2, 3))
    with pytest.raises(ValidationError):
        select_k(X, _slides(y, 3, 0), (1, 3))
