import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activereg.core import loss_catalog
from activereg.solvers import brute_force_1d, lp_kkt_residual, m_gradient_norm, solve_weighted_lp, solve_weighted_mloss

A1 = np.array([1.0, 2.0, -1.0, 0.5, 3.0])
B1 = np.array([0.3, 2.5, -4.0, 10.0, 2.9])
# golden-section minima in 40 digits (tests/oracles.py::min_1d_mp)
HUBER1_ARGMIN, HUBER1_MIN = 1.1071428571428572, 11.794642857142858
L1_ARGMIN, L1_MIN = 0.9666666666666667, 13.783333333333333


def test_brute_force_1d_matches_oracle():
    h = brute_force_1d(A1, B1, loss_catalog("huber", 1.0))
    assert h.x[0] == pytest.approx(HUBER1_ARGMIN, abs=1e-7)
    assert h.objective == pytest.approx(HUBER1_MIN, rel=1e-10)
    l1 = brute_force_1d(A1, B1, loss_catalog("lp", 1.0))
    assert l1.x[0] == pytest.approx(L1_ARGMIN, abs=1e-9)
    assert l1.objective == pytest.approx(L1_MIN, rel=1e-12)


def test_solvers_match_1d_oracle():
    A = A1[:, None]
    r = solve_weighted_mloss(A, B1, M=loss_catalog("huber", 1.0), tol=1e-12)
    assert r.objective == pytest.approx(HUBER1_MIN, rel=1e-9)
    r = solve_weighted_lp(A, B1, p=1.0, tol=1e-12)
    assert r.objective == pytest.approx(L1_MIN, rel=1e-6)


def test_p2_is_least_squares(rng):
    A = rng.standard_normal((50, 4))
    b = rng.standard_normal(50)
    w = rng.random(50) + 0.1
    r = solve_weighted_lp(A, b, w, p=2.0)
    sw = np.sqrt(w)
    x = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)[0]
    np.testing.assert_allclose(r.x, x, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.2, 1.5, 3.0, 4.0]))
def test_convex_lp_is_stationary(seed, p):
    g = np.random.default_rng(seed)
    A = g.standard_normal((60, 3))
    b = g.standard_normal(60)
    r = solve_weighted_lp(A, b, p=p, tol=1e-12)
    assert r.converged
    if p >= 2:
        # below 2 an exactly-zero residual makes |r|^(p-1) a poor stationarity gauge
        assert lp_kkt_residual(A, b, r.x, p) < 1e-6
    for _ in range(5):
        z = r.x + 1e-3 * g.standard_normal(3)
        assert np.sum(np.abs(A @ z - b) ** p) >= r.objective - 1e-9


def test_l1_beats_perturbations(rng):
    A = rng.standard_normal((80, 3))
    b = A @ np.array([1.0, -1.0, 2.0]) + rng.standard_cauchy(80)
    r = solve_weighted_lp(A, b, p=1.0, tol=1e-12)
    for _ in range(20):
        z = r.x + 1e-2 * rng.standard_normal(3)
        assert np.abs(A @ z - b).sum() >= r.objective - 1e-6


def test_subunit_p_flags_local(rng):
    A = rng.standard_normal((40, 2))
    b = A @ np.array([1.0, 2.0])
    b[:5] += 100
    r = solve_weighted_lp(A, b, p=0.5, rng=rng)
    assert r.info.get("local")
    np.testing.assert_allclose(r.x, [1.0, 2.0], atol=1e-4)


def test_huber_gradient_vanishes(rng):
    A = rng.standard_normal((100, 4))
    b = rng.standard_normal(100) * 3
    M = loss_catalog("huber", 1.0)
    r = solve_weighted_mloss(A, b, M=M, tol=1e-12)
    assert m_gradient_norm(A, b, r.x, M) < 1e-6


def test_tukey_never_worse_than_start(rng):
    A = rng.standard_normal((100, 3))
    b = A @ np.ones(3) + 0.1 * rng.standard_normal(100)
    b[:10] = 50
    M = loss_catalog("tukey_lp", 1.0, 2.0)
    r = solve_weighted_mloss(A, b, M=M, rng=rng)
    assert r.objective <= np.sum(M(A @ np.ones(3) - b)) + 1e-9
    np.testing.assert_allclose(r.x, np.ones(3), atol=0.1)


def test_solver_argument_errors():
    with pytest.raises(ValueError):
        solve_weighted_lp(np.ones((3, 1)), np.ones(3), p=0)
    with pytest.raises(ValueError):
        solve_weighted_lp(np.ones((3, 1)), np.ones(4))
