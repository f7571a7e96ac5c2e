import numpy as np
import pytest
import scipy.stats

from activereg.core import TargetOracle
from activereg.kron import AliasTable, KronProblem, alias_build, alias_draw, kron_lewis_weights, kron_product_weights, kron_regress
from activereg.lewis import lewis_weights
from activereg.solvers import solve_weighted_lp

from oracles import kron_dense


def test_alias_reconstructs_distribution():
    p = np.array([0.5, 0.0, 0.1, 0.25, 0.15])
    t = alias_build(p)
    np.testing.assert_allclose(t.distribution(), p, atol=1e-15)
    u = alias_build([3.0, 1.0])
    np.testing.assert_allclose(u.distribution(), [0.75, 0.25])


def test_alias_draws_chi_square():
    p = np.random.default_rng(0).dirichlet(np.ones(12))
    draws = alias_draw(alias_build(p), np.random.default_rng(1), 200_000)
    counts = np.bincount(draws, minlength=12)
    assert scipy.stats.chisquare(counts, 200_000 * p).pvalue > 1e-3


@pytest.mark.parametrize("bad", [[], [-1.0, 2.0], [0.0, 0.0], [np.nan]])
def test_alias_rejects(bad):
    with pytest.raises(ValueError):
        alias_build(bad)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_product_identity(rng, p):
    F = [rng.standard_normal((8, 3)), rng.standard_normal((6, 2))]
    prod = kron_product_weights(kron_lewis_weights(F, p))
    ref = lewis_weights(kron_dense(F), p, tol=1e-13).w
    np.testing.assert_allclose(prod, ref, rtol=1e-8)


def test_rows_and_indexing(rng):
    F = [rng.standard_normal((4, 2)), rng.standard_normal((3, 2)), rng.standard_normal((2, 1))]
    prob = KronProblem(F, np.zeros(24), 1.5)
    K = kron_dense(F)
    assert prob.shape == (4, 3, 2) and prob.d == 4
    flat = np.arange(24)
    multi = prob.multi(flat)
    np.testing.assert_allclose(prob.rows(multi), K)
    assert np.array_equal(prob.flat(multi), flat)
    np.testing.assert_allclose(prob.materialize(), K)
    with pytest.raises(ValueError):
        KronProblem(F, np.zeros(5), 1.5)


def test_regress_reads_distinct_draws(rng):
    F = [rng.standard_normal((32, 2)), rng.standard_normal((32, 2))]
    K = kron_dense(F)
    b = K @ rng.standard_normal(4) + 0.1 * rng.standard_normal(1024)
    prob = KronProblem(F, TargetOracle(b), 1.5)
    res = kron_regress(prob, rng=rng, m=300)
    assert prob.b.count == res.info["distinct"] <= 300
    full = solve_weighted_lp(K, b, p=1.5)
    assert np.sum(np.abs(K @ res.x - b) ** 1.5) / full.objective < 1.5


def test_callable_target():
    F = [np.ones((3, 1)), np.ones((2, 1))]
    prob = KronProblem(F, lambda i: i.astype(float), 1.0)
    assert prob.b.query([5]).tolist() == [5.0]
