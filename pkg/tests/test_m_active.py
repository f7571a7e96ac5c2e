import math

import numpy as np
import pytest

from activereg.core import TargetOracle, loss_catalog, mcost, parse_loss
from activereg.m_active import (
    check_admissible,
    constant_factor_rows,
    m_constant_factor_active,
    m_relative_active,
    relative_rows,
    tukey_relative_active,
    two_stage_sample,
)
from activereg.solvers import solve_weighted_mloss


def _problem(rng, n=3000, d=4):
    A = rng.standard_normal((n, d))
    b = A @ rng.standard_normal(d) + 0.5 * rng.standard_normal(n)
    k = n // 20
    b[:k] += 1e3 * rng.standard_normal(k)
    return A, b


@pytest.mark.parametrize("spec", ["huber(1)", "tukey_lp(1,2)", "l2lq(0.5)", "lp(1)", "gamma_p(1,1.5)"])
def test_admissible(spec):
    check_admissible(parse_loss(spec))


@pytest.mark.parametrize("spec", ["tukey_smooth(1)", "gamma_p(1,3)"])
def test_not_admissible(spec):
    with pytest.raises(ValueError):
        check_admissible(parse_loss(spec))


def test_row_formulas():
    H = loss_catalog("huber", 1.0)
    assert constant_factor_rows(5, 1000, H) == math.ceil(4 * 5 * math.log(1000))
    assert relative_rows(5, H, 0.5, 0.1) == math.ceil(5 * 1.0 * math.log(10) / 0.5**4)
    assert relative_rows(5, H, 0.5, 0.1, eps_pow=0) == math.ceil(5 * math.log(10))


def test_two_stage_sample_size(rng):
    A = rng.standard_normal((5000, 3))
    sizes = [two_stage_sample(A, loss_catalog("huber", 1.0), 400, 27, rng)[0].nnz for _ in range(5)]
    assert 200 < np.median(sizes) < 800


def test_constant_factor_reads_only_sample(rng):
    A, b = _problem(rng)
    o = TargetOracle(b)
    res = m_constant_factor_active(A, o, loss_catalog("huber", 1.0), rng)
    assert o.count == res.info["stage2_rows"] < 3000


def test_relative_huber(rng):
    A, b = _problem(rng)
    H = loss_catalog("huber", 1.0)
    o = TargetOracle(b)
    res = m_relative_active(A, o, H, 0.25, 0.1, rng, C_m=0.2)
    assert o.count < 3000
    full = solve_weighted_mloss(A, b, M=H)
    assert mcost(A @ res.x - b, H) / full.objective < 1.05


def test_eps_one_stops_early(rng):
    A, b = _problem(rng)
    o = TargetOracle(b)
    res = m_relative_active(A, o, loss_catalog("huber", 1.0), 1.0, 0.1, rng)
    assert res.info["path"] == "constant-factor"


def test_tukey_queries_independent_of_b():
    g = np.random.default_rng(3)
    A, b1 = _problem(g)
    b2 = g.standard_normal(3000)
    sets = []
    for b in (b1, b2):
        o = TargetOracle(b)
        tukey_relative_active(A, o, 1.0, 2.0, 0.25, rng=5, C_m=0.2)
        sets.append(o.queried)
    assert np.array_equal(*sets)
