import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activereg.core import WeightVector, loss_catalog
from activereg.lewis import leverage_scores, lewis_weights
from activereg.sensitivity import (
    bucket_lewis_weights,
    brute_force_sensitivities,
    composite_sensitivities,
    m_sensitivities,
    sensitivity_sample,
    weight_levels,
    weighted_m_sensitivities,
)


def test_bucket_lewis_matches_per_bucket_solve(rng):
    A = rng.standard_normal((60, 3))
    labels = rng.integers(0, 4, size=60)
    lw, fb = bucket_lewis_weights(A, labels, 1.5, tol=1e-10, max_iter=500)
    assert not fb.any()
    for b in range(4):
        rows = labels == b
        np.testing.assert_allclose(lw[rows], lewis_weights(A[rows], 1.5, tol=1e-12).w, atol=1e-6)


def test_floor_and_range(rng):
    A = rng.standard_normal((300, 3))
    est = m_sensitivities(A, loss_catalog("huber", 1.0), 5.0, rng)
    assert np.all(est.s >= 2 * 5 / 300 - 1e-15)
    assert np.all(est.s <= 1.0)
    assert est.total == pytest.approx(est.s.sum())
    with pytest.raises(ValueError):
        m_sensitivities(A, loss_catalog("huber", 1.0), 0.5, rng)
    with pytest.raises(ValueError):
        m_sensitivities(A, loss_catalog("huber", 1.0), 301, rng)


def test_heavy_row_is_flagged(rng):
    A = rng.standard_normal((500, 3))
    A[7] *= 1e4
    est = m_sensitivities(A, loss_catalog("lp", 2.0), 1.0, rng)
    assert est.s[7] == 1.0
    assert est.level_rep[7] >= 0


def test_upper_bounds_leverage_for_squares(rng):
    # for M = x^2 the sensitivities are exactly the leverage scores
    A = rng.standard_normal((200, 3))
    A[:5] *= 20
    est = m_sensitivities(A, loss_catalog("lp", 2.0), 1.0, rng, c_rep=4)
    assert np.mean(est.s >= leverage_scores(A)) >= 0.95


def test_brute_force_never_exceeds_leverage(rng):
    A = rng.standard_normal((40, 2))
    bf = brute_force_sensitivities(A, loss_catalog("lp", 2.0), rng, n_random=20_000)
    lev = leverage_scores(A)
    assert np.all(bf <= lev + 1e-9)
    assert np.all(bf >= 0.99 * lev)


def test_single_hash_sums_less(rng):
    A = rng.standard_normal((2000, 3))
    M = loss_catalog("huber", 1.0)
    full = m_sensitivities(A, M, 1.0, np.random.default_rng(1))
    one = m_sensitivities(A, M, 1.0, np.random.default_rng(1), single_hash=True)
    assert one.config["repetitions"] == 1 < full.config["repetitions"]
    assert one.total <= full.total


def test_rejects_nonmonotone():
    from dataclasses import replace

    bad = replace(loss_catalog("lp", 1.0), fn=lambda s: np.sin(s) ** 2)
    with pytest.raises(ValueError):
        m_sensitivities(np.ones((10, 1)), bad, 1.0, 0)


def test_weight_levels_dyadic():
    w = WeightVector(6, [0, 1, 2, 3, 5], [1.0, 1.5, 2.0, 3.9, 8.0])
    levels = weight_levels(w)
    assert [lv.tolist() for lv in levels] == [[0, 1], [2, 3], [5]]
    with pytest.raises(ValueError):
        weight_levels(WeightVector(2, [0], [0.5]))


def test_weighted_sensitivities_cover_support(rng):
    A = rng.standard_normal((400, 2))
    w = WeightVector(400, np.arange(0, 400, 2), np.where(np.arange(200) < 100, 1.0, 4.0))
    est = weighted_m_sensitivities(A, loss_catalog("huber", 1.0), w, 2.0, rng)
    assert np.all(est.s[w.idx] > 0)
    assert np.all(est.s[1::2] == 0)
    assert est.config["weight_levels"] == 2


def test_composite_doubles_max(rng):
    A = rng.standard_normal((100, 2))
    est = composite_sensitivities(A, [loss_catalog("lp", 1.0), loss_catalog("huber", 1.0)], 1.0, rng)
    assert np.all(est.s >= min(1.0, 4 / 100))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_sensitivity_sample_unbiased(seed):
    g = np.random.default_rng(seed)
    s = g.random(50) * 0.05
    y = g.random(50)
    pr = np.minimum(1, 4.0 * s)
    trials = 3000
    sd = np.sqrt(np.sum(y**2 * (1 - pr) / pr) / trials)
    tot = [(w := sensitivity_sample(None, s, 4.0, g)).val @ y[w.idx] for _ in range(trials)]
    assert abs(np.mean(tot) - y.sum()) < 5 * sd
