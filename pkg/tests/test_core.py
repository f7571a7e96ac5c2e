import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activereg.core import (
    MatrixFormatError,
    OracleView,
    TargetOracle,
    WeightVector,
    loss_catalog,
    mcost,
    mnorm,
    parse_loss,
    read_matrix,
    rng_stream,
    write_matrix,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_huber_values_and_regimes():
    H = loss_catalog("huber", 1.0)
    assert H.eval(0.5) == pytest.approx(0.125)
    assert H.eval(3.0) == pytest.approx(2.5)
    y = np.array([0.3, -0.9, 0.1])
    assert mcost(y, H) == pytest.approx(np.sum(y**2) / 2)
    big = np.array([1e6, -2e6])
    assert mcost(big, H) / np.abs(big).sum() == pytest.approx(1.0, rel=1e-6)


def test_catalog_values():
    assert loss_catalog("tukey_lp", 1.0, 2.0).eval(5.0) == 1.0
    assert loss_catalog("tukey_lp", 1.0, 2.0).eval(0.5) == 0.25
    assert loss_catalog("l2lq", 0.5).eval(4.0) == pytest.approx(2.0)
    assert loss_catalog("l2lq", 0.5).eval(0.5) == pytest.approx(0.25)
    g = loss_catalog("gamma_p", 2.0, 3.0)
    # continuous at the knee t
    assert g.eval(2.0 - 1e-9) == pytest.approx(g.eval(2.0 + 1e-9), rel=1e-6)
    ts = loss_catalog("tukey_smooth", 2.0)
    assert ts.eval(10.0) == pytest.approx(4 / 6)


def test_parse_loss_and_errors():
    assert parse_loss("tukey_lp(1, 2)").params == (1.0, 2.0)
    with pytest.raises(ValueError):
        parse_loss("huber")
    with pytest.raises(ValueError):
        loss_catalog("nope", 1.0)
    with pytest.raises(ValueError):
        loss_catalog("huber", 1.0, 2.0)
    with pytest.raises(ValueError):
        loss_catalog("lp", -1.0)


@given(st.lists(finite, min_size=1, max_size=20), st.floats(0.3, 4.0))
def test_lp_mnorm_matches_numpy(y, p):
    y = np.array(y)
    assert mnorm(y, loss_catalog("lp", p)) == pytest.approx(np.sum(np.abs(y) ** p) ** (1 / p), rel=1e-9, abs=1e-12)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.sampled_from(["huber(1)", "l2lq(0.5)", "lp(1.5)", "gamma_p(1,3)"]))
def test_growth_bounds_hold(x, y, spec):
    M = parse_loss(spec)
    lo, hi = min(x, y), max(x, y)
    if hi == lo:
        return
    ratio = M.eval(hi) / M.eval(lo)
    assert ratio <= M.c_U * (hi / lo) ** M.p_M * (1 + 1e-9)
    if M.q_M is not None:
        assert ratio >= M.c_L * (hi / lo) ** M.q_M * (1 - 1e-9)


def test_mnorm_rejects_nonfinite():
    with pytest.raises(ValueError):
        mnorm([1.0, np.nan], loss_catalog("lp", 2.0))


def test_weight_vector_validation():
    w = WeightVector(5, [3, 1], [2.0, 0.5])
    assert list(w.idx) == [1, 3]
    assert w.dense().tolist() == [0, 0.5, 0, 2.0, 0]
    for bad in ([[1, 1], [1.0, 1.0]], [[7], [1.0]], [[0], [0.0]], [[0], [np.inf]]):
        with pytest.raises(ValueError):
            WeightVector(5, *bad)


def test_oracle_counts_distinct_reads():
    o = TargetOracle(np.arange(10.0))
    assert o.query([1, 2, 2]).tolist() == [1.0, 2.0, 2.0]
    assert o.count == 2
    assert o.peek_count([2, 3, 4]) == 2
    o.query([2, 3])
    assert o.count == 3
    assert o.queried.tolist() == [1, 2, 3]
    with pytest.raises(IndexError):
        o.query([10])
    with pytest.raises(ValueError):
        TargetOracle([1.0, np.inf])


def test_oracle_callable_and_set_mode(monkeypatch):
    monkeypatch.setattr(TargetOracle, "_SET_THRESHOLD", 4)
    o = TargetOracle(lambda i: 2.0 * i, n=100)
    assert o.query([5, 5, 7]).tolist() == [10.0, 10.0, 14.0]
    assert o.count == 2 and o.queried.tolist() == [5, 7]
    with pytest.raises(ValueError):
        TargetOracle(lambda i: i)


def test_oracle_threaded_count():
    o = TargetOracle(np.zeros(4000))

    def work(k):
        o.query(np.arange(k, 4000, 3))

    ts = [threading.Thread(target=work, args=(k % 3,)) for k in range(12)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert o.count == 4000


def test_oracle_view_shift_charges_base():
    base = TargetOracle(np.arange(6.0))
    view = OracleView(base, rows=[4, 5], shift=lambda i: np.ones(len(i)))
    assert view.query([0, 1]).tolist() == [3.0, 4.0]
    assert base.count == 2 and base.queried.tolist() == [4, 5]


def test_rng_stream_deterministic_and_independent():
    a = rng_stream(3, 0).random(4)
    assert np.array_equal(a, rng_stream(3, 0).random(4))
    assert not np.array_equal(a, rng_stream(3, 1).random(4))


@pytest.mark.parametrize("suffix", [".bin", ".csv"])
def test_matrix_roundtrip(tmp_path, suffix):
    A = np.random.default_rng(0).standard_normal((7, 3))
    path = tmp_path / f"m{suffix}"
    write_matrix(path, A)
    assert np.array_equal(read_matrix(path), A)


def test_matrix_read_errors(tmp_path):
    p = tmp_path / "bad.bin"
    write_matrix(p, np.ones((3, 2)))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(MatrixFormatError):
        read_matrix(p)
    q = tmp_path / "bad.csv"
    q.write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        read_matrix(q)
