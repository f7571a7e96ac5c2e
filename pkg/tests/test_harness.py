import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from activereg.core import WeightVector
from activereg.harness.cli import main
from activereg.harness.experiments import SCHEMA_VERSION, naive_sample_solve, run_experiment
from activereg.harness.instances import KINDS, bernoulli, coding, delta, gen_instance, spiked_column, spiked_tukey
from activereg.harness.probes import lp_distortion, m_distortion
from activereg.core import TargetOracle, loss_catalog


def test_spiked_column_levels():
    x = spiked_column(14, 8.0)
    assert x.tolist() == [4.0] * 2 + [2.0] * 4 + [1.0] * 8
    assert spiked_column(5).tolist() == [0.5, 0.5, 0.25, 0.25, 0.25]


def test_spiked_tukey_blocks(rng):
    A, b, meta = spiked_tukey(64, 4, rng=rng)
    assert A.shape == (64, 4) and meta["block"] == 16
    assert np.all((A != 0).sum(axis=1) <= 1)
    assert np.allclose(np.sort(A[:, 0][A[:, 0] > 0])[::-1], spiked_column(16)[spiked_column(16) > 0])


def test_coding_inner_products(rng):
    S, b, meta = coding(31, 50, rng=rng)
    G = S @ S.T
    np.fill_diagonal(G, 0)
    assert np.abs(G).max() <= 6 * math.sqrt(31)
    assert b[meta["index"]] == 31 and np.count_nonzero(b) == 1
    with pytest.raises(RuntimeError):
        coding(4, 50, C=0.1, rng=rng, max_tries=200)


def test_delta_and_bernoulli(rng):
    A, b, meta = delta(50, rng=rng)
    assert b.sum() == 1 and b[meta["index"]] == 1
    A, b, meta = bernoulli(0.1, sign=1, rng=rng)
    assert meta["n"] == 10_000 and abs(b.mean() - 0.6) < 0.03
    with pytest.raises(ValueError):
        bernoulli(0.6)


def test_gen_instance_deterministic():
    for kind in KINDS:
        params = {"n": 200, "d": 2} if kind in ("gaussian", "duplicated", "gaussian-outlier", "spiked-tukey") else {}
        if kind == "bernoulli":
            params = {"eps": 0.3}
        if kind == "coding":
            params = {"d": 15, "count": 10}
        a = gen_instance(kind, params, np.random.default_rng(4))
        b = gen_instance(kind, params, np.random.default_rng(4))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    with pytest.raises(ValueError):
        gen_instance("nope")


def test_probes_are_zero_for_identity_weights(rng):
    A = rng.standard_normal((100, 3))
    w = WeightVector.ones(100)
    assert lp_distortion(A, w, 1.5, rng, n_dirs=200, n_ascent=2) < 1e-12
    assert m_distortion(A, w, loss_catalog("huber", 1.0), rng, n_dirs=200) < 1e-12


def test_probe_detects_bad_weights(rng):
    A = rng.standard_normal((100, 3))
    w = WeightVector(100, np.arange(50), np.ones(50))
    assert lp_distortion(A, w, 2.0, rng, n_dirs=200, n_ascent=2) > 0.2


def test_naive_sampler_reads_exactly_m(rng):
    A = np.ones((100, 1))
    o = TargetOracle(np.arange(100.0))
    naive_sample_solve(A, o, 2.0, 10, rng)
    assert o.count == 10


SPEC = {"pipeline": "regress-lp", "params": {"n": 2000, "d": 3, "p": 1.5, "C": 0.25}, "seeds": 2, "seed": 11}


def test_replay_is_bitwise_identical():
    r1, r2 = run_experiment(SPEC), run_experiment(SPEC)
    strip = lambda r: [{k: v for k, v in rec.items() if k != "wall_time"} for rec in r.records]
    assert strip(r1) == strip(r2)
    r3 = run_experiment(r1.config)
    assert strip(r3) == strip(r1)


def test_report_schema_and_csv():
    rep = run_experiment(SPEC)
    d = json.loads(rep.to_json())
    assert d["schema_version"] == SCHEMA_VERSION
    assert set(d["summary"]["cost_ratio"]) >= {"median", "p10", "p90"}
    assert [r["seed"] for r in d["records"]] == [11, 12]
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert len(rows) == 2 and "queries" in rows[0]


def test_unknown_pipeline():
    with pytest.raises(ValueError):
        run_experiment({"pipeline": "nope"})


def test_sens_and_hardness_runners():
    rep = run_experiment({"pipeline": "sens", "params": {"loss": "huber(1)", "n_list": [256, 1024]}, "seeds": 1})
    assert "loglog_slope" in rep.records[0]
    rep = run_experiment({"pipeline": "hardness", "params": {"kind": "delta", "n": 100}, "seeds": 2})
    assert rep.records[0]["naive_queries"] == rep.records[0]["queries"]


def test_cli_writes_json_and_csv(tmp_path, capsys):
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    code = main(["lewis", "--n", "60", "--d", "3", "--p", "1.5", "--seeds", "2", "--out", str(out), "--csv", str(table)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["params"] == {"n": 60, "d": 3, "p": 1.5}
    assert rep["summary"]["converged"]["rate"] == 1.0
    assert "medians" in capsys.readouterr().out
    assert table.read_text().startswith("converged")


def test_cli_errors_exit_2(capsys):
    assert main(["hardness", "--kind", "nope"]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "activereg", "lewis", "--n", "40", "--d", "2"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["pipeline"] == "lewis"
