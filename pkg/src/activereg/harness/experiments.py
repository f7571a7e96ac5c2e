"""Experiment drivers: run a pipeline over seeds and collect a JSON-ready report."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import TargetOracle, WeightVector, loss_catalog, mcost, parse_loss, read_matrix, rng_stream, to_json
from ..huber import HuberStepConfig, huber_active, huber_subspace_embedding
from ..kron import KronProblem, kron_regress
from ..lewis import lewis_weights, lp_subspace_embedding
from ..lp_active import budget, constant_factor_lp, high_prob_relative_lp, no_assumptions_lp
from ..m_active import m_relative_active, tukey_relative_active
from ..orlicz import orlicz_subspace_embedding
from ..sensitivity import m_sensitivities
from ..solvers import solve_weighted_lp, solve_weighted_mloss
from .instances import gen_instance
from .probes import lp_distortion, m_distortion, orlicz_distortion

SCHEMA_VERSION = 1
BASELINE_LIMIT = 5_000_000  # entries of A above which no full solve is attempted

PIPELINES = ("lewis", "embed", "regress-lp", "regress-m", "regress-huber", "regress-tukey", "kron", "orlicz", "sens", "hardness")


@dataclass
class ExperimentReport:
    pipeline: str
    config: dict
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "pipeline": self.pipeline,
            "config": self.config,
            "records": self.records,
            "summary": self.summary,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return to_json(self.to_dict())

    def to_csv(self) -> str:
        """Flat per-trial table; nested values are dropped."""
        rows = [{k: v for k, v in r.items() if np.isscalar(v) or v is None} for r in self.records]
        keys = sorted({k for r in rows for k in r})
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=keys)
        wr.writeheader()
        wr.writerows(rows)
        return buf.getvalue()


def threads() -> int:
    try:
        return max(1, int(os.environ.get("ALS_THREADS", "1")))
    except ValueError:
        return 1


def _summary(records: list) -> dict:
    out = {}
    keys = {k for r in records for k, v in r.items() if isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)}
    for k in sorted(keys):
        vals = np.array([r[k] for r in records if k in r and r[k] is not None], dtype=np.float64)
        vals = vals[np.isfinite(vals)]
        if vals.size and k not in ("seed", "wall_time"):
            out[k] = {"median": float(np.median(vals)), "p10": float(np.percentile(vals, 10)), "p90": float(np.percentile(vals, 90))}
    for k in sorted({k for r in records for k, v in r.items() if isinstance(v, (bool, np.bool_))}):
        vals = [bool(r[k]) for r in records if k in r]
        out[k] = {"rate": float(np.mean(vals)), "count": int(np.sum(vals)), "trials": len(vals)}
    return out


def _baseline_ok(A) -> bool:
    return A.size <= BASELINE_LIMIT


# ---------------------------------------------------------------- per-seed runners


def _run_lewis(P, inst_rng, alg_rng):
    A = inst_rng.standard_normal((P.get("n", 500), P.get("d", 20)))
    lw = lewis_weights(A, P.get("p", 1.0), tol=P.get("tol", 1e-10))
    return {"residual": lw.residual, "sum_w": lw.sum_w, "iterations": lw.iterations, "converged": lw.converged}


def _run_embed(P, inst_rng, alg_rng):
    A, _, _ = gen_instance(P.get("kind", "gaussian"), {"n": P.get("n", 2000), "d": P.get("d", 10), "spike": P.get("spike", 20)}, inst_rng)
    p = P.get("p", 1.0)
    info = lp_subspace_embedding(A, p, P.get("eps", 0.25), P.get("delta", 0.1), alg_rng, C_se=P.get("C_se", 4.0), return_info=True)
    dist = lp_distortion(A, info.weights, p, alg_rng, P.get("dirs", 10_000), P.get("ascent", 50))
    return {"nnz": info.weights.nnz, "target": info.target, "iterations": info.iterations, "distortion": dist, "failed": info.failed}


def _ratios(A, b, x, p, full_obj):
    obj = float(np.sum(np.abs(A @ x - b) ** p))
    ratio = obj / full_obj if full_obj > 0 else (1.0 if obj == 0 else math.inf)
    return ratio, ratio ** (1.0 / p)


def _run_regress_lp(P, inst_rng, alg_rng):
    p = P.get("p", 1.5)
    A, b, _ = gen_instance("gaussian-outlier", {"n": P.get("n", 20000), "d": P.get("d", 10), "frac": P.get("frac", 0.02), "scale": P.get("scale", 1e4)}, inst_rng)
    n, d = A.shape
    eps, delta, C = P.get("eps", 0.25), P.get("delta", 0.1), P.get("C", 8.0)
    oracle = TargetOracle(b)
    method = P.get("method", "high-prob")
    if method == "no-assumptions":
        res = no_assumptions_lp(A, oracle, p, eps, delta, alg_rng, C=C)
    elif method == "constant":
        res = constant_factor_lp(A, oracle, p, delta, alg_rng)
    else:
        res = high_prob_relative_lp(A, oracle, p, eps, delta, alg_rng, C=C)
    rec = {"queries": oracle.count, "budget": budget(p, d, n, eps, delta, C).m}
    if _baseline_ok(A):
        full = solve_weighted_lp(A, b, None, p, rng=0)
        rec["cost_ratio"], rec["norm_ratio"] = _ratios(A, b, res.x, p, full.objective)
    else:
        rec["baseline_omitted"] = True
    return rec


def _outlier_problem(P, inst_rng):
    return gen_instance(
        "gaussian-outlier",
        {"n": P.get("n", 5000), "d": P.get("d", 5), "frac": P.get("frac", 0.05), "scale": P.get("scale", 1e3), "noise": P.get("noise", 0.5)},
        inst_rng,
    )


def _m_record(A, b, M, res, oracle):
    rec = {"queries": oracle.count}
    if _baseline_ok(A):
        full = solve_weighted_mloss(A, b, None, M, rng=0, extra_starts=[res.x])
        obj = mcost(A @ res.x - b, M)
        rec["cost_ratio"] = obj / full.objective if full.objective > 0 else (1.0 if obj == 0 else math.inf)
    else:
        rec["baseline_omitted"] = True
    return rec


def _run_regress_m(P, inst_rng, alg_rng):
    M = parse_loss(P.get("loss", "huber(1)"))
    A, b, _ = _outlier_problem(P, inst_rng)
    oracle = TargetOracle(b)
    res = m_relative_active(A, oracle, M, P.get("eps", 0.25), P.get("delta", 0.1), alg_rng, C_m=P.get("C_m", 1.0))
    return _m_record(A, b, M, res, oracle)


def _run_regress_tukey(P, inst_rng, alg_rng):
    tau, p = P.get("tau", 1.0), P.get("p", 2.0)
    A, b, _ = _outlier_problem(P, inst_rng)
    oracle = TargetOracle(b)
    res = tukey_relative_active(A, oracle, tau, p, P.get("eps", 0.25), alg_rng, C_m=P.get("C_m", 1.0))
    return _m_record(A, b, loss_catalog("tukey_lp", tau, p), res, oracle)


def _huber_cfg(P) -> HuberStepConfig:
    return HuberStepConfig(eps=P.get("eps", 0.25), delta=P.get("delta", 0.1), tau=P.get("tau", 1.0), C_m=P.get("C_m", 2.0))


def _run_regress_huber(P, inst_rng, alg_rng):
    A, b, _ = gen_instance("gaussian-outlier", {"n": P.get("n", 20000), "d": P.get("d", 8), "frac": P.get("frac", 0.02), "scale": P.get("scale", 1e3), "noise": 1.0}, inst_rng)
    oracle = TargetOracle(b)
    cfg = _huber_cfg(P)
    res = huber_active(A, oracle, cfg.eps, alg_rng, cfg.delta, cfg.tau, P.get("C_h", 4.0), P.get("kappa_h", 1.0), cfg)
    rec = _m_record(A, b, cfg.loss(), res, oracle)
    rec.update({"budget": res.info["budget"], "steps": max(res.info["steps"])})
    return rec


def _kron_factors(P, inst_rng):
    if P.get("factors"):
        return [read_matrix(f) for f in P["factors"]]
    shapes = P.get("shapes", [(64, 4), (64, 4)])
    return [inst_rng.standard_normal(tuple(s)) for s in shapes]


def _kron_target(P, problem_factors, inst_rng):
    if P.get("b"):
        return read_matrix(P["b"]).ravel()
    gen = P.get("generator", "planted")
    tmp = KronProblem(problem_factors, TargetOracle(lambda idx: np.zeros(len(idx)), math.prod(F.shape[0] for F in problem_factors)), 1.0)
    x = inst_rng.standard_normal(tmp.d)
    noise_seed = int(inst_rng.integers(2**31))
    scale = P.get("noise", 1.0)

    def b_fn(idx):
        rows = tmp.rows(tmp.multi(idx))
        # per-index noise from a counter-based stream keeps b a pure function of the index
        noise = np.array([np.random.default_rng([noise_seed, int(i)]).standard_normal() for i in np.ravel(idx)])
        return rows @ x + (scale * noise if gen == "planted" else 0.0)

    return b_fn


def _run_kron(P, inst_rng, alg_rng):
    p = P.get("p", 1.5)
    factors = _kron_factors(P, inst_rng)
    target = _kron_target(P, factors, inst_rng)
    N = math.prod(F.shape[0] for F in factors)
    oracle = TargetOracle(target, N) if callable(target) else TargetOracle(target)
    problem = KronProblem(factors, oracle, p)
    eps, delta, C = P.get("eps", 0.3), P.get("delta", 0.1), P.get("C", 0.25)
    res = kron_regress(problem, eps, delta, alg_rng, C=C)
    rec = {"queries": oracle.count, "draws": res.info["draws"], "n_total": N}
    if N * problem.d <= BASELINE_LIMIT:
        K = problem.materialize()
        bfull = oracle._fetch(np.arange(N))
        full = solve_weighted_lp(K, bfull, None, p, rng=0)
        rec["cost_ratio"], rec["norm_ratio"] = _ratios(K, bfull, res.x, p, full.objective)
    else:
        rec["baseline_omitted"] = True
    return rec


def _run_orlicz(P, inst_rng, alg_rng):
    G = parse_loss(P.get("loss", "huber(1)"))
    A = inst_rng.standard_normal((P.get("n", 2000), P.get("d", 8)))
    w, info = orlicz_subspace_embedding(A, G, P.get("eps", 0.25), alg_rng, rows=P.get("rows", 600), return_info=True)
    dist = orlicz_distortion(A, w, G, alg_rng, P.get("dirs", 3000))
    return {"nnz": w.nnz, "distortion": dist, "rows_target": info["rows_target"]}


def _run_sens(P, inst_rng, alg_rng):
    M = parse_loss(P.get("loss", "huber(1)")) if "(" in P.get("loss", "huber(1)") else loss_catalog(P["loss"], 1.0)
    kind = P.get("kind", "spiked-tukey")
    out = {"table": []}
    for n in P.get("n_list", [256, 1024, 4096]):
        params = {"n": n, "d": P.get("d", 1)}
        if kind == "spiked-tukey":
            params["scale"] = P.get("scale", 1.0)
        A, _, _ = gen_instance(kind, params, inst_rng)
        tau = min(P.get("tau", 16.0), A.shape[0])
        est = m_sensitivities(A, M, tau, alg_rng, single_hash=P.get("single_hash", False))
        out["table"].append({"n": int(A.shape[0]), "sum": est.total})
    sums = np.array([r["sum"] for r in out["table"]])
    ns = np.array([r["n"] for r in out["table"]], dtype=np.float64)
    if ns.size > 1:
        out["loglog_slope"] = float(np.polyfit(np.log(np.log(ns)), np.log(sums), 1)[0])
    return out


def naive_sample_solve(A, oracle, p: float, m: int, rng) -> np.ndarray:
    """Uniform sample of exactly ``m`` rows, reweighted by ``n/m``, then solved."""
    n = A.shape[0]
    idx = np.sort(rng.choice(n, size=min(m, n), replace=False))
    return solve_weighted_lp(A[idx], oracle.query(idx), np.full(idx.size, n / idx.size), p, rng=rng).x


def _run_hardness(P, inst_rng, alg_rng):
    kind = P.get("kind", "delta")
    p, delta = P.get("p", 2.0), P.get("delta", 0.05)
    if kind == "delta":
        n = P.get("n", 400)
        A, b, _ = gen_instance("delta", {"n": n}, inst_rng)
        full = solve_weighted_lp(A, b, None, p)
        ob = TargetOracle(b)
        ell = max(1, math.ceil(P.get("c_delta", 3.0) * math.log(1 / delta)))
        m = P.get("m", 2 * ell)
        boosted = high_prob_relative_lp(A, ob, p, P.get("eps", 0.25), delta, alg_rng, c_delta=P.get("c_delta", 3.0), m=m)
        on = TargetOracle(b)
        x_naive = naive_sample_solve(A, on, p, ob.count, alg_rng)
        rb = mcost(A @ boosted.x - b, loss_catalog("lp", p)) / full.objective
        rn = mcost(A @ x_naive - b, loss_catalog("lp", p)) / full.objective
        return {"boosted_ratio": rb, "naive_ratio": rn, "boosted_fail": rb > 2, "naive_fail": rn > 2, "queries": ob.count, "naive_queries": on.count}
    if kind == "bernoulli":
        eps = P.get("eps", 0.1)
        A, b, meta = gen_instance("bernoulli", {"eps": eps}, inst_rng)
        ob = TargetOracle(b)
        res = high_prob_relative_lp(A, ob, P.get("p", 0.5), eps, P.get("delta", 0.1), alg_rng, C=P.get("C", 1.0))
        guess = 1 if res.x[0] > 0.5 else -1
        return {"correct": guess == meta["sign"], "queries": ob.count, "n": meta["n"]}
    raise ValueError(f"hardness kind must be delta or bernoulli, got {kind!r}")


_RUNNERS = {
    "lewis": _run_lewis,
    "embed": _run_embed,
    "regress-lp": _run_regress_lp,
    "regress-m": _run_regress_m,
    "regress-huber": _run_regress_huber,
    "regress-tukey": _run_regress_tukey,
    "kron": _run_kron,
    "orlicz": _run_orlicz,
    "sens": _run_sens,
    "hardness": _run_hardness,
}


def run_experiment(spec: dict) -> ExperimentReport:
    """Run ``spec["pipeline"]`` with ``spec["params"]`` over ``spec["seeds"]`` seeds.

    Seed ``s`` uses stream 0 of ``base + s`` for the instance and stream 1
    for the algorithm, so a report can be replayed from its config alone.
    Seeds run on up to ``ALS_THREADS`` threads.
    """
    pipeline = spec.get("pipeline")
    if pipeline not in _RUNNERS:
        raise ValueError(f"unknown pipeline {pipeline!r}; known: {', '.join(PIPELINES)}")
    params = dict(spec.get("params", {}))
    seeds = int(spec.get("seeds", 1))
    base = int(spec.get("seed", 0))
    runner = _RUNNERS[pipeline]

    def one(s):
        t = time.perf_counter()
        rec = runner(params, rng_stream(base + s, 0), rng_stream(base + s, 1))
        rec["seed"] = base + s
        rec["wall_time"] = time.perf_counter() - t
        return rec

    with ThreadPoolExecutor(max_workers=threads()) as pool:
        records = list(pool.map(one, range(seeds)))
    config = {"pipeline": pipeline, "params": params, "seeds": seeds, "seed": base}
    flags = sorted({"baseline_omitted"} if any(r.get("baseline_omitted") for r in records) else set())
    return ExperimentReport(pipeline, config, records, _summary(records), flags)
