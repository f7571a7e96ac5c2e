"""Active ℓp regression: read few entries of ``b`` and still fit well.

Every pipeline here plans all of its row samples from ``A`` alone before the
first entry of ``b`` is read, so the set of queried indices depends only on
``(A, p, eps, delta, seed)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Loss, OracleView, WeightVector, as_generator, as_oracle, check_matrix, loss_catalog, mnorm
from .lewis import embedding_size, halving_step, lewis_sampling_plan, lewis_weights, lp_subspace_embedding
from .solvers import SolveResult, solve_weighted_lp


@dataclass
class ActiveBudget:
    p: float
    d: int
    n: int
    eps: float
    delta: float
    m: int
    C: float
    leading: float
    bracket: float
    log_delta: float
    schedule: list = field(default_factory=list)


def gamma_ladder(eps: float) -> list[tuple[float, float]]:
    """``(beta_i, gamma_i)`` pairs with ``beta_i = 2^i / (2^i - 1)``.

    The betas follow ``beta_{i+1} = 2 beta_i / (1 + beta_i)`` from
    ``beta_1 = 2``; ``gamma_i = eps^(2 / (1 + beta_i))`` is the intermediate
    accuracy targeted at that rung.
    """
    L = max(1, math.ceil(math.log2(max(math.log2(1.0 / eps), 1.0)))) if eps < 0.5 else 1
    out, beta = [], 2.0
    for _ in range(L):
        out.append((beta, eps ** (2.0 / (1.0 + beta))))
        beta = 2.0 * beta / (1.0 + beta)
    return out


def budget(p: float, d: int, n: int, eps: float, delta: float, C: float = 8.0) -> ActiveBudget:
    """Query budget ``m = ceil(C * leading * bracket * log(1/delta))``.

    ``leading`` is ``d/eps^2`` for ``p <= 1``, ``d/eps`` for ``1 < p <= 2``
    and ``d^(p/2)/eps^p`` beyond; ``bracket`` is
    ``(log d)^2 log(d/eps) + log(1/delta)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not p > 0:
        raise ValueError("p must be positive")
    if p <= 1:
        leading = d / eps**2
    elif p <= 2:
        leading = d / eps
    else:
        leading = d ** (p / 2) / eps**p
    ld = math.log(d) if d > 1 else 0.0
    bracket = ld**2 * math.log(max(d / eps, math.e)) + math.log(1 / delta)
    log_delta = math.log(1 / delta)
    m = int(math.ceil(C * leading * bracket * log_delta))
    schedule = gamma_ladder(eps) if 1 < p < 2 else []
    return ActiveBudget(p, d, n, eps, delta, max(m, d), C, leading, bracket, log_delta, schedule)


def _triangle_constant(p: float) -> float:
    return 2.0 ** (1.0 / p - 1.0) if p < 1 else 1.0


def _norm_loss(norm) -> Loss:
    if isinstance(norm, Loss):
        return norm
    return loss_catalog("lp", float(norm))


# ---------------------------------------------------------------- boosting


def boost_index(candidates, A, norm, kappa: float = 1.0, weights=None) -> tuple[int, bool]:
    """Index chosen by the 80th-percentile rule and whether it qualified.

    Pairwise distances ``||A(x_i - x_j)||`` over all ordered pairs (the
    diagonal included) give ``tau`` at position ``floor(0.8 l^2)``; the first
    candidate within ``tau`` of at least half of the candidates wins. ``b``
    is never touched.
    """
    A = check_matrix(A)
    M = _norm_loss(norm)
    X = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    ell = X.shape[0]
    if ell == 1:
        return 0, True
    Y = A @ X.T
    D = np.empty((ell, ell))
    for i in range(ell):
        for j in range(i, ell):
            D[i, j] = D[j, i] = mnorm(Y[:, i] - Y[:, j], M, weights) if i != j else 0.0
    tau = np.sort(D.ravel())[int(math.floor(ell * ell * 0.8))]
    close = (D <= tau).sum(axis=1)
    ok = np.flatnonzero(close >= ell / 2)
    if ok.size:
        return int(ok[0]), True
    return int(np.argmin(D.max(axis=1))), False


def boost_candidates(candidates, A, norm, kappa: float = 1.0, weights=None) -> np.ndarray:
    """Pick a candidate that is close to most others (see :func:`boost_index`).

    If at least 9/10 of the candidates are ``alpha``-good the pick is within
    ``kappa alpha + 2 kappa^3 (alpha + 1)`` of optimal. When no candidate
    qualifies (the precondition failed) the one with the smallest
    eccentricity is returned and a warning is raised.
    """
    i, ok = boost_index(candidates, A, norm, kappa, weights)
    if not ok:
        warnings.warn("no candidate is close to half of the others; returning the most central one", RuntimeWarning, stacklevel=2)
    return np.atleast_2d(np.asarray(candidates, dtype=np.float64))[i].copy()


# ---------------------------------------------------------------- sample plans


def _n_trials(delta: float, c_delta: float) -> int:
    return max(1, int(math.ceil(c_delta * math.log(1.0 / delta))))


def _constant_factor_plan(A, p, delta, rng, C_se, target, weights) -> WeightVector:
    n, d = A.shape
    if target is None:
        target = embedding_size(p, d, n, 0.5, delta, C_se)
    return lp_subspace_embedding(A, p, 0.5, delta, rng, C_se=C_se, target=max(target, d), weights=weights)


def recursive_plan(A, p: float, m: int, rng, weights: WeightVector | None = None, C2: float = 4.0) -> tuple[WeightVector, int, bool]:
    """Rows and weights of the base case reached by repeated split-and-sample.

    Fresh Lewis weights are computed at every level; the recursion stops at
    ``<= m`` rows or after ``ceil(log2 n) + 1`` levels (flagged).
    """
    A = check_matrix(A)
    n, d = A.shape
    if m < d:
        raise ValueError(f"m must be at least d={d}")
    rng = as_generator(rng)
    v = weights if weights is not None else WeightVector.ones(n)
    cap = math.ceil(math.log2(max(n, 2))) + 1
    depth = 0
    while v.nnz > m and depth < cap:
        v = halving_step(A, v, p, rng, C2=C2)
        depth += 1
    return v, depth, v.nnz > m


def _solve_on(A, oracle, v: WeightVector, p, rng, x0=None) -> SolveResult:
    bv = oracle.query(v.idx)
    return solve_weighted_lp(A[v.idx], bv, v.val, p, rng=rng, x0=x0)


def _sampled_cost(A, oracle, v: WeightVector, x, p) -> float:
    r = A[v.idx] @ x - oracle.query(v.idx)
    return float(np.dot(v.val, np.abs(r) ** p))


def _full(A, oracle, p, rng, weights) -> SolveResult:
    n = A.shape[0]
    v = weights if weights is not None else WeightVector.ones(n)
    res = _solve_on(A, oracle, v, p, rng)
    res.info.update({"queries": oracle.count, "path": "full"})
    return res


# ---------------------------------------------------------------- pipelines


def constant_factor_lp(
    A,
    b,
    p: float,
    delta: float = 0.1,
    rng=None,
    C_se: float = 4.0,
    c_delta: float = 3.0,
    target: int | None = None,
    weights: WeightVector | None = None,
) -> SolveResult:
    """Constant-factor fit from independent ``eps = 1/2`` embeddings, boosted.

    Runs ``ceil(c_delta log(1/delta))`` trials; each solves on its own
    embedding and the candidates are combined by :func:`boost_candidates`.
    """
    A = check_matrix(A)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    ell = _n_trials(delta, c_delta)
    plans = [_constant_factor_plan(A, p, delta, rng, C_se, target, weights) for _ in range(ell)]
    xs, conv = [], True
    for v in plans:
        res = _solve_on(A, oracle, v, p, rng)
        xs.append(res.x)
        conv &= res.converged
    k, ok = boost_index(xs, A, p, _triangle_constant(p), weights)
    x = xs[k]
    obj = _sampled_cost(A, oracle, plans[k], x, p)
    info = {"trials": ell, "chosen": k, "boost_qualified": ok, "rows": [v.nnz for v in plans], "queries": oracle.count}
    return SolveResult(x, obj, ell, conv, info)


def recursive_relative_lp(A, b, p: float, m: int, rng=None, weights: WeightVector | None = None, C2: float = 4.0) -> SolveResult:
    """Split-and-sample down to ``m`` rows, then solve; ``b`` is read only there."""
    A = check_matrix(A)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    v, depth, capped = recursive_plan(A, p, m, rng, weights, C2)
    res = _solve_on(A, oracle, v, p, rng)
    res.info.update({"depth": depth, "depth_capped": capped, "rows": v.nnz, "queries": oracle.count})
    if capped:
        res.converged = False
    return res


def high_prob_relative_lp(
    A,
    b,
    p: float,
    eps: float = 0.25,
    delta: float = 0.1,
    rng=None,
    C: float = 8.0,
    c_delta: float = 3.0,
    C_se: float = 4.0,
    m: int | None = None,
    weights: WeightVector | None = None,
) -> SolveResult:
    """Relative-error fit that succeeds with probability ``1 - delta``.

    ``l`` recursive trials at ``floor(m / 2l)`` rows each and ``l``
    constant-factor trials of at most the same size are planned up front, so
    the distinct reads never exceed ``m``. Trials are ranked by the sampled
    residual of the constant-factor fit ``x_c``, the worst tenth is dropped,
    and the remaining fits are boosted.
    """
    A = check_matrix(A)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    n, d = A.shape
    bud = budget(p, d, n, eps, delta, C)
    m = bud.m if m is None else int(m)
    rows = n if weights is None else weights.nnz
    if m >= rows:
        res = _full(A, oracle, p, rng, weights)
        res.info["budget"] = m
        return res
    ell = _n_trials(delta, c_delta)
    m_base = max(d, m // (2 * ell))
    cf_target = min(embedding_size(p, d, n, 0.5, delta, C_se), m_base)

    redraws = 0

    def bounded(draw):
        # redraw a single trial until it fits its share; the union then fits m
        nonlocal redraws
        for _ in range(64):
            v = draw()
            if v.nnz <= m_base:
                return v
            redraws += 1
        raise RuntimeError(f"could not plan a trial within {m_base} rows")

    rel_plans = [bounded(lambda: recursive_plan(A, p, m_base, rng, weights)[0]) for _ in range(ell)]
    cf_plans = [bounded(lambda: _constant_factor_plan(A, p, delta, rng, C_se, cf_target, weights)) for _ in range(ell)]

    cf_x = [_solve_on(A, oracle, v, p, rng).x for v in cf_plans]
    kc, cf_ok = boost_index(cf_x, A, p, _triangle_constant(p), weights)
    x_c = cf_x[kc]

    sols, stats, conv = [], [], True
    for v in rel_plans:
        res = _solve_on(A, oracle, v, p, rng)
        sols.append(res.x)
        stats.append(_sampled_cost(A, oracle, v, x_c, p))
        conv &= res.converged
    order = np.argsort(np.asarray(stats), kind="stable")
    keep = order[: ell - ell // 10]
    kept = [sols[i] for i in keep]
    k, ok = boost_index(kept, A, p, _triangle_constant(p), weights)
    chosen = int(keep[k])
    x = sols[chosen]
    v = rel_plans[chosen]
    info = {
        "budget": m,
        "trials": ell,
        "base_rows": m_base,
        "chosen": chosen,
        "discarded": sorted(int(i) for i in order[ell - ell // 10 :]),
        "boost_qualified": ok and cf_ok,
        "redraws": redraws,
        "queries": oracle.count,
        "local": p < 1,
    }
    return SolveResult(x, _sampled_cost(A, oracle, v, x, p), ell, conv, info)


def stage_one_size(p: float, d: int, eps: float, delta: float, C1: float = 1.0) -> int:
    """Rows kept by the one-shot first stage, ``C1 d^(max(1,p/2)+1) log(1/(eps delta)) / eps^(2+p)``."""
    return int(math.ceil(C1 * d ** (max(1.0, p / 2) + 1) * math.log(1 / (eps * delta)) / eps ** (2 + p)))


def no_assumptions_lp(
    A,
    b,
    p: float,
    eps: float = 0.25,
    delta: float = 0.1,
    rng=None,
    C: float = 8.0,
    C1: float = 1.0,
    c_delta: float = 3.0,
    C_se: float = 4.0,
    m: int | None = None,
) -> SolveResult:
    """One-shot Lewis sampling to shrink ``n``, then :func:`high_prob_relative_lp`.

    The first stage only selects rows; ``b`` is read lazily through a view,
    so entries are charged when the second stage actually uses them.
    """
    A = check_matrix(A)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    n, d = A.shape
    m1 = stage_one_size(p, d, eps, delta, C1)
    if m1 >= n:
        idx, wts = np.arange(n), np.ones(n)
    else:
        lw = lewis_weights(A, p, tol=1e-8)
        plan = lewis_sampling_plan(lw.w, p, m1 / d ** max(1.0, p / 2), d)
        idx = np.flatnonzero(rng.random(n) < plan.probabilities)
        wts = 1.0 / plan.probabilities[idx]
    view = OracleView(oracle, idx)
    sub = WeightVector(idx.size, np.arange(idx.size), wts)
    res = high_prob_relative_lp(A[idx], view, p, eps, delta, rng, C, c_delta, C_se, m, sub)
    res.info.update({"stage1_rows": int(idx.size), "stage1_target": m1, "queries": oracle.count})
    return res
