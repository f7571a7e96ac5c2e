"""Huber-loss subspace embeddings with fewer than ``d^2`` rows, and active Huber regression.

One step keeps the rows whose Huber sensitivity is large and samples the rest
by a mix of ℓp Lewis weights over a grid of ``p`` in ``[1, 2]``. Repeating the
step on its own output shrinks ``log(rows)`` by the factor ``beta/(1+beta)``
per round, which settles near ``d^(1+beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Loss, OracleView, WeightVector, as_generator, as_oracle, check_matrix, loss_catalog
from .lewis import lewis_weights
from .sensitivity import m_sensitivities, weight_levels
from .solvers import SolveResult, solve_weighted_mloss

BETA = 3.0 - 2.0 * math.sqrt(2.0)
GRID_CAP = 24


def l2lq_beta(q: float) -> float:
    """Exponent of ``gamma n`` in the restricted branch for the ℓ2-ℓq loss (0 at ``q = 2``)."""
    r = 2.0 / q
    if abs(r - 1.0) < 1e-12:
        return 0.0
    return ((r + 1.0) - 2.0 * math.sqrt(r)) / (r - 1.0)


def p_grid(n: int, lo: float = 1.0, hi: float = 2.0, c: float = 1.0, cap: int = GRID_CAP) -> np.ndarray:
    """Exponents ``lo, lo + step, ..., hi`` with ``step = c / log n``, at most ``cap`` points."""
    step = c / math.log(max(n, 3))
    k = int(math.ceil((hi - lo) / step - 1e-9))
    k = max(1, min(k, cap - 1))
    return np.linspace(lo, hi, k + 1)


def gamma_for(n: int, beta: float = BETA) -> float:
    """``n^(-beta/(1+beta))``, clipped to ``[2/n, 1]``."""
    return float(min(1.0, max(2.0 / max(n, 2), n ** (-beta / (1.0 + beta)))))


@dataclass
class HuberStepConfig:
    eps: float = 0.25
    delta: float = 0.1
    tau: float = 1.0  # knee of the Huber loss
    C_m: float = 2.0
    eps_pow: float = 0.0
    kappa_m: float = 0.0
    grid_c: float = 1.0
    grid_cap: int = GRID_CAP
    lewis_tol: float = 1e-6
    beta: float = BETA
    sens_kw: dict = field(default_factory=dict)

    def m(self, d: int, n: int) -> float:
        """Per-step oversampling ``C_m d (log n)^kappa_m / eps^eps_pow``."""
        return self.C_m * d * math.log(max(n, 3)) ** self.kappa_m / self.eps**self.eps_pow

    def loss(self) -> Loss:
        return loss_catalog("huber", self.tau)


# ---------------------------------------------------------------- inequality


@dataclass
class InequalityCheck:
    holds: bool
    branch: str
    whole_ratio: float
    restricted_ratio: float
    whole_bound: float
    restricted_bound: float


def huber_inequality_check(y, gamma: float, q: float = 1.0, c: float = 0.01, loss: Loss | None = None, grid=None) -> InequalityCheck:
    """Evaluate the two-branch lower bound on the loss of ``y`` at level ``gamma``.

    ``T`` collects the coordinates whose loss is at most ``gamma`` times the
    total. The whole-vector branch compares the total with
    ``gamma^(2/q-1) min(||y||_q^q, ||y||_2^2)``; the restricted branch
    compares the loss on ``T`` with ``(gamma n)^-beta`` times the smallest
    ``||y_T||_p^p`` over a grid of ``p`` in ``[q, 2]``. The loss defaults to
    the ℓ2-ℓq loss with exponent ``q``.
    """
    y = np.abs(np.asarray(y, dtype=np.float64).ravel())
    n = y.size
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    if not 0 < q <= 2:
        raise ValueError("q must lie in (0, 2]")
    lo_gamma = max(2.0 / n, n ** (-q / 2)) if n > 1 else 1.0
    if not lo_gamma * (1 - 1e-12) <= gamma <= 1:
        raise ValueError(f"gamma must lie in [{lo_gamma:.3g}, 1] for n={n}, q={q}")
    M = loss if loss is not None else (loss_catalog("l2lq", q) if q < 2 else loss_catalog("lp", 2.0))
    vals = M(y)
    total = float(vals.sum())
    if total == 0:
        return InequalityCheck(True, "zero", math.inf, math.inf, 0.0, 0.0)
    T = vals <= gamma * total
    whole_min = min(float(np.sum(y**q)), float(np.sum(y * y)))
    whole_bound = c * gamma ** (2.0 / q - 1.0) * whole_min
    yt = y[T]
    if grid is None:
        grid = p_grid(n, q, 2.0) if q < 2 else np.array([2.0])
    restricted_min = min(float(np.sum(yt**p)) for p in grid) if yt.size else 0.0
    restricted_bound = c * (gamma * n) ** (-l2lq_beta(q)) * restricted_min
    restricted_val = float(vals[T].sum())
    wr = total / whole_min if whole_min > 0 else math.inf
    rr = restricted_val / restricted_min if restricted_min > 0 else math.inf
    if total >= whole_bound:
        return InequalityCheck(True, "whole", wr, rr, whole_bound, restricted_bound)
    if restricted_val >= restricted_bound:
        return InequalityCheck(True, "restricted", wr, rr, whole_bound, restricted_bound)
    return InequalityCheck(False, "none", wr, rr, whole_bound, restricted_bound)


def huber_inequality_batch(Y, gamma: float, q: float = 1.0, c: float = 0.01, loss: Loss | None = None, grid=None) -> np.ndarray:
    """Row-wise :func:`huber_inequality_check` on a ``(k, n)`` array; returns which rows hold."""
    Y = np.abs(np.atleast_2d(np.asarray(Y, dtype=np.float64)))
    k, n = Y.shape
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y must be finite")
    if not 0 < q <= 2:
        raise ValueError("q must lie in (0, 2]")
    lo_gamma = max(2.0 / n, n ** (-q / 2)) if n > 1 else 1.0
    if not lo_gamma * (1 - 1e-12) <= gamma <= 1:
        raise ValueError(f"gamma must lie in [{lo_gamma:.3g}, 1] for n={n}, q={q}")
    M = loss if loss is not None else (loss_catalog("l2lq", q) if q < 2 else loss_catalog("lp", 2.0))
    if grid is None:
        grid = p_grid(n, q, 2.0) if q < 2 else np.array([2.0])
    vals = M(Y)
    total = vals.sum(axis=1)
    T = vals <= gamma * total[:, None]
    whole = total >= c * gamma ** (2.0 / q - 1.0) * np.minimum((Y**q).sum(axis=1), (Y * Y).sum(axis=1))
    YT = np.where(T, Y, 0.0)
    rmin = np.min([(YT**p).sum(axis=1) for p in grid], axis=0)
    restricted = np.where(T, vals, 0.0).sum(axis=1) >= c * (gamma * n) ** (-l2lq_beta(q)) * rmin
    return (total == 0) | whole | restricted


# ---------------------------------------------------------------- one step


def _grid_lewis_sum(X: np.ndarray, grid: np.ndarray, tol: float) -> np.ndarray:
    """Sum over ``p`` in ``grid`` of the ℓp Lewis weights of ``X``, warm-started along the grid."""
    out = np.zeros(X.shape[0])
    if X.shape[0] == 0:
        return out
    w0 = None
    for p in grid:
        lw = lewis_weights(X, float(p), tol=tol, max_iter=300, w0=w0)
        out += lw.w
        w0 = np.maximum(lw.w, 1e-12)
    return out


def _unweighted_step(X: np.ndarray, cfg: HuberStepConfig, rng, d: int) -> tuple[np.ndarray, np.ndarray, dict]:
    """Keep-or-sample decision for an unweighted block; returns (kept-or-sampled local idx, weight factors)."""
    n = X.shape[0]
    gamma = gamma_for(n, cfg.beta)
    m = cfg.m(d, n)
    if m / (gamma * n) >= 1:
        return np.arange(n), np.ones(n), {"passthrough": True, "n": n}
    sens = m_sensitivities(X, cfg.loss(), gamma * n, rng, **cfg.sens_kw)
    heavy = sens.level_rep >= 0
    light = np.flatnonzero(~heavy)
    grid = p_grid(n, 1.0, 2.0, cfg.grid_c, cfg.grid_cap)
    full = _grid_lewis_sum(X, grid, cfg.lewis_tol)
    restricted = np.zeros(n)
    restricted[light] = _grid_lewis_sum(X[light], grid, cfg.lewis_tol)
    pr = np.minimum(1.0, m / gamma * (1.0 / n + full[light] / d + restricted[light] / d))
    keep = rng.random(light.size) < pr
    idx = np.concatenate([np.flatnonzero(heavy), light[keep]])
    fac = np.concatenate([np.ones(int(heavy.sum())), 1.0 / pr[keep]])
    order = np.argsort(idx)
    info = {"passthrough": False, "n": n, "gamma": gamma, "m": m, "heavy": int(heavy.sum()), "sampled": int(keep.sum()), "grid": grid.size}
    return idx[order], fac[order], info


def huber_embed_step(A, w: WeightVector | None, eps: float = 0.25, delta: float = 0.1, rng=None, config: HuberStepConfig | None = None, return_info: bool = False):
    """One sampling round over dyadic weight levels ``2^(j-1) <= w_i < 2^j``.

    Within a level, rows flagged as heavy by the hashing sensitivities keep
    their weight; the others are sampled with probability
    ``min(1, m/gamma (1/n + sum_p w^p_i(A_T)/d + sum_p w^p_i(A_S)/d))`` where
    ``S`` is the light part of the level, and reweighted by its inverse.
    """
    A = check_matrix(A)
    rng = as_generator(rng)
    cfg = config or HuberStepConfig(eps=eps, delta=delta)
    n, d = A.shape
    w = w if w is not None else WeightVector.ones(n)
    out_idx, out_val, infos = [], [], []
    for lvl in weight_levels(w):
        pos = np.searchsorted(w.idx, lvl)
        local, fac, info = _unweighted_step(A[lvl], cfg, rng, d)
        out_idx.append(lvl[local])
        out_val.append(w.val[pos[local]] * fac)
        infos.append(info)
    idx = np.concatenate(out_idx) if out_idx else np.zeros(0, dtype=np.int64)
    val = np.concatenate(out_val) if out_val else np.zeros(0)
    order = np.argsort(idx)
    res = WeightVector(n, idx[order], val[order])
    return (res, infos) if return_info else res


# ---------------------------------------------------------------- recursion


def huber_target(d: int, n: int, eps: float, delta: float, C_h: float = 10.0, kappa_h: float = 4.0, beta: float = BETA) -> int:
    """Stopping size ``C_h d^(1+beta) (log(n/delta)/eps)^kappa_h``."""
    return max(d, int(math.ceil(C_h * d ** (1 + beta) * (math.log(n / delta) / eps) ** kappa_h)))


def step_cap(n: int) -> int:
    return int(math.ceil(math.log2(max(math.log2(max(n, 4)), 1.0)))) + 3


def affine_recurrence(a0: float, lam: float, b: float, i: int) -> float:
    """Closed form of ``a_{k+1} = lam a_k + b`` after ``i`` steps."""
    return (b - lam**i * (b - (1 - lam) * a0)) / (1 - lam)


def affine_fixed_point(lam: float, b: float) -> float:
    return b / (1 - lam)


@dataclass
class HuberEmbedding:
    weights: WeightVector
    target: int
    steps: int
    sizes: list
    flagged: bool
    reason: str


def huber_subspace_embedding(
    A,
    eps: float = 0.25,
    delta: float = 0.1,
    rng=None,
    C_h: float = 10.0,
    kappa_h: float = 4.0,
    config: HuberStepConfig | None = None,
    weights: WeightVector | None = None,
    target: int | None = None,
    return_info: bool = False,
):
    """Repeat :func:`huber_embed_step` until at most ``target`` rows remain.

    Stops early (flagged) at ``ceil(log2 log2 n) + 3`` steps or when a step
    removes less than 5% of the rows.
    """
    A = check_matrix(A)
    rng = as_generator(rng)
    n, d = A.shape
    cfg = config or HuberStepConfig(eps=eps, delta=delta)
    if target is None:
        target = huber_target(d, n, eps, delta, C_h, kappa_h, cfg.beta)
    w = weights if weights is not None else WeightVector.ones(n)
    sizes = [w.nnz]
    cap = step_cap(n)
    steps, reason = 0, "target"
    while w.nnz > target:
        if steps >= cap:
            reason = "step-cap"
            break
        nxt = huber_embed_step(A, w, cfg.eps, cfg.delta, rng, cfg)
        steps += 1
        sizes.append(nxt.nnz)
        stalled = nxt.nnz > 0.95 * w.nnz
        w = nxt
        if stalled and w.nnz > target:
            reason = "stalled"
            break
    flagged = w.nnz > target
    if not flagged:
        reason = "target"
    info = HuberEmbedding(w, target, steps, sizes, flagged, reason)
    return info if return_info else w


# ---------------------------------------------------------------- active regression


def huber_active(
    A,
    b,
    eps: float = 0.25,
    rng=None,
    delta: float = 0.1,
    tau: float = 1.0,
    C_h: float = 10.0,
    kappa_h: float = 4.0,
    config: HuberStepConfig | None = None,
    refine_mult: float = 4.0,
) -> SolveResult:
    """Constant-factor fit on a Huber embedding, then a refit on the residual.

    The second sample is drawn afresh with ``refine_mult`` times the
    oversampling and target of the first; ``b`` is read only at the two
    samples, the residual through a shifted view so shared rows are free.
    """
    A = check_matrix(A)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    n, d = A.shape
    cfg = config or HuberStepConfig(eps=eps, delta=delta, tau=tau)
    M = cfg.loss()
    first = huber_subspace_embedding(A, eps, delta, rng, C_h, kappa_h, cfg, return_info=True)
    w = first.weights
    cf = solve_weighted_mloss(A[w.idx], oracle.query(w.idx), w.val, M, rng=rng)
    x_c = cf.x
    cfg2 = HuberStepConfig(**{**cfg.__dict__, "C_m": cfg.C_m * refine_mult})
    second = huber_subspace_embedding(A, eps, delta, rng, C_h * refine_mult, kappa_h, cfg2, return_info=True)
    w2 = second.weights
    z = OracleView(oracle, shift=lambda idx: A[idx] @ x_c)
    ref = solve_weighted_mloss(A[w2.idx], z.query(w2.idx), w2.val, M, rng=rng, x0=np.zeros(d))
    x = x_c + ref.x
    info = {
        "queries": oracle.count,
        "budget": first.target + second.target,
        "steps": [first.steps, second.steps],
        "sizes": [first.sizes, second.sizes],
        "flagged": first.flagged or second.flagged,
        "x_c": x_c,
    }
    return SolveResult(x, ref.objective, cf.iterations + ref.iterations, cf.converged and ref.converged, info)
