"""Leverage scores, Lewis weights, row splitting and Lewis-weight row samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import TargetOracle, WeightVector, as_generator, check_matrix

RANK_RTOL = 1e-10


def _leverage(B: np.ndarray) -> tuple[np.ndarray, int]:
    """Leverage scores of ``B`` and its numerical rank (pivoted QR)."""
    n, d = B.shape
    if not np.any(B):
        return np.zeros(n), 0
    Q, R, _ = scipy.linalg.qr(B, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_RTOL * diag[0]))
    Qr = Q[:, :rank]
    return np.einsum("ij,ij->i", Qr, Qr), rank


def leverage_scores(A) -> np.ndarray:
    """``a_i^T (A^T A)^+ a_i`` for every row; sums to ``rank(A)``."""
    lev, _ = _leverage(check_matrix(A))
    return np.clip(lev, 0.0, 1.0)


def matrix_rank(A) -> int:
    return _leverage(check_matrix(A))[1]


@dataclass
class LewisWeights:
    p: float
    w: np.ndarray
    sum_w: float
    residual: float
    iterations: int
    converged: bool
    rank: int


def _lewis_update(A: np.ndarray, w: np.ndarray, p: float, live: np.ndarray) -> tuple[np.ndarray, int]:
    # Leverage of W^(1/2 - 1/p) A gives s_i^2 * q_i with q_i the quadratic form
    # of the fixed point; undo the row scaling to recover q_i.
    scale2 = np.zeros_like(w)
    scale2[live] = w[live] ** (1.0 - 2.0 / p)
    B = A[live] * np.sqrt(scale2[live])[:, None]
    lev, rank = _leverage(B)
    out = np.zeros_like(w)
    out[live] = (np.maximum(lev, 0.0) / scale2[live]) ** (p / 2.0)
    return out, rank


def lewis_weights(A, p: float, tol: float = 1e-10, max_iter: int = 1000, w0=None) -> LewisWeights:
    """ℓp Lewis weights by fixed-point iteration.

    Plain iteration for ``p < 4``; for larger ``p`` each step is damped
    geometrically with exponent ``min(1, 2/p)``. All-zero rows get weight 0
    and are left out of the residual.
    """
    A = check_matrix(A)
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    n, d = A.shape
    live = np.any(A != 0, axis=1)
    if not live.any():
        return LewisWeights(p, np.zeros(n), 0.0, 0.0, 0, True, 0)
    if p == 2:
        lev, rank = _leverage(A)
        w = np.where(live, np.clip(lev, 0.0, 1.0), 0.0)
        return LewisWeights(p, w, float(w.sum()), 0.0, 1, True, rank)

    eta = 1.0 if p < 4 else min(1.0, 2.0 / p)
    if w0 is None:
        w = np.where(live, d / n, 0.0)
    else:
        w = np.where(live, np.asarray(w0, dtype=np.float64), 0.0)
    residual = math.inf
    rank = d
    it = 0
    for it in range(1, max_iter + 1):
        upd, rank = _lewis_update(A, w, p, live)
        residual = float(np.max(np.abs(w[live] - upd[live]) / w[live]))
        if residual <= tol:
            break
        if eta == 1.0:
            w = upd
        else:
            w = np.where(live, w ** (1 - eta) * np.maximum(upd, 1e-300) ** eta, 0.0)
    return LewisWeights(p, w, float(w.sum()), residual, it, residual <= tol, rank)


def lewis_residual(A, w: np.ndarray, p: float) -> float:
    """Largest relative violation of the Lewis fixed point at ``w``."""
    A = check_matrix(A)
    live = np.any(A != 0, axis=1) & (w > 0)
    upd, _ = _lewis_update(A, np.asarray(w, dtype=np.float64), p, live)
    return float(np.max(np.abs(w[live] - upd[live]) / w[live]))


# ---------------------------------------------------------------- splitting


def split_rows(A, w_tilde, p: float, C2: float = 4.0):
    """Replace heavy rows by ``k`` copies of ``a_i / k^(1/p)``.

    A row is heavy when its Lewis upper bound exceeds ``C2 d / n``; ``k`` is
    ``ceil(w_i / (C2 d / n))``. Returns the new matrix and the parent map.
    """
    A = check_matrix(A)
    n, d = A.shape
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    k = split_counts(w_tilde, n, d, C2)
    parent = np.repeat(np.arange(n), k)
    A2 = A[parent] / (k[parent] ** (1.0 / p))[:, None]
    return A2, parent


def split_counts(w_tilde: np.ndarray, n: int, d: int, C2: float) -> np.ndarray:
    thresh = C2 * d / n
    k = np.ones(w_tilde.size, dtype=np.int64)
    heavy = w_tilde > thresh
    k[heavy] = np.ceil(w_tilde[heavy] / thresh).astype(np.int64)
    return k


def split_and_sample(A2, p: float, rng, max_redraws: int = 64):
    """Keep each row with probability 1/2 and scale kept rows by ``2^(1/p)``."""
    A2 = check_matrix(A2)
    rng = as_generator(rng)
    for _ in range(max_redraws):
        keep = np.flatnonzero(rng.random(A2.shape[0]) < 0.5)
        if keep.size:
            return A2[keep] * 2.0 ** (1.0 / p), keep
    raise RuntimeError("split-and-sample kept no rows after repeated draws")


# ---------------------------------------------------------------- one-shot sampling


@dataclass
class SamplingPlan:
    probabilities: np.ndarray
    exponent: float
    mode: str = "one-shot"


@dataclass
class SampledRows:
    idx: np.ndarray
    rows: np.ndarray
    weights: np.ndarray
    b: np.ndarray | None = None

    def as_weight_vector(self, n: int) -> WeightVector:
        return WeightVector(n, self.idx, self.weights)


def lewis_sampling_plan(w_tilde, p: float, m: float, d: int | None = None) -> SamplingPlan:
    """``p_i = min(1, m d^max(0, p/2-1) w_i)``; kept rows scale by ``p_i^(-1/p)``."""
    if not m > 0:
        raise ValueError("m must be positive")
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    if d is None:
        d = max(1, int(round(w_tilde.sum())))
    probs = np.minimum(1.0, m * d ** max(0.0, p / 2 - 1) * w_tilde)
    return SamplingPlan(probs, 1.0 / p, "one-shot")


def draw_plan(plan: SamplingPlan, rng) -> np.ndarray:
    rng = as_generator(rng)
    pr = plan.probabilities
    return np.flatnonzero(rng.random(pr.size) < pr)


def apply_plan(A, plan: SamplingPlan, rng, oracle: TargetOracle | None = None, idx=None) -> SampledRows:
    """Draw rows by ``plan``; query the oracle at exactly the kept rows."""
    A = check_matrix(A)
    if idx is None:
        idx = draw_plan(plan, rng)
    pr = plan.probabilities[idx]
    rows = A[idx] * (pr ** -plan.exponent)[:, None]
    b = None if oracle is None else oracle.query(idx)
    return SampledRows(idx, rows, 1.0 / pr, b)


# ---------------------------------------------------------------- embedding


def embedding_size(p: float, d: int, n: int, eps: float, delta: float, C_se: float = 4.0) -> int:
    """Row target ``C_se d^max(1,p/2) / eps^2 ((log d)^2 log n + log 1/delta)``."""
    ld = math.log(d) if d > 1 else 0.0
    val = C_se * d ** max(1.0, p / 2) / eps**2 * (ld**2 * math.log(max(n, 2)) + math.log(1 / delta))
    return max(d, int(math.ceil(val)))


@dataclass
class EmbeddingInfo:
    weights: WeightVector
    target: int
    iterations: int
    failed: bool
    sizes: list


def halving_step(A, v: WeightVector, p: float, rng, C2: float = 4.0, lewis_tol: float = 1e-8) -> WeightVector:
    """One round of Lewis-weight splitting followed by Bernoulli(1/2) sampling.

    Works on merged weights: the copies of a split row all share its parent, so
    parent ``i`` with ``k`` copies of which ``c`` survive gets weight
    ``v_i * 2 c / k``.
    """
    rng = as_generator(rng)
    rows = A[v.idx] * (v.val ** (1.0 / p))[:, None]
    lw = lewis_weights(rows, p, tol=lewis_tol)
    n_cur, d = rows.shape
    k = split_counts(lw.w, n_cur, d, C2)
    for _ in range(64):
        kept = rng.binomial(k, 0.5)
        if kept.any():
            break
    else:
        raise RuntimeError("split-and-sample kept no rows after repeated draws")
    alive = kept > 0
    return WeightVector(v.n, v.idx[alive], v.val[alive] * 2.0 * kept[alive] / k[alive])


def lp_subspace_embedding(
    A,
    p: float,
    eps: float,
    delta: float,
    rng,
    C_se: float = 4.0,
    C2: float = 4.0,
    target: int | None = None,
    weights: WeightVector | None = None,
    return_info: bool = False,
):
    """Repeat split-and-sample until at most ``target`` rows remain.

    Returned weights are per original row: row ``i`` enters the embedded norm
    as ``w_i |a_i^T x|^p``.
    """
    A = check_matrix(A)
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rng = as_generator(rng)
    n, d = A.shape
    if target is None:
        target = embedding_size(p, d, n, eps, delta, C_se)
    v = weights if weights is not None else WeightVector.ones(n)
    cap = max(1, math.ceil(math.log2(max(n, 2))))
    sizes = [v.nnz]
    it = 0
    while v.nnz > target and it < cap:
        v = halving_step(A, v, p, rng, C2=C2)
        it += 1
        sizes.append(v.nnz)
    failed = v.nnz > target
    if return_info:
        return EmbeddingInfo(v, target, it, failed, sizes)
    return v
