"""Sensitivity upper bounds for monotone M-estimator losses via hashing.

Rows are hashed into ``10 * 2^r`` buckets for every scale ``r``; a row whose
ℓ_{p_M} Lewis weight inside its bucket reaches ``theta`` has sensitivity at
least about ``2^-r`` and gets its estimate raised to ``2 / 2^r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .core import Loss, TargetOracle, WeightVector, as_generator, check_matrix

THETA = 1.0 / 3.0


@dataclass
class SensitivityEstimates:
    s: np.ndarray
    total: float
    level_r: np.ndarray
    level_rep: np.ndarray
    tau: float
    config: dict = field(default_factory=dict)


def _batched_leverage(X: np.ndarray) -> np.ndarray:
    """Leverage scores of every (K x d) slice of ``X`` (padding rows are zero).

    Works through the d x d Gram matrices, which is much cheaper than a
    batched SVD when buckets are tall; eigenvalues below ``1e-12`` of the
    largest count as rank deficiency.
    """
    G = np.matmul(X.transpose(0, 2, 1), X)
    ev, V = np.linalg.eigh(G)
    top = ev[:, -1:]
    inv = np.where(ev > 1e-12 * np.maximum(top, 1e-300), 1.0 / np.where(ev > 0, ev, 1.0), 0.0)
    inv = np.where(top > 0, inv, 0.0)
    Y = X @ V
    return np.matmul(Y * Y, inv[:, :, None])[:, :, 0]


def bucket_lewis_weights(A: np.ndarray, labels: np.ndarray, p: float, tol: float = 1e-6, max_iter: int = 100):
    """ℓp Lewis weights of each row computed inside its own bucket.

    Returns ``(weights, fallback_rows)``; buckets whose iteration does not
    reach ``tol`` fall back to plain leverage scores.
    """
    n, d = A.shape
    order = np.argsort(labels, kind="stable")
    lab = labels[order]
    uniq, start, counts = np.unique(lab, return_index=True, return_counts=True)
    nb, K = uniq.size, int(counts.max())
    slot = np.arange(n) - np.repeat(start, counts)
    bucket = np.repeat(np.arange(nb), counts)
    X = np.zeros((nb, K, d))
    X[bucket, slot] = A[order]
    live = np.zeros((nb, K), dtype=bool)
    live[bucket, slot] = np.any(A[order] != 0, axis=1)

    lev = _batched_leverage(X)
    if p == 2:
        W = np.where(live, lev, 0.0)
        fallback = np.zeros(nb, dtype=bool)
    else:
        # start from leverage scores; a bucket whose live rows all have
        # leverage 1 (independent rows) is already at its Lewis fixed point
        W = np.where(live, np.maximum(lev, 1e-12), 0.0)
        eta = 1.0 if p < 4 else min(1.0, 2.0 / p)
        done = np.all(~live | (np.abs(lev - 1.0) <= 1e-9), axis=1)
        W[done] = np.where(live[done], 1.0, 0.0)
        for _ in range(max_iter):
            act = ~done
            if not act.any():
                break
            Wa, La = W[act], live[act]
            scale2 = np.where(La, np.maximum(Wa, 1e-300) ** (1 - 2 / p), 0.0)
            la = _batched_leverage(X[act] * np.sqrt(scale2)[:, :, None])
            upd = np.where(La, (np.maximum(la, 0.0) / np.maximum(scale2, 1e-300)) ** (p / 2), 0.0)
            rel = np.where(La, np.abs(Wa - upd) / np.maximum(Wa, 1e-300), 0.0).max(axis=1)
            newW = upd if eta == 1.0 else np.where(La, Wa ** (1 - eta) * np.maximum(upd, 1e-300) ** eta, 0.0)
            conv = rel <= tol
            # converged buckets keep the iterate at which the residual was measured
            W[act] = np.where(conv[:, None], Wa, newW)
            idx = np.flatnonzero(act)
            done[idx[conv]] = True
        fallback = ~done
        if fallback.any():
            W[fallback] = np.where(live[fallback], lev[fallback], 0.0)
    out = np.empty(n)
    out[order] = W[bucket, slot]
    fb_rows = np.zeros(n, dtype=bool)
    fb_rows[order] = fallback[bucket]
    return out, fb_rows


def _check_monotone(M: Loss) -> None:
    grid = np.concatenate([[0.0], np.logspace(-6, 6, 241)])
    vals = M(grid)
    if vals[0] != 0 or np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
        raise ValueError(f"loss {M.name} is not monotone; sensitivity bounds need a monotone loss")


def m_sensitivities(
    A,
    M: Loss,
    tau: float,
    rng,
    c_rep: float = 2.0,
    theta: float = THETA,
    lewis_tol: float = 1e-6,
    lewis_max_iter: int = 100,
    single_hash: bool = False,
) -> SensitivityEstimates:
    """Sensitivity upper bounds summing to ``O(d^max(1, p_M/2) log^2 n + tau)``.

    ``single_hash`` runs one hash per scale instead of ``ceil(c_rep log n)``.
    """
    A = check_matrix(A)
    _check_monotone(M)
    rng = as_generator(rng)
    n, d = A.shape
    if not 1 <= tau <= n:
        raise ValueError(f"tau must lie in [1, n={n}], got {tau}")
    s = np.full(n, min(1.0, 2.0 * tau / n))
    level_r = np.zeros(n, dtype=np.int64)
    level_rep = np.full(n, -1, dtype=np.int64)
    R = int(math.ceil(math.log2(n / tau))) if n > tau else 0
    t = 1 if single_hash else max(1, int(math.ceil(c_rep * math.log(n))))
    fallbacks = 0
    for r in range(1, R + 1):
        B = 10 * 2**r
        bump = 2.0 / 2**r
        for rep in range(t):
            labels = rng.integers(0, B, size=n)
            lw, fb = bucket_lewis_weights(A, labels, M.p_M, lewis_tol, lewis_max_iter)
            fallbacks += int(fb.sum())
            hit = (lw >= theta) & (s < bump)
            s[hit] = bump
            level_r[hit] = r
            level_rep[hit] = rep
    s = np.minimum(s, 1.0)
    cfg = {"c_rep": c_rep, "theta": theta, "levels": R, "repetitions": t, "single_hash": single_hash, "fallback_rows": fallbacks}
    return SensitivityEstimates(s, float(s.sum()), level_r, level_rep, float(tau), cfg)


def weight_levels(w: WeightVector) -> list[np.ndarray]:
    """Dyadic level sets ``{i : 2^(j-1) <= w_i < 2^j}`` of the support."""
    if w.nnz and w.val.min() < 1 - 1e-12:
        raise ValueError("weighted sensitivities need weights >= 1 on the support")
    j = np.floor(np.log2(np.maximum(w.val, 1.0))).astype(np.int64)
    return [w.idx[j == lv] for lv in np.unique(j)]


def weighted_m_sensitivities(A, M: Loss, w: WeightVector, tau: float, rng, **kw) -> SensitivityEstimates:
    """Bounds for ``sum_i w_i M(.)``: run per dyadic weight level, doubled."""
    A = check_matrix(A)
    rng = as_generator(rng)
    n = A.shape[0]
    s = np.zeros(n)
    level_r = np.zeros(n, dtype=np.int64)
    level_rep = np.full(n, -1, dtype=np.int64)
    levels = weight_levels(w)
    for idx in levels:
        sub = m_sensitivities(A[idx], M, min(max(tau, 1.0), idx.size), rng, **kw)
        s[idx] = np.minimum(1.0, 2.0 * sub.s)
        level_r[idx] = sub.level_r
        level_rep[idx] = sub.level_rep
    cfg = dict(kw)
    cfg["weight_levels"] = len(levels)
    return SensitivityEstimates(s, float(s.sum()), level_r, level_rep, float(tau), cfg)


def composite_sensitivities(A, losses: list[Loss], tau: float, rng, **kw) -> SensitivityEstimates:
    """Bounds for a sum of losses: twice the largest component bound."""
    rng = as_generator(rng)
    parts = [m_sensitivities(A, M, tau, rng, **kw) for M in losses]
    s = np.minimum(1.0, 2.0 * np.max([e.s for e in parts], axis=0))
    return SensitivityEstimates(s, float(s.sum()), parts[0].level_r, parts[0].level_rep, float(tau), {"components": len(parts)})


def sensitivity_sample(w, s, m: float, rng, oracle: TargetOracle | None = None) -> WeightVector:
    """Keep row ``i`` with probability ``min(1, m s_i)`` and divide its weight by it."""
    if not m > 0:
        raise ValueError("m must be positive")
    rng = as_generator(rng)
    s_arr = s.s if isinstance(s, SensitivityEstimates) else np.asarray(s, dtype=np.float64)
    if w is None:
        w = WeightVector.ones(s_arr.size)
    pr = np.minimum(1.0, m * s_arr[w.idx])
    keep = (rng.random(w.nnz) < pr) & (pr > 0)
    out = WeightVector(w.n, w.idx[keep], w.val[keep] / pr[keep])
    if oracle is not None:
        oracle.query(out.idx)
    return out


# ---------------------------------------------------------------- brute-force oracle


def brute_force_sensitivities(A, M: Loss, rng, n_random: int = 100_000, ascend: bool = True, scales=(-3.0, 4.0)) -> np.ndarray:
    """Empirical lower bounds on sensitivities ``max_x M(|a_i x|) / sum_j M(|a_j x|)``.

    Random directions are drawn at log-uniform radii (the loss need not be
    scale invariant), then each row's best direction is polished by a local
    search. Every returned value is attained, so it never exceeds the truth.
    """
    A = check_matrix(A)
    rng = as_generator(rng)
    n, d = A.shape
    best = np.zeros(n)
    arg = np.zeros((n, d))
    batch = max(1, 2_000_000 // n)
    done = 0
    while done < n_random:
        k = min(batch, n_random - done)
        X = rng.standard_normal((k, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        X *= (10.0 ** rng.uniform(scales[0], scales[1], size=k))[:, None]
        V = M(X @ A.T)
        tot = V.sum(axis=1, keepdims=True)
        R = np.where(tot > 0, V / np.where(tot > 0, tot, 1.0), 0.0)
        j = R.argmax(axis=0)
        val = R[j, np.arange(n)]
        better = val > best
        best[better] = val[better]
        arg[better] = X[j[better]]
        done += k
    if ascend:
        for i in range(n):
            if best[i] >= 1 - 1e-12:
                continue

            def neg(z, i=i):
                v = M(A @ z)
                t = v.sum()
                return -(v[i] / t) if t > 0 else 0.0

            res = scipy.optimize.minimize(neg, arg[i], method="Nelder-Mead", options={"maxiter": 400, "xatol": 1e-10, "fatol": 1e-12})
            if -res.fun > best[i]:
                best[i] = -res.fun
    return best
