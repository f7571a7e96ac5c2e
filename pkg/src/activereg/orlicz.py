"""Orlicz norms and two-stage sensitivity-sampling embeddings for them."""

from __future__ import annotations

import math

import numpy as np

from .core import Loss, WeightVector, _dense_weights, as_generator, check_matrix
from .m_active import two_stage_sample

_PROBE = np.logspace(-8, 8, 161)


def check_orlicz(G: Loss) -> None:
    """``G(0) = 0``, strictly increasing and convex on a log-spaced probe grid."""
    v = G(np.concatenate([[0.0], _PROBE]))
    if v[0] != 0:
        raise ValueError(f"{G.name}: G(0) must be 0")
    if np.any(np.diff(v) <= 0):
        raise ValueError(f"{G.name}: G must be strictly increasing")
    x = _PROBE
    mid = G(0.5 * (x[:-1] + x[1:]))
    if np.any(mid > 0.5 * (v[1:-1] + v[2:]) * (1 + 1e-9)):
        raise ValueError(f"{G.name}: G must be convex")


def orlicz_norm(y, G: Loss, w=None, rtol: float = 1e-12, check: bool = True):
    """``inf {t > 0 : sum_i w_i G(|y_i| / t) <= 1}`` by bisection.

    ``y`` may be 2-d, in which case each column is a separate vector and all
    columns are bisected together. The bracket is grown geometrically from
    ``max |y_i|`` and its sign change checked before bisecting.
    """
    if check:
        check_orlicz(G)
    Y = np.abs(np.asarray(y, dtype=np.float64))
    vec = Y.ndim == 1
    if vec:
        Y = Y[:, None]
    if not np.all(np.isfinite(Y)):
        raise ValueError("y must be finite")
    wd = _dense_weights(w, Y.shape[0])[:, None]

    def f(t):
        return (wd * G(Y / t)).sum(axis=0) - 1.0

    top = Y.max(axis=0)
    live = top > 0
    out = np.zeros(Y.shape[1])
    if live.any():
        Y = Y[:, live]
        top = top[live]
        lo, hi = top.copy(), top.copy()
        for _ in range(2000):
            bad = f(lo) < 0
            if not bad.any():
                break
            lo[bad] *= 0.5
        for _ in range(2000):
            bad = f(hi) > 0
            if not bad.any():
                break
            hi[bad] *= 2.0
        if np.any(f(lo) < 0) or np.any(f(hi) > 0):
            raise RuntimeError("could not bracket the Orlicz norm")
        # geometric bisection: the bracket may span many orders of magnitude
        while True:
            gap = hi - lo > rtol * hi
            if not gap.any():
                break
            mid = np.sqrt(lo * hi)
            mid = np.where((mid <= lo) | (mid >= hi), 0.5 * (lo + hi), mid)
            pos = f(mid) > 0
            lo = np.where(gap & pos, mid, lo)
            hi = np.where(gap & ~pos, mid, hi)
        out[live] = hi
    return float(out[0]) if vec else out


def orlicz_rows(d: int, n: int, G: Loss, eps: float, C_o: float = 1.0) -> int:
    """``C_o d^max(2, p_G/2+1) log^3 n log(1/eps) / eps^2``."""
    val = C_o * d ** max(2.0, G.p_M / 2 + 1) * math.log(max(n, 3)) ** 3 * max(math.log(1 / eps), 1.0) / eps**2
    return max(d, int(math.ceil(val)))


def orlicz_subspace_embedding(A, G: Loss, eps: float = 0.25, rng=None, rows: int | None = None, C_o: float = 1.0, tau1: float | None = None, sens_kw=None, return_info: bool = False):
    """Weights ``w'`` with ``||Ax||_{G,w'} = (1 ± eps) ||Ax||_G``.

    Sensitivities of ``G`` itself (monotone with growth ``p_G``) drive a
    first sample, weighted sensitivities at ``tau = d`` a second one.
    """
    A = check_matrix(A)
    check_orlicz(G)
    rng = as_generator(rng)
    n, d = A.shape
    if rows is None:
        rows = orlicz_rows(d, n, G, eps, C_o)
    if rows >= n:
        w, info = WeightVector.ones(n), {"passthrough": True}
    else:
        if tau1 is None:
            tau1 = min(d**3, n / 2)
        w, info = two_stage_sample(A, G, rows, tau1, rng, sens_kw)
    info["rows_target"] = rows
    return (w, info) if return_info else w
