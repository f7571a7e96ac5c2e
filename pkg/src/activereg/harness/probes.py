"""Empirical distortion probes for weighted row samples."""

from __future__ import annotations

import numpy as np

from ..core import Loss, WeightVector, as_generator, check_matrix
from ..orlicz import orlicz_norm


def _lp_ratio(A, w: WeightVector, p: float, X: np.ndarray) -> np.ndarray:
    full = np.sum(np.abs(A @ X) ** p, axis=0)
    samp = w.val @ (np.abs(A[w.idx] @ X) ** p)
    return (samp / full) ** (1.0 / p)


def _log_ratio_and_grad(A, As, wv, p, X):
    Y, Ys = A @ X, As @ X
    F = np.abs(Y) ** p
    Fs = np.abs(Ys) ** p
    full, samp = F.sum(axis=0), wv @ Fs
    G = A.T @ (np.sign(Y) * np.abs(Y) ** (p - 1)) / full
    Gs = As.T @ (wv[:, None] * np.sign(Ys) * np.abs(Ys) ** (p - 1)) / samp
    return np.log(samp / full) / p, Gs - G


def _ascend(A, w: WeightVector, p: float, X: np.ndarray, steps: int = 200) -> np.ndarray:
    """Batched normalized gradient ascent on ``|log ratio|``, one column per start.

    Returns the best signed log ratio per column.
    """
    As, wv = A[w.idx], w.val
    X = X / np.linalg.norm(X, axis=0)
    val, grad = _log_ratio_and_grad(A, As, wv, p, X)
    best = np.abs(val)
    eta = np.full(X.shape[1], 0.3)
    for _ in range(steps):
        g = np.sign(val) * grad
        g -= X * (X * g).sum(axis=0)  # the ratio is scale invariant: move on the sphere
        nrm = np.linalg.norm(g, axis=0)
        Z = X + eta * g / np.where(nrm > 0, nrm, 1.0)
        Z /= np.linalg.norm(Z, axis=0)
        v2, g2 = _log_ratio_and_grad(A, As, wv, p, Z)
        up = np.abs(v2) > best
        X[:, up], val[up], grad[:, up], best[up] = Z[:, up], v2[up], g2[:, up], np.abs(v2[up])
        eta = np.where(up, eta * 1.5, eta * 0.5)
        if eta.max() < 1e-8:
            break
    return val


def lp_distortion(A, w: WeightVector, p: float, rng, n_dirs: int = 10_000, n_ascent: int = 50, batch: int = 500) -> float:
    """Largest ``| ||Ax||_{p,w} / ||Ax||_p - 1 |`` seen.

    Random Gaussian directions first; then the ``n_ascent`` worst of them are
    pushed further by gradient ascent on the log of the ratio.
    """
    A = check_matrix(A)
    rng = as_generator(rng)
    d = A.shape[1]
    devs, dirs = [], []
    for s in range(0, n_dirs, batch):
        X = rng.standard_normal((d, min(batch, n_dirs - s)))
        devs.append(np.abs(_lp_ratio(A, w, p, X) - 1.0))
        dirs.append(X)
    dev = np.concatenate(devs)
    worst = float(dev.max())
    if n_ascent > 0 and w.nnz:
        X = np.concatenate(dirs, axis=1)[:, np.argsort(dev)[::-1][:n_ascent]]
        worst = max(worst, float(np.max(np.abs(np.expm1(_ascend(A, w, p, X))))))
    return worst


def m_distortion(A, w: WeightVector, M: Loss, rng, n_dirs: int = 10_000, radii=None, batch: int = 500) -> float:
    """Largest relative error of ``sum_i w_i M(a_i x)`` over random ``x`` at several radii."""
    A = check_matrix(A)
    rng = as_generator(rng)
    d = A.shape[1]
    radii = 10.0 ** np.arange(-3, 5) if radii is None else np.asarray(radii, dtype=np.float64)
    per = max(1, n_dirs // len(radii))
    worst = 0.0
    for rho in radii:
        for s in range(0, per, batch):
            X = rng.standard_normal((d, min(batch, per - s)))
            X *= rho / np.linalg.norm(X, axis=0)
            full = M(A @ X).sum(axis=0)
            samp = w.val @ M(A[w.idx] @ X)
            ok = full > 0
            worst = max(worst, float(np.max(np.abs(samp[ok] / full[ok] - 1.0))) if ok.any() else 0.0)
    return worst


def orlicz_distortion(A, w: WeightVector, G: Loss, rng, n_dirs: int = 10_000, radii=(1e-2, 1.0, 1e2), batch: int = 500) -> float:
    """Largest ``| ||Ax||_{G,w} / ||Ax||_G - 1 |`` over random ``x`` at several scales."""
    A = check_matrix(A)
    rng = as_generator(rng)
    d = A.shape[1]
    per = max(1, n_dirs // len(radii))
    worst = 0.0
    for rho in radii:
        for s in range(0, per, batch):
            X = rng.standard_normal((d, min(batch, per - s)))
            X *= rho / np.linalg.norm(X, axis=0)
            Y = A @ X
            a = orlicz_norm(Y, G, check=False)
            b = orlicz_norm(Y[w.idx], G, w.val, check=False)
            worst = max(worst, float(np.max(np.abs(b / a - 1.0))))
    return worst
