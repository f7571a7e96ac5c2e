"""Weighted regression solvers for sampled problems, plus a 1-d brute-force oracle."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .core import Loss, as_generator, check_matrix, loss_catalog, mcost


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)


def _prep(A, b, w):
    A = check_matrix(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.size != A.shape[0]:
        raise ValueError(f"b has length {b.size}, expected {A.shape[0]}")
    w = np.ones(A.shape[0]) if w is None else np.asarray(getattr(w, "dense", lambda: w)(), dtype=np.float64)
    if w.shape != b.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite, nonnegative and match b")
    keep = w > 0
    return A[keep], b[keep], w[keep], A.shape[1]


def _wls(A, b, c):
    """argmin sum c_i (a_i x - b_i)^2 via the normal equations."""
    G = (A * c[:, None]).T @ A
    rhs = A.T @ (c * b)
    try:
        with warnings.catch_warnings():
            # an ill-conditioned Gram matrix goes to the QR-based fallback instead
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(G, rhs, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        sq = np.sqrt(c)
        return np.linalg.lstsq(A * sq[:, None], b * sq, rcond=None)[0]


def _scale(r, w, p):
    m = (np.dot(w, np.abs(r) ** p) / w.sum()) ** (1.0 / p)
    return m if m > 0 else 1.0


def _lp_obj(r, w, p):
    return float(np.dot(w, np.abs(r) ** p))


def _irls_lp(A, b, w, p, x, tol, max_iter):
    """Majorize-minimize reweighting for p <= 2 with annealed smoothing."""
    r = A @ x - b
    s2 = _scale(r, w, p) ** 2
    mu_rel, mu_min = 1.0, max(tol * tol, 1e-24)
    it = 0
    obj = _lp_obj(r, w, p)
    converged = False
    while it < max_iter:
        mu = mu_rel * s2
        c = w * (r * r + mu) ** (p / 2 - 1)
        x_new = _wls(A, b, c)
        r_new = A @ x_new - b
        it += 1
        sm_old = float(np.dot(w, (r * r + mu) ** (p / 2)))
        sm_new = float(np.dot(w, (r_new * r_new + mu) ** (p / 2)))
        x, r = x_new, r_new
        stage_tol = tol if mu_rel <= mu_min else max(tol, 1e-4)
        if abs(sm_old - sm_new) <= stage_tol * sm_new:
            if mu_rel <= mu_min:
                converged = True
                break
            mu_rel = max(mu_rel * 0.1, mu_min)
    obj = _lp_obj(r, w, p)
    return x, obj, it, converged


def _newton_lp(A, b, w, p, x, tol, max_iter):
    """Damped Newton on sum w (r^2 + mu)^(p/2) for p >= 1, mu annealed to ~0."""
    r = A @ x - b
    s = _scale(r, w, p)
    mu_rel, mu_min = 1.0, max(tol * tol, 1e-24)
    it = 0
    converged = False

    def f(rr, mu):
        return float(np.dot(w, (rr * rr + mu) ** (p / 2)))

    while it < max_iter:
        mu = mu_rel * s * s
        t = r * r + mu
        g = A.T @ (w * p * r * t ** (p / 2 - 1))
        h = w * p * t ** (p / 2 - 2) * ((p - 1) * r * r + mu)
        H = (A * h[:, None]).T @ A
        try:
            # tiny smoothing leaves H ill-conditioned; the line search below absorbs a rough step
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                step = scipy.linalg.solve(H, g, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        f0 = f(r, mu)
        decr = float(g @ step)
        Astep = A @ step
        alpha = 1.0
        while True:
            r_try = r - alpha * Astep
            f1 = f(r_try, mu)
            if f1 <= f0 - 1e-4 * alpha * decr or alpha < 1e-10:
                break
            alpha *= 0.5
        x = x - alpha * step
        r = r_try
        it += 1
        if decr <= 2 * tol * tol * max(f0, 1e-300) or abs(f0 - f1) <= 1e-3 * tol * f1:
            if mu_rel <= mu_min:
                converged = True
                break
            mu_rel = max(mu_rel * 0.1, mu_min)
    return x, _lp_obj(r, w, p), it, converged


def _subset_fits(A, b, k, rng):
    n, d = A.shape
    fits = []
    for _ in range(k):
        rows = rng.choice(n, size=min(n, d), replace=False)
        fits.append(np.linalg.lstsq(A[rows], b[rows], rcond=None)[0])
    return fits


def lp_kkt_residual(A, b, x, p, w=None) -> float:
    """``||A^T (w * sign(r) |r|^(p-1))||`` relative to ``sum w |r|^p / ||x||``-ish scale."""
    A, b, w, _ = _prep(A, b, w)
    r = A @ x - b
    g = A.T @ (w * np.sign(r) * np.abs(r) ** (p - 1))
    return float(np.linalg.norm(g))


def solve_weighted_lp(
    A,
    b,
    w=None,
    p: float = 2.0,
    tol: float = 1e-8,
    max_iter: int = 500,
    starts: int = 5,
    rng=None,
    x0=None,
) -> SolveResult:
    """Minimize ``sum_i w_i |a_i^T x - b_i|^p``.

    ``p >= 1`` is convex and solved to a global optimum; ``p < 1`` returns the
    best local optimum over several starts and is flagged ``local``.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    A_, b_, w_, d = _prep(A, b, w)
    if A_.shape[0] == 0:
        return SolveResult(np.zeros(d), 0.0, 0, True, {"local": False})
    x_ls = _wls(A_, b_, w_)
    if p == 2:
        return SolveResult(x_ls, _lp_obj(A_ @ x_ls - b_, w_, 2), 1, True, {"local": False})
    if p > 1:
        solver = _newton_lp
        x, obj, it, conv = solver(A_, b_, w_, p, x_ls if x0 is None else np.asarray(x0, float), tol, max_iter)
        return SolveResult(x, obj, it, conv, {"local": False})
    if p == 1:
        x, obj, it, conv = _irls_lp(A_, b_, w_, p, x_ls if x0 is None else np.asarray(x0, float), tol, max_iter)
        return SolveResult(x, obj, it, conv, {"local": False})
    # nonconvex: several starts, keep the best local optimum
    rng = as_generator(0 if rng is None else rng)
    x_l1, _, _, _ = _irls_lp(A_, b_, w_, 1.0, x_ls, 1e-6, 100)
    inits = [x_l1, x_ls]
    if x0 is not None:
        inits.insert(0, np.asarray(x0, dtype=np.float64))
    inits += _subset_fits(A_, b_, max(0, starts - len(inits)), rng)
    best = None
    total = 0
    for xi in inits[: max(starts, 1)]:
        x, obj, it, conv = _irls_lp(A_, b_, w_, p, xi, tol, max_iter)
        total += it
        if best is None or obj < best[1]:
            best = (x, obj, conv)
    return SolveResult(best[0], best[1], total, best[2], {"local": True, "starts": min(len(inits), max(starts, 1))})


# ---------------------------------------------------------------- general losses


def _needs_smoothing(M: Loss) -> bool:
    with np.errstate(all="ignore"):
        w0 = M.irls_weight(np.array([0.0]), 0.0)[0]
    return not np.isfinite(w0) or w0 > 1e12


def _irls_m(A, b, w, M: Loss, x, tol, max_iter):
    r = A @ x - b
    smooth = _needs_smoothing(M)
    s2 = _scale(r, w, 2) ** 2 if smooth else 0.0
    mu_rel, mu_min = (1.0 if smooth else 0.0), (max(tol * tol, 1e-24) if smooth else 0.0)
    obj = mcost(r, M, w)
    it = 0
    converged = False
    while it < max_iter:
        mu = mu_rel * s2
        c = w * M.irls_weight(r, mu)
        if not np.any(c > 0):
            converged = True
            break
        c = np.maximum(c, 1e-14 * c.max())
        x_new = _wls(A, b, c)
        r_new = A @ x_new - b
        obj_new = mcost(r_new, M, w)
        it += 1
        if obj_new > obj and not smooth:
            # reweighting only majorizes for MM-compatible losses; guard anyway
            break
        change = abs(obj - obj_new)
        step = float(np.linalg.norm(x_new - x))
        x, r, obj = x_new, r_new, obj_new
        # near the optimum the objective change is quadratic in the step, so check both
        if change <= tol * max(obj, 1e-300) and step <= 100 * tol * (1.0 + float(np.linalg.norm(x))):
            if mu_rel <= mu_min:
                converged = True
                break
            mu_rel = max(mu_rel * 0.1, mu_min)
    return x, obj, it, converged


def _lbfgs_m(A, b, w, M: Loss, x, tol, max_iter):
    def fg(z):
        r = A @ z - b
        return mcost(r, M, w), A.T @ (w * np.sign(r) * M.derivative(r))

    res = scipy.optimize.minimize(fg, x, jac=True, method="L-BFGS-B", options={"maxiter": max_iter, "gtol": tol, "ftol": tol * 1e-2})
    return res.x, float(res.fun), int(res.nit), bool(res.success)


def m_gradient_norm(A, b, x, M: Loss, w=None) -> float:
    A_, b_, w_, _ = _prep(A, b, w)
    r = A_ @ x - b_
    return float(np.linalg.norm(A_.T @ (w_ * np.sign(r) * M.derivative(r))))


def solve_weighted_mloss(
    A,
    b,
    w=None,
    M: Loss | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    starts: int = 5,
    rng=None,
    x0=None,
    extra_starts=(),
) -> SolveResult:
    """Minimize ``sum_i w_i M(|a_i^T x - b_i|)``.

    Convex losses get one reweighting run from the least-squares point;
    nonconvex ones (Tukey variants, ``l2lq`` with ``q < 1``) run from several
    starts including robust fits and random exact fits, keeping the best.
    """
    if M is None:
        M = loss_catalog("huber", 1.0)
    if M.name == "lp":
        return solve_weighted_lp(A, b, w, M.params[0], tol, max_iter, starts, rng, x0)
    A_, b_, w_, d = _prep(A, b, w)
    if A_.shape[0] == 0:
        return SolveResult(np.zeros(d), 0.0, 0, True, {"local": False})
    run = _irls_m if M.mm_reweightable else _lbfgs_m
    x_ls = _wls(A_, b_, w_)
    if M.convex:
        x, obj, it, conv = run(A_, b_, w_, M, x_ls if x0 is None else np.asarray(x0, float), tol, max_iter)
        return SolveResult(x, obj, it, conv, {"local": False})
    rng = as_generator(0 if rng is None else rng)
    x_l1, _, _, _ = _irls_lp(A_, b_, w_, 1.0, x_ls, 1e-6, 100)
    inits = [np.asarray(v, dtype=np.float64) for v in extra_starts]
    if x0 is not None:
        inits.insert(0, np.asarray(x0, dtype=np.float64))
    inits += [x_l1, x_ls]
    inits += _subset_fits(A_, b_, max(0, starts - len(inits)), rng)
    best = None
    total = 0
    for xi in inits:
        x, obj, it, conv = run(A_, b_, w_, M, xi, tol, max_iter)
        total += it
        if best is None or obj < best[1]:
            best = (x, obj, conv)
    return SolveResult(best[0], best[1], total, best[2], {"local": True, "starts": len(inits)})


# ---------------------------------------------------------------- 1-d oracle


def brute_force_1d(a, b, M: Loss, w=None, grid=None, refine: bool = True) -> SolveResult:
    """Global 1-d minimizer of ``sum w_i M(|a_i x - b_i|)`` by exhaustive search.

    Candidates are the grid (default: 4001 points spanning the breakpoints
    ``b_i / a_i``) plus the breakpoints themselves; with ``refine`` a bounded
    golden-section search polishes the best candidate.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    w = np.ones_like(b) if w is None else np.asarray(w, dtype=np.float64).ravel()
    nz = a != 0
    brk = b[nz] / a[nz] if nz.any() else np.zeros(1)
    if grid is None:
        lo, hi = float(brk.min()), float(brk.max())
        pad = 0.05 * (hi - lo) + 1e-9
        grid = np.linspace(lo - pad, hi + pad, 4001)
        cand = np.concatenate([grid, brk, [0.0]])
    else:
        cand = np.asarray(grid, dtype=np.float64).ravel()

    def f(x):
        return float(np.dot(w, M(a * x - b)))

    vals = np.empty(cand.size)
    chunk = max(1, 2_000_000 // max(a.size, 1))
    for s in range(0, cand.size, chunk):
        X = cand[s : s + chunk]
        vals[s : s + chunk] = M(np.outer(X, a) - b) @ w
    j = int(np.argmin(vals))
    x_best, f_best = float(cand[j]), float(vals[j])
    if refine and cand.size > 1:
        srt = np.sort(np.unique(cand))
        k = int(np.searchsorted(srt, x_best))
        lo = srt[max(k - 1, 0)]
        hi = srt[min(k + 1, srt.size - 1)]
        if hi > lo:
            res = scipy.optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(1.0, abs(x_best))})
            if res.fun < f_best:
                x_best, f_best = float(res.x), float(res.fun)
    return SolveResult(np.array([x_best]), f_best, int(cand.size), True, {"grid_size": int(cand.size)})
