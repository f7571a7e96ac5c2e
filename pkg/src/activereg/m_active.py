"""Active regression for general monotone losses via sensitivity sampling."""

from __future__ import annotations

import math

import numpy as np

from .core import Loss, OracleView, WeightVector, as_generator, as_oracle, check_matrix, loss_catalog
from .sensitivity import _check_monotone, m_sensitivities, sensitivity_sample, weighted_m_sensitivities
from .solvers import SolveResult, solve_weighted_mloss


def check_admissible(M: Loss) -> None:
    """Reject losses the sampling guarantees do not cover.

    Needs monotone growth, a root-subadditive ``M^(1/p_M)`` and either a
    lower growth bound or boundedness (the Tukey family).
    """
    _check_monotone(M)
    if not M.root_subadditive:
        raise ValueError(f"loss {M.name} is not declared root-subadditive")
    if M.q_M is None and not M.bounded:
        raise ValueError(f"loss {M.name} declares neither a lower growth degree nor boundedness")


def constant_factor_rows(d: int, n: int, M: Loss, C_c: float = 4.0) -> int:
    return max(d, int(math.ceil(C_c * d ** max(1.0, M.p_M / 2) * math.log(max(n, 3)))))


def relative_rows(d: int, M: Loss, eps: float, delta: float, C_m: float = 1.0, eps_pow: float | None = None) -> int:
    """``C_m d^max(1,p_M/2) log(1/eps) log(1/delta) / eps^eps_pow``; default power ``2 + p_M``."""
    if eps_pow is None:
        eps_pow = 2.0 + M.p_M
    val = C_m * d ** max(1.0, M.p_M / 2) * max(math.log(1 / eps), 1.0) * math.log(1 / delta) / eps**eps_pow
    return max(d, int(math.ceil(val)))


def two_stage_sample(A, M: Loss, rows: int, tau1: float, rng, sens_kw=None) -> tuple[WeightVector, dict]:
    """Plain sensitivities at floor ``tau1``, sample, then weighted ones at ``tau = d``.

    Each stage aims for ``rows`` expected rows: the oversampling factor is
    ``rows / sum(s)``.
    """
    A = check_matrix(A)
    n, d = A.shape
    sens_kw = sens_kw or {}
    tau1 = float(min(max(tau1, 1.0), n))
    e1 = m_sensitivities(A, M, tau1, rng, **sens_kw)
    w = sensitivity_sample(None, e1, rows / e1.total, rng)
    e2 = weighted_m_sensitivities(A, M, w, float(min(d, max(w.nnz, 1))), rng, **sens_kw)
    w2 = sensitivity_sample(w, e2, rows / max(e2.total, 1e-300), rng)
    return w2, {"stage1_sum": e1.total, "stage1_rows": w.nnz, "stage2_sum": e2.total, "stage2_rows": w2.nnz}


def m_constant_factor_active(
    A,
    b,
    M: Loss,
    rng=None,
    tau1: float | None = None,
    rows: int | None = None,
    C_c: float = 4.0,
    starts: int = 5,
    sens_kw=None,
) -> SolveResult:
    """O(1)-factor fit reading ``b`` only on the final two-stage sample."""
    A = check_matrix(A)
    check_admissible(M)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    n, d = A.shape
    if tau1 is None:
        tau1 = min(d**3, n / 2)
    if rows is None:
        rows = constant_factor_rows(d, n, M, C_c)
    w, info = two_stage_sample(A, M, rows, tau1, rng, sens_kw)
    bv = oracle.query(w.idx)
    res = solve_weighted_mloss(A[w.idx], bv, w.val, M, starts=starts, rng=rng, extra_starts=[np.zeros(d)])
    res.info.update(info)
    res.info.update({"tau1": float(tau1), "rows_target": rows, "queries": oracle.count})
    return res


def m_relative_active(
    A,
    b,
    M: Loss,
    eps: float = 0.25,
    delta: float = 0.1,
    rng=None,
    tau1: float | None = None,
    C_c: float = 4.0,
    C_m: float = 1.0,
    eps_pow: float | None = None,
    rows: int | None = None,
    starts: int = 5,
    sens_kw=None,
) -> SolveResult:
    """Constant-factor fit ``x_c``, then a fresh sample on the residual ``b - A x_c``.

    The residual is read through a shifted view of the same oracle, so
    entries already read for ``x_c`` cost nothing. Returns ``x_c + x_bar``;
    ``eps >= 1`` stops after the constant-factor stage.
    """
    A = check_matrix(A)
    check_admissible(M)
    oracle = as_oracle(b)
    rng = as_generator(rng)
    n, d = A.shape
    if tau1 is None:
        tau1 = min(d**3, n / 2)
    cf = m_constant_factor_active(A, oracle, M, rng, tau1, None, C_c, starts, sens_kw)
    x_c = cf.x
    report = {"eps": eps, "delta": delta, "constant_factor_rows": cf.info["stage2_rows"]}
    if eps >= 1:
        cf.info.update(report)
        cf.info["path"] = "constant-factor"
        return cf
    if rows is None:
        rows = relative_rows(d, M, eps, delta, C_m, eps_pow)
    w, info = two_stage_sample(A, M, rows, tau1, rng, sens_kw)
    resid = OracleView(oracle, shift=lambda idx: A[idx] @ x_c)
    bv = resid.query(w.idx)
    res = solve_weighted_mloss(A[w.idx], bv, w.val, M, starts=starts, rng=rng, x0=np.zeros(d), extra_starts=[-x_c])
    x = x_c + res.x
    info.update(report)
    info.update({"rows_target": rows, "queries": oracle.count, "x_c": x_c, "local": res.info.get("local", False)})
    return SolveResult(x, res.objective, cf.iterations + res.iterations, cf.converged and res.converged, info)


def tukey_relative_active(A, b, tau: float, p: float, eps: float = 0.25, rng=None, delta: float = 0.01, **kw) -> SolveResult:
    """:func:`m_relative_active` with the ``tukey_lp(tau, p)`` loss."""
    return m_relative_active(A, b, loss_catalog("tukey_lp", tau, p), eps, delta, rng, **kw)
