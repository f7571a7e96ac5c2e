"""ℓp regression on Kronecker-product designs without forming the product.

Lewis weights of ``A_1 ⊗ ... ⊗ A_q`` factor into products of per-factor
weights, so a row of the product can be drawn by drawing one row index per
factor independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TargetOracle, as_generator, check_matrix
from .lewis import LewisWeights, lewis_weights
from .lp_active import budget
from .solvers import SolveResult, solve_weighted_lp


@dataclass
class AliasTable:
    """Walker/Vose alias table: O(1) draws from a fixed discrete distribution."""

    n: int
    prob: np.ndarray
    alias: np.ndarray

    def distribution(self) -> np.ndarray:
        """The distribution the table draws from, reconstructed exactly."""
        out = self.prob / self.n
        np.add.at(out, self.alias, (1.0 - self.prob) / self.n)
        return out


def alias_build(probs) -> AliasTable:
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ValueError("probabilities must be finite and nonnegative")
    total = probs.sum()
    if not total > 0:
        raise ValueError("probabilities are all zero")
    n = probs.size
    scaled = probs * (n / total)
    prob = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return AliasTable(n, prob, alias)


def alias_draw(table: AliasTable, rng, size=None):
    rng = as_generator(rng)
    u = rng.random(size) * table.n
    i = np.minimum(np.floor(u).astype(np.int64), table.n - 1)
    frac = u - i
    return np.where(frac < table.prob[i], i, table.alias[i])


@dataclass
class KronProblem:
    """``min_x ||(A_1 ⊗ ... ⊗ A_q) x - b||_p`` with ``b`` behind an oracle.

    Flat indices of ``b`` are row-major over the factors in order.
    """

    factors: list
    b: TargetOracle
    p: float

    def __post_init__(self):
        if not self.factors:
            raise ValueError("need at least one factor")
        self.factors = [check_matrix(F, f"A_{k + 1}") for k, F in enumerate(self.factors)]
        if not isinstance(self.b, TargetOracle):
            self.b = TargetOracle(self.b) if not callable(self.b) else TargetOracle(self.b, self.n)
        if len(self.b) != self.n:
            raise ValueError(f"b has length {len(self.b)}, expected {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(F.shape[0] for F in self.factors)

    @property
    def n(self) -> int:
        return math.prod(self.shape)

    @property
    def d(self) -> int:
        return math.prod(F.shape[1] for F in self.factors)

    def flat(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi)), self.shape)

    def multi(self, flat) -> tuple[np.ndarray, ...]:
        return np.unravel_index(np.asarray(flat), self.shape)

    def rows(self, multi) -> np.ndarray:
        """Rows of the Kronecker product at the given multi-indices."""
        R = self.factors[0][multi[0]]
        for F, i in zip(self.factors[1:], multi[1:]):
            R = (R[:, :, None] * F[i][:, None, :]).reshape(R.shape[0], -1)
        return R

    def materialize(self) -> np.ndarray:
        """The full product matrix; only for small test problems."""
        K = self.factors[0]
        for F in self.factors[1:]:
            K = np.kron(K, F)
        return K


def kron_lewis_weights(factors, p: float, tol: float = 1e-12, max_iter: int = 2000) -> list[LewisWeights]:
    """Per-factor ℓp Lewis weights; their outer product is the product's weights."""
    out = []
    for k, F in enumerate(factors):
        lw = lewis_weights(F, p, tol=tol, max_iter=max_iter)
        if not lw.converged:
            raise RuntimeError(f"Lewis weights of factor {k + 1} did not converge (residual {lw.residual:.2e})")
        out.append(lw)
    return out


def kron_product_weights(lws: list[LewisWeights]) -> np.ndarray:
    w = lws[0].w
    for lw in lws[1:]:
        w = np.kron(w, lw.w)
    return w


def kron_regress(problem: KronProblem, eps: float = 0.3, delta: float = 0.1, rng=None, C: float = 8.0, m: int | None = None, lewis_tol: float = 1e-10) -> SolveResult:
    """Draw ``m`` multi-indices by product Lewis weights and solve the sampled problem.

    Sampling is with replacement; a draw with product probability ``pi``
    carries weight ``1/(m pi)`` on ``|row x - b|^p``. Repeated draws are
    merged, so ``b`` is read once per distinct index.
    """
    rng = as_generator(rng)
    p = problem.p
    lws = kron_lewis_weights(problem.factors, p, tol=lewis_tol)
    probs = [lw.w / lw.w.sum() for lw in lws]
    tables = [alias_build(u) for u in probs]
    if m is None:
        m = budget(p, problem.d, problem.n, eps, delta, C).m
    draws = [alias_draw(t, rng, m) for t in tables]
    pi = np.ones(m)
    for u, i in zip(probs, draws):
        pi *= u[i]
    flat = problem.flat(draws)
    uniq, inv = np.unique(flat, return_inverse=True)
    wts = np.bincount(inv, weights=1.0 / (m * pi), minlength=uniq.size)
    multi = problem.multi(uniq)
    rows = problem.rows(multi)
    bv = problem.b.query(uniq)
    res = solve_weighted_lp(rows, bv, wts, p, rng=rng)
    res.info.update({"draws": m, "distinct": int(uniq.size), "queries": problem.b.count})
    return res
