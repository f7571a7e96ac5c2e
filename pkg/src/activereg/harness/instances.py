"""Synthetic problem instances, including lower-bound constructions."""

from __future__ import annotations

import math

import numpy as np

from ..core import as_generator

KINDS = ("bernoulli", "coding", "delta", "spiked-tukey", "gaussian-outlier", "gaussian", "duplicated")


def bernoulli(eps: float = 0.1, sign: int | None = None, rng=None):
    """All-ones column, ``b`` i.i.d. Bernoulli(1/2 + sign eps), ``n = 100 ceil(eps^-2)``."""
    rng = as_generator(rng)
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    n = 100 * math.ceil(eps**-2)
    if sign is None:
        sign = 1 if rng.random() < 0.5 else -1
    b = (rng.random(n) < 0.5 + sign * eps).astype(np.float64)
    return np.ones((n, 1)), b, {"n": n, "sign": int(sign), "bias": 0.5 + sign * eps}


def coding(d: int = 31, count: int = 100, C: float = 6.0, rng=None, max_tries: int = 1_000_000):
    """Random sign vectors with pairwise ``|<s, t>| <= C sqrt(d)``; ``b = d e_I``.

    Rows are drawn one at a time and rejected while they violate the bound.
    """
    rng = as_generator(rng)
    bound = C * math.sqrt(d)
    rows = np.empty((count, d))
    k = tries = 0
    while k < count:
        if tries >= max_tries:
            raise RuntimeError(f"coding: {max_tries} draws could not place {count} vectors in dimension {d}; ask for fewer vectors or a larger C")
        s = rng.choice([-1.0, 1.0], size=d)
        tries += 1
        if k == 0 or np.max(np.abs(rows[:k] @ s)) <= bound:
            rows[k] = s
            k += 1
    G = rows @ rows.T
    np.fill_diagonal(G, 0.0)
    I = int(rng.integers(count))
    b = np.zeros(count)
    b[I] = d
    return rows, b, {"max_inner": float(np.abs(G).max()), "bound": bound, "index": I, "tries": tries}


def delta(n: int = 1000, rng=None):
    """All-ones column with ``b = e_I`` for a uniformly random ``I``."""
    rng = as_generator(rng)
    I = int(rng.integers(n))
    b = np.zeros(n)
    b[I] = 1.0
    return np.ones((n, 1)), b, {"index": I}


def spiked_column(n: int, scale: float = 1.0) -> np.ndarray:
    """``2^i`` entries equal to ``scale / 2^i`` for ``i = 1, 2, ...``, truncated to length ``n``."""
    x = np.zeros(n)
    pos, i = 0, 1
    while pos < n and i <= max(1, int(math.log2(max(n, 2)))):
        k = min(2**i, n - pos)
        x[pos : pos + k] = scale / 2**i
        pos += k
        i += 1
    return x


def spiked_tukey(n: int = 4096, d: int = 1, scale: float = 1.0, rng=None):
    """``d`` disjoint spiked columns on ``n/d`` rows each (block diagonal), rows shuffled."""
    rng = as_generator(rng)
    block = n // d
    A = np.zeros((block * d, d))
    for j in range(d):
        A[j * block : (j + 1) * block, j] = spiked_column(block, scale)
    A = A[rng.permutation(A.shape[0])]
    return A, np.zeros(A.shape[0]), {"block": block}


def gaussian(n: int = 2000, d: int = 10, spike: int = 0, spike_scale: float = 50.0, rng=None):
    """Gaussian ``A``; the first ``spike`` rows are scaled up to create heavy rows."""
    rng = as_generator(rng)
    A = rng.standard_normal((n, d))
    if spike:
        A[:spike] *= spike_scale
    x = rng.standard_normal(d)
    return A, A @ x + 0.1 * rng.standard_normal(n), {"x_star": x}


def duplicated(n: int = 2000, d: int = 10, copies: int = 50, rng=None):
    """``n / copies`` Gaussian rows, each repeated ``copies`` times."""
    rng = as_generator(rng)
    base = rng.standard_normal((max(1, n // copies), d))
    A = np.repeat(base, copies, axis=0)[:n]
    return A, rng.standard_normal(A.shape[0]), {}


def gaussian_outlier(n: int = 20000, d: int = 10, frac: float = 0.02, scale: float = 1e4, noise: float = 0.1, rng=None):
    """``b = A x* + noise`` with a random ``frac`` of entries hit by ``scale``-sized errors."""
    rng = as_generator(rng)
    A = rng.standard_normal((n, d))
    x = rng.standard_normal(d)
    b = A @ x + noise * rng.standard_normal(n)
    k = int(round(frac * n))
    idx = rng.choice(n, size=k, replace=False)
    b[idx] += scale * rng.standard_normal(k)
    return A, b, {"x_star": x, "outliers": idx}


def gen_instance(kind: str, params: dict | None = None, rng=None):
    """``(A, b, meta)`` for a named instance family; deterministic given ``rng``."""
    params = dict(params or {})
    rng = as_generator(rng)
    table = {
        "bernoulli": bernoulli,
        "coding": coding,
        "delta": delta,
        "spiked-tukey": spiked_tukey,
        "gaussian-outlier": gaussian_outlier,
        "gaussian": gaussian,
        "duplicated": duplicated,
    }
    if kind not in table:
        raise ValueError(f"unknown instance kind {kind!r}; known: {', '.join(KINDS)}")
    return table[kind](rng=rng, **params)
