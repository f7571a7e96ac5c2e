"""Fit an ℓ1.5 regression with 2% wild outliers while reading about a tenth of b.

Run: python demos/active_lp.py
"""

import numpy as np

from activereg import TargetOracle, budget, high_prob_relative_lp, rng_stream, solve_weighted_lp

n, d, p = 20_000, 10, 1.5
g = rng_stream(0, 0)
A = g.standard_normal((n, d))
b = A @ g.standard_normal(d) + 0.1 * g.standard_normal(n)
hit = g.choice(n, n // 50, replace=False)
b[hit] += 1e4 * g.standard_normal(hit.size)

# The default budget constant is sized for worst-case guarantees and would
# read all of b here; a smaller one keeps the demo honest.
bud = budget(p, d, n, eps=0.25, delta=0.1, C=1.0)
oracle = TargetOracle(b)
res = high_prob_relative_lp(A, oracle, p, eps=0.25, delta=0.1, rng=rng_stream(0, 1), C=1.0)

full = solve_weighted_lp(A, b, p=p)
cost = np.sum(np.abs(A @ res.x - b) ** p)
print(f"budget m = {bud.m}, entries of b read = {oracle.count} of {n}")
print(f"cost ratio vs full solve = {cost / full.objective:.5f}")
print(f"trials {res.info['trials']}, redraws {res.info['redraws']}, boost qualified {res.info['boost_qualified']}")
