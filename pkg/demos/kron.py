"""Regression against a 64x4 ⊗ 64x4 Kronecker design whose target is computed on demand.

Only the sampled entries of b are ever evaluated.

Run: python demos/kron.py
"""

import numpy as np

from activereg import KronProblem, TargetOracle, kron_regress, rng_stream

g = rng_stream(0, 0)
F = [g.standard_normal((64, 4)), g.standard_normal((64, 4))]
x_true = g.standard_normal(16)
probe = KronProblem(F, np.zeros(64 * 64), 1.5)


def target(idx):
    return probe.rows(probe.multi(idx)) @ x_true + 0.1 * np.sin(idx)


prob = KronProblem(F, TargetOracle(target, 64 * 64), 1.5)
res = kron_regress(prob, eps=0.3, rng=rng_stream(0, 1), C=0.25)
print(f"draws {res.info['draws']}, distinct entries of b evaluated {prob.b.count} of {prob.n}")
print(f"max coefficient error {np.max(np.abs(res.x - x_true)):.4f}")
