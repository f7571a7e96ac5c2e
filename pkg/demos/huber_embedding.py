"""Shrink a 40000-row matrix to a Huber-loss embedding and check its distortion.

Run: python demos/huber_embedding.py
"""

from activereg import huber_subspace_embedding, loss_catalog, rng_stream
from activereg.harness.instances import gaussian
from activereg.harness.probes import m_distortion

H = loss_catalog("huber", 1.0)
for d in (4, 8, 16):
    A, _, _ = gaussian(40_000, d, spike=20, rng=rng_stream(d, 0))
    emb = huber_subspace_embedding(A, 0.25, 0.1, rng_stream(d, 1), C_h=4, kappa_h=1, return_info=True)
    dist = m_distortion(A, emb.weights, H, rng_stream(d, 2), n_dirs=2000)
    print(f"d={d:2d}: {emb.weights.nnz:5d} rows (target {emb.target}), sizes {emb.sizes}, distortion {dist:.3f}")
