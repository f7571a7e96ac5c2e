"""Active regression: fit ``min_x loss(Ax - b)`` while reading few entries of ``b``."""

from .core import (
    Loss,
    OracleView,
    RngStream,
    TargetOracle,
    WeightVector,
    loss_catalog,
    mcost,
    mnorm,
    parse_loss,
    read_matrix,
    rng_stream,
    write_matrix,
    write_report,
)
from .huber import huber_active, huber_embed_step, huber_inequality_batch, huber_inequality_check, huber_subspace_embedding
from .kron import AliasTable, KronProblem, alias_build, alias_draw, kron_lewis_weights, kron_regress
from .lewis import leverage_scores, lewis_weights, lp_subspace_embedding
from .lp_active import budget, boost_candidates, constant_factor_lp, high_prob_relative_lp, no_assumptions_lp, recursive_relative_lp
from .m_active import m_constant_factor_active, m_relative_active, tukey_relative_active
from .orlicz import orlicz_norm, orlicz_subspace_embedding
from .sensitivity import m_sensitivities, sensitivity_sample, weighted_m_sensitivities
from .solvers import SolveResult, solve_weighted_lp, solve_weighted_mloss

__version__ = "0.1.0"
