"""Seeded, reproducible experiment protocols built on the solvers and the training loops."""

from .complexity import sample_complexity, sinkhorn_complexity
from .minima import bernoulli_bias, bernoulli_monte_carlo, bernoulli_point, false_minima
from .oracle import oracle_static, protocol_variant
from .results import ExperimentResult, LogLogFit, Summary, loglog_fit, summarize
from .tracking import mode_coverage, track_2d_training

__all__ = [
    "ExperimentResult",
    "LogLogFit",
    "Summary",
    "bernoulli_bias",
    "bernoulli_monte_carlo",
    "bernoulli_point",
    "false_minima",
    "loglog_fit",
    "mode_coverage",
    "oracle_static",
    "protocol_variant",
    "sample_complexity",
    "sinkhorn_complexity",
    "summarize",
    "track_2d_training",
]
