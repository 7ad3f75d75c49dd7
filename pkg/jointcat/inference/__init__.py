"""Posterior sampling and convergence diagnostics."""

from jointcat.inference.diagnostics import (
    ConvergenceReport,
    NonConvergedError,
    check_convergence,
    ess,
    rhat,
)
from jointcat.inference.sampler import (
    PosteriorDraws,
    SamplerConfig,
    SamplerError,
    sample,
)

__all__ = [
    "ConvergenceReport",
    "NonConvergedError",
    "PosteriorDraws",
    "SamplerConfig",
    "SamplerError",
    "check_convergence",
    "ess",
    "rhat",
    "sample",
]
