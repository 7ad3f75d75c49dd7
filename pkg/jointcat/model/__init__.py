"""Joint longitudinal and categorical model: data, submodels, posterior."""

from jointcat.model.data_model import Cohort, CohortSchema, build_cohort, load_cohort
from jointcat.model.posterior import JointPosterior, Mode, Parameterization, PriorConfig

__all__ = [
    "Cohort",
    "CohortSchema",
    "JointPosterior",
    "Mode",
    "Parameterization",
    "PriorConfig",
    "build_cohort",
    "load_cohort",
]
