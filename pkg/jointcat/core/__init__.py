"""Core business logic modules."""

from jointcat.core.config import Config, RunConfig, resolve_run_config
from jointcat.core.context import FitPaths, RunContext

__all__ = ["Config", "FitPaths", "RunConfig", "RunContext", "resolve_run_config"]
