"""Utility modules for the jointcat CLI."""

from jointcat.utils.path_resolver import (
    PathResolutionError,
    resolve_file_argument,
    resolve_input_pair,
)

__all__ = ["PathResolutionError", "resolve_file_argument", "resolve_input_pair"]
