"""Path resolution utilities for CLI arguments."""

from pathlib import Path
from typing import Optional, Tuple


class PathResolutionError(Exception):
    """Raised when path resolution fails."""
    pass


def resolve_file_argument(
    arg: str,
    expected_pattern: Optional[str] = None,
    arg_name: str = "file",
    suffix: str = ".csv",
) -> Path:
    """Resolve file path from CLI argument with smart handling.

    A directory is accepted when it contains exactly one file with ``suffix`` whose
    name contains ``expected_pattern`` (e.g. "longitudinal" inside a simulation
    output directory).

    Args:
        arg: Raw argument string from CLI
        expected_pattern: Optional substring to look for when inferring from directory
        arg_name: Name of the argument for error messages
        suffix: File extension considered when inferring from a directory

    Returns:
        Resolved Path object

    Raises:
        PathResolutionError: If path cannot be resolved
    """
    path = Path(arg)

    if path.is_file():
        return path

    if path.is_dir() and expected_pattern:
        matching_files = sorted(
            f for f in path.iterdir()
            if f.is_file()
            and f.suffix.lower() == suffix
            and expected_pattern.lower() in f.name.lower()
        )

        if len(matching_files) == 0:
            raise PathResolutionError(
                f"{arg_name.capitalize()} not found: no {suffix} files containing "
                f"'{expected_pattern}' in directory: {path}"
            )
        elif len(matching_files) > 1:
            files_list = "\n  ".join(f.name for f in matching_files)
            raise PathResolutionError(
                f"{arg_name.capitalize()} ambiguous: multiple files containing "
                f"'{expected_pattern}' found in {path}:\n  {files_list}\n"
                f"Please specify the exact file."
            )

        return matching_files[0]

    if path.is_dir():
        raise PathResolutionError(
            f"{arg_name.capitalize()} is a directory: {path}\n"
            f"Please specify the exact file."
        )

    raise PathResolutionError(f"{arg_name.capitalize()} not found: {path}")


def resolve_input_pair(longitudinal: str, baseline: str) -> Tuple[Path, Path]:
    """Resolve the two cohort inputs of ``jointcat fit``.

    Either argument may be a directory such as the output of ``jointcat simulate``;
    the same directory can be passed twice.

    Raises:
        PathResolutionError: If either input cannot be resolved, or both resolve to
            the same file
    """
    long_path = resolve_file_argument(
        longitudinal, expected_pattern="longitudinal", arg_name="longitudinal file"
    )
    base_path = resolve_file_argument(
        baseline, expected_pattern="baseline", arg_name="baseline file"
    )
    if long_path.resolve() == base_path.resolve():
        raise PathResolutionError(
            f"Longitudinal and baseline inputs are the same file: {long_path}"
        )
    return long_path, base_path
