"""Convergence diagnostics over multi-chain draws.

R-hat is the rank-normalized split statistic and ESS the bulk effective sample
size, both computed by arviz on (chains, draws) arrays.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import arviz as az
import numpy as np
import pandas as pd

from jointcat.inference.sampler import PosteriorDraws

logger = logging.getLogger(__name__)

RHAT_THRESHOLD = 1.05
ESS_THRESHOLD = 100.0


class ConstantParameterWarning(UserWarning):
    """Emitted when every draw of a parameter has the same value."""


class NonConvergedError(RuntimeError):
    """Raised when draws fail the convergence thresholds.

    Attributes:
        report: The failing :class:`ConvergenceReport`
    """

    def __init__(self, report: "ConvergenceReport"):
        self.report = report
        names = ", ".join(report.failed[:10])
        more = f" (+{len(report.failed) - 10} more)" if len(report.failed) > 10 else ""
        reason = f"parameters failing: {names}{more}" if report.failed else ""
        if report.sampler_failed:
            reason = "divergence rate above limit" + (f"; {reason}" if reason else "")
        super().__init__(f"Draws did not converge: {reason}")


def _as_chains(values: Any, min_chains: int = 1) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[np.newaxis]
    if values.ndim != 2:
        raise ValueError(f"expected (chains, draws) values (got shape {values.shape})")
    if values.shape[1] < 4:
        raise ValueError(f"need at least 4 draws per chain (got {values.shape[1]})")
    if values.shape[0] < min_chains:
        raise ValueError(
            f"need at least {min_chains} chains (got {values.shape[0]})"
        )
    return values


def is_constant(values: Any) -> bool:
    values = np.asarray(values, dtype=float)
    return bool(values.size) and bool(np.all(values == values.flat[0]))


def rhat(values: Any) -> float:
    """Rank-normalized split R-hat of one parameter.

    Args:
        values: (chains, draws) draws, at least 2 chains of 4 draws

    Returns:
        R-hat, or NaN with a :class:`ConstantParameterWarning` for a constant
        parameter
    """
    values = _as_chains(values, min_chains=2)
    if is_constant(values):
        warnings.warn("constant parameter; R-hat undefined", ConstantParameterWarning)
        return float("nan")
    return float(az.rhat(values, method="rank"))


def ess(values: Any, method: str = "bulk") -> float:
    """Effective sample size of one parameter (``bulk`` or ``tail``).

    Returns:
        ESS, or NaN with a :class:`ConstantParameterWarning` for a constant
        parameter
    """
    values = _as_chains(values)
    if is_constant(values):
        warnings.warn("constant parameter; ESS undefined", ConstantParameterWarning)
        return float("nan")
    return float(az.ess(values, method=method))


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Per-parameter convergence table and the overall verdict.

    Attributes:
        table: One row per parameter with rhat, ess_bulk, ess_tail, constant,
            rhat_ok, ess_ok and passed columns
        rhat_threshold: R-hat must be strictly below this
        ess_threshold: Bulk ESS must be strictly above this
        sampler_stats: Per-chain sampler statistics
        sampler_failed: Whether the divergence rate exceeded its limit
    """

    table: pd.DataFrame
    rhat_threshold: float = RHAT_THRESHOLD
    ess_threshold: float = ESS_THRESHOLD
    sampler_stats: List[Dict[str, Any]] = field(default_factory=list)
    divergence_rate: float = 0.0
    sampler_failed: bool = False

    @property
    def failed(self) -> List[str]:
        if self.table.empty:
            return []
        return list(self.table.index[~self.table["passed"]])

    @property
    def passed(self) -> bool:
        return not self.failed and not self.sampler_failed

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise NonConvergedError(self)

    def to_dict(self) -> Dict[str, Any]:
        parameters = {}
        for name, row in self.table.iterrows():
            parameters[name] = {
                "rhat": _finite_or_none(row["rhat"]),
                "ess_bulk": _finite_or_none(row["ess_bulk"]),
                "ess_tail": _finite_or_none(row["ess_tail"]),
                "constant": bool(row["constant"]),
                "passed": bool(row["passed"]),
            }
        return {
            "passed": self.passed,
            "rhat_threshold": self.rhat_threshold,
            "ess_threshold": self.ess_threshold,
            "failed": self.failed,
            "divergence_rate": self.divergence_rate,
            "sampler_failed": self.sampler_failed,
            "chains": self.sampler_stats,
            "parameters": parameters,
        }


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def check_convergence(
    draws: PosteriorDraws,
    rhat_threshold: float = RHAT_THRESHOLD,
    ess_threshold: float = ESS_THRESHOLD,
    names: Optional[Sequence[str]] = None,
) -> ConvergenceReport:
    """Check every parameter against the R-hat and bulk ESS thresholds.

    Constant parameters fail. An empty parameter list passes vacuously.

    Raises:
        ValueError: If the draws hold fewer than two chains
    """
    if draws.n_chains < 2:
        raise ValueError(
            f"convergence needs at least 2 chains (got {draws.n_chains})"
        )
    names = list(draws.names if names is None else names)
    if not names:
        logger.warning("No parameters to check; convergence passes vacuously")
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantParameterWarning)
        for name in names:
            values = draws.chain_values(name)
            constant = is_constant(values)
            r = rhat(values)
            bulk = ess(values)
            tail = ess(values, method="tail")
            rhat_ok = bool(np.isfinite(r) and r < rhat_threshold)
            ess_ok = bool(np.isfinite(bulk) and bulk > ess_threshold)
            rows.append(
                {
                    "parameter": name,
                    "rhat": r,
                    "ess_bulk": bulk,
                    "ess_tail": tail,
                    "constant": constant,
                    "rhat_ok": rhat_ok,
                    "ess_ok": ess_ok,
                    "passed": rhat_ok and ess_ok,
                }
            )
    columns = [
        "parameter", "rhat", "ess_bulk", "ess_tail", "constant",
        "rhat_ok", "ess_ok", "passed",
    ]
    table = pd.DataFrame(rows, columns=columns).set_index("parameter")
    constant = table.index[table["constant"]].tolist() if rows else []
    if constant:
        logger.warning(f"Constant parameters: {', '.join(constant)}")

    report = ConvergenceReport(
        table=table,
        rhat_threshold=rhat_threshold,
        ess_threshold=ess_threshold,
        sampler_stats=draws.stats_summary(),
        divergence_rate=draws.divergence_rate,
        sampler_failed=draws.failed,
    )
    if report.passed:
        logger.info(f"All {len(names)} parameters converged")
    else:
        logger.warning(f"{len(report.failed)} parameters failed convergence checks")
    return report
