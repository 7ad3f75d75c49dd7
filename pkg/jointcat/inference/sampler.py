"""Multi-chain No-U-Turn sampling with warm-up adaptation.

Each transition grows a trajectory by repeated doubling in a random direction,
selecting the next state multinomially in proportion to exp(-H). Warm-up tunes the
step size by dual averaging toward ``target_accept`` and estimates a diagonal
inverse metric from the draws of a series of doubling windows.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Protocol, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

INIT_BUFFER = 75
TERM_BUFFER = 50
BASE_WINDOW = 25


class SamplerError(RuntimeError):
    """Raised when a chain cannot start or the configuration is unusable."""


class Target(Protocol):
    """What :func:`sample` needs from a log density.

    Targets may additionally provide ``names``, ``constrained_draw(u)``,
    ``latent_draw(u)`` and ``initial_point(rng, radius)``.
    """

    @property
    def n_parameters(self) -> int: ...

    def evaluate_with_gradient(self, u: np.ndarray) -> Tuple[float, np.ndarray]: ...


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 3
    warmup: int = 1000
    draws: int = 4000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 2024
    jobs: int = 0
    divergence_threshold: float = 1000.0
    init_radius: float = 1.0
    init_attempts: int = 100
    max_divergence_rate: float = 0.5

    def __post_init__(self):
        if self.chains < 1 or self.draws < 1:
            raise ValueError("chains and draws must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError(
                f"target_accept must lie in (0, 1) (got {self.target_accept})"
            )
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be positive")
        if self.init_radius <= 0 or self.init_attempts < 1:
            raise ValueError("init_radius and init_attempts must be positive")

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]]) -> "SamplerConfig":
        """Build from a config section, ignoring unknown keys."""
        if not data:
            return cls()
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known and v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @property
    def workers(self) -> int:
        if self.jobs <= 0:
            return self.chains
        return min(self.jobs, self.chains)


@dataclass
class _Point:
    q: np.ndarray
    p: np.ndarray
    grad: np.ndarray
    logp: float
    p_sharp: np.ndarray


@dataclass
class _Tree:
    left: _Point
    right: _Point
    proposal: _Point
    log_weight: float
    rho: np.ndarray
    n_leapfrog: int = 0
    sum_accept: float = 0.0
    divergent: bool = False
    turning: bool = False


def _kinetic(p: np.ndarray, inv_mass: np.ndarray) -> float:
    return 0.5 * float(np.dot(p, inv_mass * p))


def _hamiltonian(point: _Point, inv_mass: np.ndarray) -> float:
    if not np.isfinite(point.logp):
        return np.inf
    return -point.logp + _kinetic(point.p, inv_mass)


def leapfrog(
    target: Target, point: _Point, step: float, inv_mass: np.ndarray
) -> _Point:
    """One velocity-Verlet step; ``step`` carries the integration direction."""
    p = point.p + 0.5 * step * point.grad
    q = point.q + step * inv_mass * p
    logp, grad = target.evaluate_with_gradient(q)
    if not np.isfinite(logp):
        return _Point(q, p, np.zeros_like(q), -np.inf, inv_mass * p)
    p = p + 0.5 * step * grad
    return _Point(q, p, grad, float(logp), inv_mass * p)


def _is_turning(
    rho: np.ndarray, p_sharp_left: np.ndarray, p_sharp_right: np.ndarray
) -> bool:
    return np.dot(p_sharp_left, rho) <= 0 or np.dot(p_sharp_right, rho) <= 0


def _merge(lo: _Tree, hi: _Tree, log_weight: float, proposal: _Point) -> _Tree:
    """Join two adjacent subtrees; ``lo`` lies on the backward side of ``hi``."""
    rho = lo.rho + hi.rho
    turning = _is_turning(rho, lo.left.p_sharp, hi.right.p_sharp)
    # Sub-trajectory checks across the join.
    if not turning:
        turning = _is_turning(lo.rho + hi.left.p, lo.left.p_sharp, hi.left.p_sharp)
    if not turning:
        turning = _is_turning(lo.right.p + hi.rho, lo.right.p_sharp, hi.right.p_sharp)
    return _Tree(
        left=lo.left,
        right=hi.right,
        proposal=proposal,
        log_weight=log_weight,
        rho=rho,
        n_leapfrog=lo.n_leapfrog + hi.n_leapfrog,
        sum_accept=lo.sum_accept + hi.sum_accept,
        turning=bool(turning),
    )


def build_tree(
    target: Target,
    edge: _Point,
    direction: int,
    depth: int,
    step: float,
    inv_mass: np.ndarray,
    H0: float,
    rng: np.random.Generator,
    divergence_threshold: float = 1000.0,
) -> _Tree:
    """Build a subtree of 2**depth leapfrog steps starting beyond ``edge``.

    Log weights are relative to the initial Hamiltonian ``H0``. The returned tree
    is flagged divergent or turning when it must not be merged.
    """
    if depth == 0:
        point = leapfrog(target, edge, direction * step, inv_mass)
        H = _hamiltonian(point, inv_mass)
        if math.isnan(H):
            H = np.inf
        divergent = H - H0 > divergence_threshold
        log_weight = H0 - H
        accept = 0.0 if not np.isfinite(log_weight) else min(1.0, math.exp(log_weight))
        return _Tree(
            left=point,
            right=point,
            proposal=point,
            log_weight=log_weight,
            rho=point.p.copy(),
            n_leapfrog=1,
            sum_accept=accept,
            divergent=bool(divergent),
        )

    args = (step, inv_mass, H0, rng, divergence_threshold)
    first = build_tree(target, edge, direction, depth - 1, *args)
    if first.divergent or first.turning:
        return first
    outer = first.right if direction > 0 else first.left
    second = build_tree(target, outer, direction, depth - 1, *args)
    if second.divergent or second.turning:
        first.n_leapfrog += second.n_leapfrog
        first.sum_accept += second.sum_accept
        first.divergent = second.divergent
        first.turning = second.turning
        return first

    log_weight = float(np.logaddexp(first.log_weight, second.log_weight))
    proposal = first.proposal
    if np.isfinite(second.log_weight):
        if math.log1p(-rng.uniform()) < second.log_weight - log_weight:
            proposal = second.proposal
    lo, hi = (first, second) if direction > 0 else (second, first)
    return _merge(lo, hi, log_weight, proposal)


@dataclass(frozen=True)
class Transition:
    point: _Point
    accept_stat: float
    tree_depth: int
    n_leapfrog: int
    divergent: bool


def transition(
    target: Target,
    current: _Point,
    step: float,
    inv_mass: np.ndarray,
    rng: np.random.Generator,
    max_tree_depth: int = 10,
    divergence_threshold: float = 1000.0,
) -> Transition:
    """One NUTS transition from ``current`` with freshly drawn momentum."""
    p = rng.standard_normal(current.q.shape) / np.sqrt(inv_mass)
    start = _Point(current.q, p, current.grad, current.logp, inv_mass * p)
    H0 = _hamiltonian(start, inv_mass)
    tree = _Tree(start, start, start, 0.0, p.copy())
    proposal = start
    depth = 0
    divergent = False
    while depth < max_tree_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        edge = tree.right if direction > 0 else tree.left
        sub = build_tree(
            target, edge, direction, depth, step, inv_mass, H0, rng,
            divergence_threshold,
        )
        tree.n_leapfrog += sub.n_leapfrog
        tree.sum_accept += sub.sum_accept
        depth += 1
        if sub.divergent:
            divergent = True
            break
        if sub.turning:
            break
        # Biased progressive sampling favours the newer subtree.
        if np.isfinite(sub.log_weight):
            if math.log1p(-rng.uniform()) < sub.log_weight - tree.log_weight:
                proposal = sub.proposal
        log_weight = float(np.logaddexp(tree.log_weight, sub.log_weight))
        lo, hi = (tree, sub) if direction > 0 else (sub, tree)
        merged = _merge(lo, hi, log_weight, proposal)
        merged.n_leapfrog = tree.n_leapfrog
        merged.sum_accept = tree.sum_accept
        tree = merged
        if tree.turning:
            break
    n_leapfrog = max(tree.n_leapfrog, 1)
    return Transition(
        point=proposal,
        accept_stat=tree.sum_accept / n_leapfrog,
        tree_depth=depth,
        n_leapfrog=tree.n_leapfrog,
        divergent=divergent,
    )


class DualAveraging:
    """Step-size adaptation toward a target mean acceptance statistic."""

    def __init__(
        self,
        step: float,
        target_accept: float = 0.8,
        gamma: float = 0.05,
        t0: float = 10.0,
        kappa: float = 0.75,
    ):
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step)

    def restart(self, step: float) -> None:
        self.mu = math.log(10.0 * step)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat: float) -> float:
        """Fold in one acceptance statistic and return the next step size."""
        self.counter += 1
        accept = min(1.0, accept_stat) if np.isfinite(accept_stat) else 0.0
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target_accept - accept)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        weight = self.counter ** -self.kappa
        self.x_bar = weight * x + (1.0 - weight) * self.x_bar
        return math.exp(x)

    @property
    def final_step(self) -> float:
        return math.exp(self.x_bar)


class WelfordVariance:
    """Streaming per-coordinate variance, shrunk toward a small constant."""

    def __init__(self, dim: int):
        self.dim = dim
        self.reset()

    def reset(self) -> None:
        self.n = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        if self.n < 2:
            return np.ones(self.dim)
        var = self.m2 / (self.n - 1)
        n = self.n
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def adaptation_windows(warmup: int) -> List[Tuple[int, int]]:
    """Metric estimation windows as [start, end) warm-up iteration ranges.

    A fast initial buffer and a terminal buffer bracket slow windows that double
    in length; the last slow window absorbs whatever remains. Short warm-ups use a
    15% / 75% / 10% split; below 20 iterations the metric is not adapted.
    """
    if warmup < 20:
        return []
    init_buffer, term_buffer, base_window = INIT_BUFFER, TERM_BUFFER, BASE_WINDOW
    if init_buffer + base_window + term_buffer > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    slow_end = warmup - term_buffer
    windows = []
    start, size = init_buffer, base_window
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        windows.append((start, end))
        start, size = end, 2 * size
    return windows


def find_reasonable_step(
    target: Target,
    point: _Point,
    inv_mass: np.ndarray,
    rng: np.random.Generator,
    step: float = 1.0,
    max_iterations: int = 100,
) -> float:
    """Double or halve ``step`` until one leapfrog step crosses acceptance 0.8."""
    threshold = math.log(0.8)

    def log_accept(eps: float) -> float:
        p = rng.standard_normal(point.q.shape) / np.sqrt(inv_mass)
        start = _Point(point.q, p, point.grad, point.logp, inv_mass * p)
        moved = leapfrog(target, start, eps, inv_mass)
        delta = _hamiltonian(start, inv_mass) - _hamiltonian(moved, inv_mass)
        return delta if np.isfinite(delta) else -np.inf

    direction = 1 if log_accept(step) > threshold else -1
    for _ in range(max_iterations):
        step = step * 2.0**direction
        crossed = log_accept(step) <= threshold
        if (direction == 1 and crossed) or (direction == -1 and not crossed):
            break
    return float(np.clip(step, 1e-10, 1e3))


def _initialize(
    target: Target, config: SamplerConfig, rng: np.random.Generator, chain: int
) -> _Point:
    dim = target.n_parameters
    for attempt in range(config.init_attempts):
        if hasattr(target, "initial_point"):
            q = np.asarray(target.initial_point(rng, config.init_radius), dtype=float)
        else:
            q = rng.uniform(-config.init_radius, config.init_radius, size=dim)
        logp, grad = target.evaluate_with_gradient(q)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            if attempt:
                logger.debug(f"Chain {chain}: finite start after {attempt + 1} tries")
            zeros = np.zeros(dim)
            return _Point(q, zeros, np.asarray(grad), float(logp), zeros)
    raise SamplerError(
        f"Chain {chain}: log density not finite at any of "
        f"{config.init_attempts} initial points"
    )


def _draw_values(target: Target, q: np.ndarray) -> np.ndarray:
    if hasattr(target, "constrained_draw"):
        return np.asarray(target.constrained_draw(q), dtype=float)
    return q.copy()


def _run_chain(
    target: Target, config: SamplerConfig, chain: int, seed: np.random.SeedSequence
) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    point = _initialize(target, config, rng, chain)
    dim = target.n_parameters
    inv_mass = np.ones(dim)
    step = find_reasonable_step(target, point, inv_mass, rng)
    adapter = DualAveraging(step, config.target_accept)
    windows = adaptation_windows(config.warmup)
    estimator = WelfordVariance(dim)
    warmup_divergences = 0
    kwargs = dict(
        max_tree_depth=config.max_tree_depth,
        divergence_threshold=config.divergence_threshold,
    )

    for iteration in range(config.warmup):
        result = transition(target, point, step, inv_mass, rng, **kwargs)
        point = result.point
        warmup_divergences += int(result.divergent)
        step = adapter.update(result.accept_stat)
        for start, end in windows:
            if start <= iteration < end:
                estimator.add(point.q)
                if iteration == end - 1:
                    inv_mass = estimator.variance()
                    estimator.reset()
                    step = find_reasonable_step(target, point, inv_mass, rng, step)
                    adapter.restart(step)
                break
    if config.warmup:
        step = adapter.final_step

    has_latent = hasattr(target, "latent_draw")
    values, latent = [], []
    stats = {
        "divergent": np.zeros(config.draws, dtype=bool),
        "accept_stat": np.zeros(config.draws),
        "tree_depth": np.zeros(config.draws, dtype=int),
        "n_leapfrog": np.zeros(config.draws, dtype=int),
    }
    for i in range(config.draws):
        result = transition(target, point, step, inv_mass, rng, **kwargs)
        point = result.point
        values.append(_draw_values(target, point.q))
        if has_latent:
            latent.append(target.latent_draw(point.q))
        stats["divergent"][i] = result.divergent
        stats["accept_stat"][i] = result.accept_stat
        stats["tree_depth"][i] = result.tree_depth
        stats["n_leapfrog"][i] = result.n_leapfrog

    n_divergent = int(stats["divergent"].sum())
    logger.info(
        f"Chain {chain}: {config.draws} draws, step size {step:.3g}, "
        f"{n_divergent} divergent, mean accept {stats['accept_stat'].mean():.3f}"
    )
    has_latent = bool(latent) and latent[0] is not None
    return {
        "values": np.stack(values),
        "latent": np.stack(latent) if has_latent else None,
        "step_size": step,
        "inv_mass": inv_mass,
        "warmup_divergences": warmup_divergences,
        **stats,
    }


def _run_chain_star(args) -> Dict[str, Any]:
    return _run_chain(*args)


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """Post-warm-up draws of every chain.

    Attributes:
        names: Parameter names, one per column of ``values``
        values: (chains, draws, parameters) constrained values
        latent: (chains, draws, K, n, 3) latent characteristics, if the target has any
        divergent, accept_stat, tree_depth, n_leapfrog: (chains, draws) statistics
        step_size: (chains,) adapted step sizes
    """

    names: Tuple[str, ...]
    values: np.ndarray
    divergent: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    step_size: np.ndarray
    config: SamplerConfig = field(default_factory=SamplerConfig)
    latent: Optional[np.ndarray] = None
    warmup_divergences: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != len(self.names):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.names)} names"
            )

    @property
    def n_chains(self) -> int:
        return self.values.shape[0]

    @property
    def n_draws(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"Unknown parameter '{name}'") from None

    def chain_values(self, name: str) -> np.ndarray:
        """(chains, draws) values of one parameter."""
        return self.values[:, :, self.index(name)]

    def pooled(self, name: str) -> np.ndarray:
        return self.chain_values(name).reshape(-1)

    def pooled_latent(self) -> Optional[np.ndarray]:
        """(chains * draws, K, n, 3) latent draws, or None."""
        if self.latent is None:
            return None
        return self.latent.reshape((-1,) + self.latent.shape[2:])

    def to_frame(self) -> pd.DataFrame:
        """One row per draw: chain, iteration, then the named parameters."""
        chains, draws, _ = self.values.shape
        flat = self.values.reshape(chains * draws, -1)
        frame = pd.DataFrame(flat, columns=list(self.names))
        frame.insert(0, "iteration", np.tile(np.arange(1, draws + 1), chains))
        frame.insert(0, "chain", np.repeat(np.arange(1, chains + 1), draws))
        return frame

    @classmethod
    def from_frame(
        cls, frame: pd.DataFrame, config: Optional[SamplerConfig] = None
    ) -> "PosteriorDraws":
        """Rebuild draws from :meth:`to_frame` output.

        Sampler statistics are not stored in the frame and come back as zeros.
        """
        names = tuple(c for c in frame.columns if c not in ("chain", "iteration"))
        frame = frame.sort_values(["chain", "iteration"])
        chains = frame["chain"].nunique()
        flat = frame[list(names)].to_numpy(dtype=float)
        values = flat.reshape(chains, -1, len(names))
        shape = values.shape[:2]
        return cls(
            names=names,
            values=values,
            divergent=np.zeros(shape, dtype=bool),
            accept_stat=np.zeros(shape),
            tree_depth=np.zeros(shape, dtype=int),
            n_leapfrog=np.zeros(shape, dtype=int),
            step_size=np.zeros(chains),
            config=config or SamplerConfig(chains=chains, draws=shape[1]),
        )

    @property
    def n_divergent(self) -> int:
        return int(self.divergent.sum())

    @property
    def divergence_rate(self) -> float:
        return self.n_divergent / self.divergent.size if self.divergent.size else 0.0

    @property
    def failed(self) -> bool:
        return self.divergence_rate > self.config.max_divergence_rate

    def stats_summary(self) -> List[Dict[str, Any]]:
        """Per-chain sampler statistics for the diagnostics report."""
        rows = []
        for c in range(self.n_chains):
            depths, counts = np.unique(self.tree_depth[c], return_counts=True)
            warmup = self.warmup_divergences[c] if self.warmup_divergences else 0
            rows.append(
                {
                    "chain": c + 1,
                    "divergences": int(self.divergent[c].sum()),
                    "warmup_divergences": int(warmup),
                    "mean_accept_stat": float(self.accept_stat[c].mean()),
                    "step_size": float(self.step_size[c]),
                    "mean_leapfrog_steps": float(self.n_leapfrog[c].mean()),
                    "tree_depth_counts": {
                        str(int(d)): int(n) for d, n in zip(depths, counts)
                    },
                    "max_tree_depth_hits": int(
                        (self.tree_depth[c] >= self.config.max_tree_depth).sum()
                    ),
                }
            )
        return rows


def sample(target: Target, config: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    """Run ``config.chains`` NUTS chains against ``target``.

    Chain c draws from ``SeedSequence(config.seed).spawn(chains)[c]``, so results
    do not depend on how many worker processes run them.

    Raises:
        SamplerError: If a chain finds no finite initial point
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    jobs = [(target, config, c + 1, seeds[c]) for c in range(config.chains)]
    workers = config.workers
    logger.info(
        f"Sampling {config.chains} chains x ({config.warmup} warmup + "
        f"{config.draws} draws), {target.n_parameters} parameters, "
        f"{workers} worker(s)"
    )
    if workers == 1:
        results = [_run_chain_star(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain_star, jobs))

    names = getattr(target, "names", None)
    values = np.stack([r["values"] for r in results])
    if names is None or len(names) != values.shape[2]:
        names = [f"u{j + 1}" for j in range(values.shape[2])]
    latent = None
    if all(r["latent"] is not None for r in results):
        latent = np.stack([r["latent"] for r in results])
    draws = PosteriorDraws(
        names=tuple(names),
        values=values,
        latent=latent,
        divergent=np.stack([r["divergent"] for r in results]),
        accept_stat=np.stack([r["accept_stat"] for r in results]),
        tree_depth=np.stack([r["tree_depth"] for r in results]),
        n_leapfrog=np.stack([r["n_leapfrog"] for r in results]),
        step_size=np.array([r["step_size"] for r in results]),
        config=config,
        warmup_divergences=tuple(r["warmup_divergences"] for r in results),
    )
    if draws.failed:
        logger.error(
            f"Divergence rate {draws.divergence_rate:.1%} exceeds "
            f"{config.max_divergence_rate:.0%}; run marked as failed"
        )
    elif draws.n_divergent:
        logger.warning(f"{draws.n_divergent} divergent transitions after warmup")
    return draws
