"""
Markov Layer - Zero-Noise-Limit Model Assembly and Simulation

Composes cover, transitions and edge maps into one model and runs the step-skew process:
- build_model: cover -> transitions -> bandwidth -> per-edge ridge fits
- MarkovRng: counter-based (Philox) generator, inverse-CDF categorical draws
- step / simulate: draw the next cell from beta_s, move the point with that edge's map
- empirical_spread / estimate_lipschitz: the spread diagnostic and its data-driven bound
- zero_noise_sweep: spread statistics across a decreasing sequence of grain sizes
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from dagster import get_dagster_logger
from scipy.spatial.distance import pdist

from znl_pipeline.cover import CoverModel, assign_cell, build_cover, mesh_size
from znl_pipeline.errors import (
    ArgumentError,
    DegenerateDataError,
    EstimationError,
    OutOfDomainError,
)
from znl_pipeline.kernel import (
    EdgeMap,
    KernelConfig,
    apply_edge_map,
    fit_edge_maps,
    select_bandwidth,
)
from znl_pipeline.spatial import Method, close_pairs, nearest_distances
from znl_pipeline.systems import TimeSeries
from znl_pipeline.transitions import TransitionModel, build_transitions


logger = get_dagster_logger()

Edge = tuple[int, int]


@dataclass
class ZnlModel:
    """
    Fitted zero-noise-limit model.

    ``kernel_config.bandwidth`` always holds the bandwidth the edge maps were fitted with.
    """

    cover: CoverModel
    transitions: TransitionModel
    edge_maps: dict[Edge, EdgeMap]
    kernel_config: KernelConfig
    series: TimeSeries
    _inputs: dict[Edge, np.ndarray] = field(init=False, repr=False)
    _cdfs: list[np.ndarray] = field(init=False, repr=False)
    _targets: list[np.ndarray] = field(init=False, repr=False)
    _state_of: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        edges = set(self.transitions.edge_list())
        if set(self.edge_maps) != edges:
            missing = sorted(edges - set(self.edge_maps))
            extra = sorted(set(self.edge_maps) - edges)
            raise ArgumentError(
                f"edge maps do not match transitions: missing {missing}, extra {extra}"
            )
        if self.kernel_config.bandwidth is None:
            raise ArgumentError("model kernel config must record the fitted bandwidth")
        points = self.series.points
        self._inputs = {e: points[self.edge_maps[e].input_indices] for e in self.edge_maps}
        self._cdfs = [np.cumsum(p) for p in self.transitions.probs]
        self._targets = [np.asarray(t, dtype=np.int64) for t in self.transitions.edges]
        self._state_of = self.transitions.state_of_cell()

    @property
    def delta(self) -> float:
        return self.cover.delta

    @property
    def bandwidth(self) -> float:
        return float(self.kernel_config.bandwidth)

    @property
    def m(self) -> int:
        return self.transitions.m

    def edge_inputs(self, edge: Edge) -> np.ndarray:
        return self._inputs[edge]

    def cdf(self, state: int) -> np.ndarray:
        return self._cdfs[state]

    def targets(self, state: int) -> np.ndarray:
        return self._targets[state]

    def nearest_state(self, x: np.ndarray) -> int:
        """State whose cover center is nearest to ``x`` among retained cells."""
        cell = assign_cell(self.cover, self.series, x, allowed=self.transitions.cells)
        return self._state_of[cell]

    def to_dict(self) -> dict:
        return {
            "cover": self.cover.to_dict(),
            "kernel": self.kernel_config.to_dict(),
            "transitions": self.transitions.to_dict(),
            "edge_maps": [self.edge_maps[e].to_dict() for e in sorted(self.edge_maps)],
            "series": self.series.points.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ZnlModel":
        maps = [EdgeMap.from_dict(e) for e in data["edge_maps"]]
        return cls(
            cover=CoverModel.from_dict(data["cover"]),
            transitions=TransitionModel.from_dict(data["transitions"]),
            edge_maps={m.edge: m for m in maps},
            kernel_config=KernelConfig.from_dict(data["kernel"]),
            series=TimeSeries(np.asarray(data["series"], dtype=float)),
        )


@dataclass(frozen=True)
class MarkovState:
    s: int
    x: np.ndarray


class MarkovRng:
    """Seeded Philox stream; every draw the simulator makes goes through here."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ArgumentError(f"seed must be non-negative, got {seed}")
        self._seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self._seed))

    @property
    def seed(self) -> int:
        return self._seed

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniforms(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def categorical(self, cdf: np.ndarray) -> int:
        """Inverse-CDF draw: first index whose cumulative probability exceeds u."""
        k = int(np.searchsorted(cdf, self.uniform(), side="right"))
        return min(k, len(cdf) - 1)


@dataclass
class SimulationRun:
    """A sample path: symbols are model states, points the fiber coordinate."""

    seed: int
    symbols: np.ndarray
    points: np.ndarray
    completed: bool = True
    failure: Optional[str] = None
    failed_step: Optional[int] = None
    far_evaluations: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.symbols) - 1

    @property
    def states(self) -> list[MarkovState]:
        return [MarkovState(int(s), x) for s, x in zip(self.symbols, self.points)]

    @property
    def symbol_sequence(self) -> np.ndarray:
        return self.symbols


def build_model(
    series: TimeSeries,
    delta: float,
    kernel_config: KernelConfig = KernelConfig(),
    workers: Optional[int] = None,
    restrict_to_core: bool = False,
    method: Method = "auto",
) -> ZnlModel:
    """Cover, transitions and one fitted edge map per observed edge; deterministic given inputs."""
    if series.length < 2:
        raise ArgumentError("series needs at least 2 samples")
    cover = build_cover(series, delta, method=method)
    transitions = build_transitions(series, cover, restrict_to_core=restrict_to_core, method=method)

    theta = kernel_config.bandwidth
    if theta is None:
        try:
            theta = select_bandwidth(series, kernel_config)
        except DegenerateDataError:
            logger.warning("No positive pairwise distance in the bandwidth sample; using theta=1")
            theta = 1.0
    config = kernel_config.with_bandwidth(theta)

    edge_maps = fit_edge_maps(
        series.points, transitions.edge_samples, theta, config.ridge, workers=workers
    )
    logger.info(
        f"Model built: delta={delta}, {transitions.m} states, {len(edge_maps)} edges, "
        f"theta={theta:.6g}, gamma={config.ridge}"
    )
    return ZnlModel(
        cover=cover,
        transitions=transitions,
        edge_maps=edge_maps,
        kernel_config=config,
        series=series,
    )


def _advance(model: ZnlModel, state: MarkovState, rng: MarkovRng) -> tuple[MarkovState, bool]:
    j = state.s
    if not 0 <= j < model.m:
        raise ArgumentError(f"state {j} is not a model state (m={model.m})")
    i = int(model.targets(j)[rng.categorical(model.cdf(j))])
    edge = (j, i)
    y, far = apply_edge_map(
        model.edge_maps[edge],
        model.edge_inputs(edge),
        state.x,
        strict=model.kernel_config.strict_domain,
    )
    return MarkovState(i, y), far


def step(model: ZnlModel, state: MarkovState, rng: MarkovRng) -> MarkovState:
    """Draw s' from beta_s, then x' = phi_{s->s'}(x)."""
    return _advance(model, state, rng)[0]


def simulate(model: ZnlModel, x0: np.ndarray, n_steps: int, seed: int) -> SimulationRun:
    """
    Run the process for ``n_steps`` from ``x0``; s_0 is the nearest retained cell.

    An out-of-domain evaluation truncates the run and marks it incomplete.
    """
    if n_steps < 1:
        raise ArgumentError(f"n_steps must be >= 1, got {n_steps}")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != model.series.dim or not np.all(np.isfinite(x0)):
        raise ArgumentError(f"x0 must be a finite point in R^{model.series.dim}, got {x0.tolist()}")

    warnings: list[str] = []
    start_dist, _ = nearest_distances(x0[None, :], model.series.points)
    if start_dist[0] > 2 * model.delta:
        message = (
            f"start point is {start_dist[0]:.4g} from the training data (more than 2*delta="
            f"{2 * model.delta:.4g}); starting from the nearest cell"
        )
        logger.warning(message)
        warnings.append(message)

    rng = MarkovRng(seed)
    symbols = np.empty(n_steps + 1, dtype=np.int64)
    points = np.empty((n_steps + 1, x0.size))
    state = MarkovState(model.nearest_state(x0), x0)
    symbols[0], points[0] = state.s, state.x

    far_count = 0
    for n in range(1, n_steps + 1):
        try:
            state, far = _advance(model, state, rng)
        except OutOfDomainError as exc:
            exc.step = n
            logger.error(f"Simulation stopped at step {n}: {exc}")
            return SimulationRun(
                seed=seed,
                symbols=symbols[:n].copy(),
                points=points[:n].copy(),
                completed=False,
                failure=f"step {n}: {exc}",
                failed_step=n,
                far_evaluations=far_count,
                warnings=warnings,
            )
        far_count += far
        symbols[n], points[n] = state.s, state.x

    if far_count:
        message = f"{far_count} of {n_steps} steps evaluated beyond the raw kernel range"
        logger.warning(message)
        warnings.append(message)
    return SimulationRun(
        seed=seed,
        symbols=symbols,
        points=points,
        far_evaluations=far_count,
        warnings=warnings,
    )


def empirical_spread(model: ZnlModel, x: np.ndarray) -> float:
    """
    Diameter of {phi_{j->i}(x)} over the destinations i of x's cell j.

    Images are taken with relative weights, so far queries count even in strict mode.
    """
    x = np.asarray(x, dtype=float).ravel()
    j = model.nearest_state(x)
    images = []
    for i in model.targets(j):
        edge = (j, int(i))
        y, _ = apply_edge_map(model.edge_maps[edge], model.edge_inputs(edge), x, strict=False)
        images.append(y)
    if len(images) < 2:
        return 0.0
    return float(pdist(np.asarray(images)).max())


def estimate_lipschitz(series: TimeSeries, delta: float) -> float:
    """
    Largest local secant slope |x_{n+1} - x_{k+1}| / |x_n - x_k| over pairs closer than 2 delta.

    A lower bound for the Lipschitz constant on the sampled set.
    """
    if series.length < 3:
        raise ArgumentError("Lipschitz estimate needs at least 3 samples")
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    points = series.points
    pairs = close_pairs(points[:-1], 2 * delta)
    if pairs.shape[0] == 0:
        raise EstimationError(
            f"no sample pairs within 2*delta={2 * delta:g}; use a larger delta"
        )
    a, b = pairs[:, 0], pairs[:, 1]
    base = np.linalg.norm(points[a] - points[b], axis=1)
    keep = base > 0
    if not keep.any():
        logger.warning("All close sample pairs coincide; Lipschitz estimate is 0")
        return 0.0
    image = np.linalg.norm(points[a[keep] + 1] - points[b[keep] + 1], axis=1)
    return float(np.max(image / base[keep]))


def spread_bound(delta: float, lipschitz: float) -> float:
    return 4.0 * delta * (1.0 + lipschitz) + 2.0 * delta


@dataclass(frozen=True)
class SweepRow:
    delta: float
    m: int
    mesh: float
    lipschitz: float
    spread_p99: float
    bound: float
    within_bound: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "m": self.m,
            "mesh": self.mesh,
            "lipschitz": self.lipschitz,
            "spread_p99": self.spread_p99,
            "bound": self.bound,
            "within_bound": self.within_bound,
        }


def spread_probes(series: TimeSeries, probes: int, seed: int) -> np.ndarray:
    """Training indices used as spread probes; the same seed gives the same probes."""
    if probes < 1:
        raise ArgumentError(f"probes must be >= 1, got {probes}")
    rng = MarkovRng(seed)
    return np.sort(rng.integers(0, series.length, size=probes))


def zero_noise_sweep(
    series: TimeSeries,
    deltas: Sequence[float],
    kernel_config: KernelConfig = KernelConfig(),
    probes: int = 100,
    seed: int = 0,
    workers: Optional[int] = None,
    restrict_to_core: bool = False,
) -> list[SweepRow]:
    """Spread statistics at each grain size, probed at the same training points."""
    if not deltas:
        raise ArgumentError("sweep needs at least one delta")
    indices = spread_probes(series, probes, seed)
    rows = []
    for delta in sorted(deltas, reverse=True):
        model = build_model(
            series, delta, kernel_config, workers=workers, restrict_to_core=restrict_to_core
        )
        try:
            lipschitz = estimate_lipschitz(series, delta)
        except EstimationError as exc:
            logger.warning(f"delta={delta}: {exc}")
            lipschitz = float("nan")
        spreads = np.array([empirical_spread(model, series.points[n]) for n in indices])
        bound = spread_bound(delta, lipschitz)
        rows.append(
            SweepRow(
                delta=float(delta),
                m=model.m,
                mesh=mesh_size(model.cover, series),
                lipschitz=lipschitz,
                spread_p99=float(np.percentile(spreads, 99)),
                bound=bound,
                within_bound=float(np.mean(spreads <= bound)) if np.isfinite(bound) else bound,
            )
        )
        logger.info(f"Sweep delta={delta}: m={model.m}, spread p99={rows[-1].spread_p99:.4g}")
    return rows
