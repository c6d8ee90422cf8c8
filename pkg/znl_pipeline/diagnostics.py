"""
Diagnostics Layer - Reconstruction Quality of a Fitted Model

Compares a simulated run with the training trajectory:
- directed / L1 Hausdorff distances between the two point clouds
- coordinate autocorrelation curves and their relative difference
- itinerary fidelity theta(N) of the symbol chain, with common random numbers across N
- containment of the simulated cloud in delta-neighbourhoods of the data (and the reverse)
- spread, Lipschitz and stationary-measure summaries gathered in one DiagnosticsReport
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from dagster import get_dagster_logger

from znl_pipeline.cover import CoverModel, assign_cells
from znl_pipeline.errors import (
    ArgumentError,
    ConvergenceError,
    EstimationError,
    StructureError,
)
from znl_pipeline.markov import (
    MarkovRng,
    SimulationRun,
    ZnlModel,
    empirical_spread,
    estimate_lipschitz,
    spread_bound,
    spread_probes,
)
from znl_pipeline.spatial import Method, nearest_distances
from znl_pipeline.systems import TimeSeries, as_points
from znl_pipeline.transitions import stationary_measure, strongly_connected_components


logger = get_dagster_logger()


def _point_set(points, name: str) -> np.ndarray:
    try:
        return as_points(points)
    except ArgumentError as exc:
        raise ArgumentError(f"{name} must be a non-empty point set: {exc}") from exc


def directed_hausdorff(A, B, method: Method = "auto") -> float:
    """sup_{a in A} inf_{b in B} |a - b|."""
    dist, _ = nearest_distances(_point_set(A, "A"), _point_set(B, "B"), method=method)
    return float(dist.max())


def l1_directed_hausdorff(
    A,
    B,
    weights: Optional[np.ndarray] = None,
    method: Method = "auto",
) -> float:
    """Weighted mean over a in A of the distance to B; uniform weights by default."""
    A, B = _point_set(A, "A"), _point_set(B, "B")
    dist, _ = nearest_distances(A, B, method=method)
    if weights is None:
        return float(dist.mean())
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != A.shape[0]:
        raise ArgumentError(f"{w.size} weights for {A.shape[0]} points")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ArgumentError("weights must be nonnegative and sum to 1")
    return float(np.dot(w, dist))


def autocorrelation(series, T: int) -> np.ndarray:
    """
    Delta(t) = 1/(N-T) * sum_{n < N-T} <x_n - mean, x_{n+t} - mean> for t = 1..T.

    The normalizer 1/(N-T) is the same at every lag.
    """
    points = as_points(series)
    N = points.shape[0]
    if T < 1:
        raise ArgumentError(f"lag horizon must be >= 1, got {T}")
    if T >= N:
        raise ArgumentError(f"lag horizon T={T} must be smaller than the series length {N}")
    centered = points - points.mean(axis=0)
    head = centered[: N - T]
    return np.array(
        [np.einsum("ij,ij->", head, centered[t : N - T + t]) / (N - T) for t in range(1, T + 1)]
    )


def itinerary(
    series,
    cover: CoverModel,
    training: Optional[TimeSeries] = None,
    method: Method = "auto",
) -> np.ndarray:
    """Cover cell of every sample; the cover's centers index ``training`` (default: ``series``)."""
    points = as_points(series)
    reference = series if training is None else training
    return assign_cells(cover, reference, points, method=method)


def _state_itinerary(model: ZnlModel, series, cover: CoverModel) -> np.ndarray:
    """Model state of every sample of ``series``; -1 where the cell was dropped."""
    cells = itinerary(series, cover, training=model.series)
    lookup = np.full(cover.m, -1, dtype=np.int64)
    lookup[np.asarray(model.transitions.cells)] = np.arange(model.m)
    return lookup[cells]


def _padded_tables(model: ZnlModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width = max(len(t) for t in model.transitions.edges)
    cdf = np.full((model.m, width), 2.0)
    dest = np.zeros((model.m, width), dtype=np.int64)
    degree = np.zeros(model.m, dtype=np.int64)
    for j in range(model.m):
        k = len(model.targets(j))
        cdf[j, :k] = model.cdf(j)
        dest[j, :k] = model.targets(j)
        degree[j] = k
    return cdf, dest, degree


def theta_curve(
    model: ZnlModel,
    series,
    cover: Optional[CoverModel] = None,
    Ns: Sequence[int] = (1,),
    n_samples: int = 10_000,
    seed: int = 0,
    horizon: Optional[int] = None,
) -> dict[int, float]:
    """
    theta(N) for every N in ``Ns`` from one set of anchors and uniforms.

    Each sample starts the symbol chain at an anchor's true cell and records the first step at
    which it leaves the true itinerary; theta(N) is the fraction still on it after N steps, so
    the curve is non-increasing in N. Anchors in dropped cells score 0.
    """
    if not Ns:
        raise ArgumentError("theta curve needs at least one N")
    if min(Ns) < 1:
        raise ArgumentError(f"N must be >= 1, got {min(Ns)}")
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be >= 1, got {n_samples}")
    H = max(Ns) if horizon is None else int(horizon)
    if H < max(Ns):
        raise ArgumentError(f"horizon {H} is shorter than N={max(Ns)}")
    cover = model.cover if cover is None else cover
    truth = _state_itinerary(model, series, cover)
    if truth.size - 1 < H:
        raise ArgumentError(
            f"series of length {truth.size} is too short for {H} forward steps from an anchor"
        )

    rng = MarkovRng(seed)
    anchors = rng.integers(0, truth.size - H, size=n_samples)
    uniforms = rng.uniforms((n_samples, H))
    cdf, dest, degree = _padded_tables(model)

    current = truth[anchors]
    first_miss = np.full(n_samples, H + 1, dtype=np.int64)
    first_miss[current < 0] = 0
    current = np.where(current < 0, 0, current)
    rows = np.arange(n_samples)
    for t in range(1, H + 1):
        k = np.sum(cdf[current] <= uniforms[:, t - 1][:, None], axis=1)
        k = np.minimum(k, degree[current] - 1)
        current = dest[current, k]
        missed = (current != truth[anchors + t]) & (first_miss > t)
        first_miss[rows[missed]] = t
    return {int(N): float(np.mean(first_miss > N)) for N in sorted(set(Ns))}


def theta_fidelity(
    model: ZnlModel,
    series,
    cover: Optional[CoverModel],
    N: int,
    n_samples: int,
    seed: int,
    horizon: Optional[int] = None,
) -> float:
    """theta(N); calls sharing ``horizon`` and ``seed`` share their random numbers."""
    return theta_curve(model, series, cover, [N], n_samples, seed, horizon=horizon)[int(N)]


@dataclass(frozen=True)
class Containment:
    within_delta: float
    within_2delta: float
    within_3delta: float
    reverse_distance: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "within_delta": self.within_delta,
            "within_2delta": self.within_2delta,
            "within_3delta": self.within_3delta,
            "reverse_distance": self.reverse_distance,
            "n_points": self.n_points,
        }


def containment_check(
    model: ZnlModel,
    run: SimulationRun,
    series: Optional[TimeSeries] = None,
    method: Method = "auto",
) -> Containment:
    """Share of simulated points within delta, 2 delta, 3 delta of the data; reverse distance."""
    if len(run.points) == 0:
        raise ArgumentError("run has no points")
    training = (model.series if series is None else series).points
    dist, _ = nearest_distances(run.points, training, method=method)
    delta = model.delta
    return Containment(
        within_delta=float(np.mean(dist <= delta)),
        within_2delta=float(np.mean(dist <= 2 * delta)),
        within_3delta=float(np.mean(dist <= 3 * delta)),
        reverse_distance=directed_hausdorff(training, run.points, method=method),
        n_points=int(dist.size),
    )


def cell_mismatch_fraction(model: ZnlModel, run: SimulationRun, method: Method = "auto") -> float:
    """Fraction of simulated points whose nearest retained cell is not the drawn symbol."""
    if run.n_steps < 1:
        return 0.0
    cells = assign_cells(
        model.cover, model.series, run.points[1:], allowed=model.transitions.cells, method=method
    )
    lookup = np.full(model.cover.m, -1, dtype=np.int64)
    lookup[np.asarray(model.transitions.cells)] = np.arange(model.m)
    return float(np.mean(lookup[cells] != run.symbols[1:]))


@dataclass
class DiagnosticsReport:
    delta: float
    bandwidth: float
    m: int
    n_edges: int
    hauss_fwd: float
    hauss_bwd: float
    l1_fwd: float
    l1_bwd: float
    autocorr_true: np.ndarray
    autocorr_sim: np.ndarray
    autocorr_rel_err: float
    theta_curve: dict[int, float]
    spread_p99: float
    containment: Containment
    bias: float
    cell_mismatch: float
    lipschitz: Optional[float]
    spread_bound: Optional[float]
    spread_within_bound: Optional[float]
    irreducible: bool
    n_components: int
    pi: Optional[np.ndarray]
    gap: Optional[float]
    stationary_lazy: bool
    run_completed: bool
    far_evaluations: int
    warnings: list[str] = field(default_factory=list)

    @property
    def containment_fracs(self) -> tuple[float, float]:
        return self.containment.within_delta, self.containment.within_2delta

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "bandwidth": self.bandwidth,
            "m": self.m,
            "n_edges": self.n_edges,
            "hauss_fwd": self.hauss_fwd,
            "hauss_bwd": self.hauss_bwd,
            "l1_fwd": self.l1_fwd,
            "l1_bwd": self.l1_bwd,
            "autocorr_rel_err": self.autocorr_rel_err,
            "theta_curve": [{"N": n, "theta": v} for n, v in sorted(self.theta_curve.items())],
            "spread_p99": self.spread_p99,
            "containment": self.containment.to_dict(),
            "bias": self.bias,
            "cell_mismatch": self.cell_mismatch,
            "lipschitz": self.lipschitz,
            "spread_bound": self.spread_bound,
            "spread_within_bound": self.spread_within_bound,
            "irreducible": self.irreducible,
            "n_components": self.n_components,
            "pi": None if self.pi is None else self.pi.tolist(),
            "gap": self.gap,
            "stationary_lazy": self.stationary_lazy,
            "run_completed": self.run_completed,
            "far_evaluations": self.far_evaluations,
            "warnings": list(self.warnings),
        }


def _relative_error(reference: np.ndarray, other: np.ndarray) -> float:
    norm = float(np.linalg.norm(reference))
    diff = float(np.linalg.norm(reference - other))
    if norm == 0.0:
        return diff
    return diff / norm


def diagnose(
    model: ZnlModel,
    run: SimulationRun,
    series: Optional[TimeSeries] = None,
    lags: int = 50,
    theta_horizons: Sequence[int] = (1, 2, 4, 8, 16),
    theta_samples: int = 10_000,
    seed: int = 2,
    probes: int = 100,
    method: Method = "auto",
) -> DiagnosticsReport:
    """Every reconstruction diagnostic for one run, deterministic given (model, run, seed)."""
    series = model.series if series is None else series
    train, sim = series.points, run.points
    warnings: list[str] = list(run.warnings)

    max_lag = min(train.shape[0], sim.shape[0]) - 1
    if lags > max_lag:
        raise ArgumentError(f"lags={lags} needs series and run longer than {lags} points")
    acf_true = autocorrelation(train, lags)
    acf_sim = autocorrelation(sim, lags)

    horizons = [n for n in theta_horizons if n <= series.length - 1]
    if len(horizons) < len(theta_horizons):
        message = f"theta horizons above {series.length - 1} dropped for a short series"
        logger.warning(message)
        warnings.append(message)
    curve = (
        theta_curve(model, series, model.cover, horizons, theta_samples, seed) if horizons else {}
    )

    probe_idx = spread_probes(series, probes, seed)
    spreads = np.array([empirical_spread(model, train[n]) for n in probe_idx])

    lipschitz: Optional[float] = None
    bound: Optional[float] = None
    within: Optional[float] = None
    try:
        lipschitz = estimate_lipschitz(series, model.delta)
        bound = spread_bound(model.delta, lipschitz)
        within = float(np.mean(spreads <= bound))
    except (EstimationError, ArgumentError) as exc:
        logger.warning(f"Lipschitz estimate unavailable: {exc}")
        warnings.append(f"lipschitz: {exc}")

    pi, gap, lazy, irreducible = None, None, False, True
    components = strongly_connected_components(model.transitions)
    try:
        estimate = stationary_measure(model.transitions)
        pi, gap = estimate.pi, estimate.gap
    except StructureError as exc:
        irreducible = False
        logger.warning(f"Stationary measure unavailable: {exc}")
        warnings.append(f"stationary: {exc}")
    except ConvergenceError as exc:
        logger.warning(f"Power iteration did not converge ({exc}); retrying with the lazy chain")
        warnings.append("stationary: lazy iteration used")
        lazy = True
        try:
            estimate = stationary_measure(model.transitions, lazy=True)
            pi, gap = estimate.pi, estimate.gap
        except ConvergenceError as lazy_exc:
            logger.warning(f"Lazy power iteration did not converge either: {lazy_exc}")
            warnings.append(f"stationary: {lazy_exc}")

    report = DiagnosticsReport(
        delta=model.delta,
        bandwidth=model.bandwidth,
        m=model.m,
        n_edges=model.transitions.n_edges,
        hauss_fwd=directed_hausdorff(sim, train, method=method),
        hauss_bwd=directed_hausdorff(train, sim, method=method),
        l1_fwd=l1_directed_hausdorff(sim, train, method=method),
        l1_bwd=l1_directed_hausdorff(train, sim, method=method),
        autocorr_true=acf_true,
        autocorr_sim=acf_sim,
        autocorr_rel_err=_relative_error(acf_true, acf_sim),
        theta_curve=curve,
        spread_p99=float(np.percentile(spreads, 99)),
        containment=containment_check(model, run, series, method=method),
        bias=float(np.linalg.norm(sim.mean(axis=0) - train.mean(axis=0))),
        cell_mismatch=cell_mismatch_fraction(model, run, method=method),
        lipschitz=lipschitz,
        spread_bound=bound,
        spread_within_bound=within,
        irreducible=irreducible,
        n_components=len(components),
        pi=pi,
        gap=gap,
        stationary_lazy=lazy,
        run_completed=run.completed,
        far_evaluations=run.far_evaluations,
        warnings=warnings,
    )
    logger.info(
        f"Diagnostics: hausdorff fwd={report.hauss_fwd:.4g} bwd={report.hauss_bwd:.4g}, "
        f"L1 fwd={report.l1_fwd:.4g} bwd={report.l1_bwd:.4g}, "
        f"within 2delta={report.containment.within_2delta:.4f}"
    )
    return report
