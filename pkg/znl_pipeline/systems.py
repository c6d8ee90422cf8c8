"""
Benchmark Systems - Trajectory Generation

This module produces the observed trajectories the pipeline learns from:
- TimeSeries: validated (N+1) x d array of state samples
- Fixed-step classical RK4 for flows (Lorenz 63, Lorenz 96)
- Direct iteration for discrete maps (Henon, or any user-supplied map)
- Divergence guard: any state with max-norm above 1e6 aborts generation
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from dagster import get_dagster_logger

from znl_pipeline.errors import ArgumentError, BlowUpError, IntegrationError


DIVERGENCE_BOUND = 1.0e6
FLOW_DT = 0.01
FLOW_SAMPLE_STRIDE = 10
FLOW_TRANSIENT_SKIP = 5000
HENON_TRANSIENT_SKIP = 100

VectorField = Callable[[np.ndarray], np.ndarray]
DiscreteMap = Callable[[np.ndarray], np.ndarray]

logger = get_dagster_logger()


@dataclass(frozen=True)
class TimeSeries:
    """Ordered samples x_0, ..., x_N of a trajectory in R^d."""

    points: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[1] < 1:
            raise ArgumentError(f"series must be a 2-D array of samples, got shape {points.shape}")
        if points.shape[0] < 2:
            raise ArgumentError(
                f"series needs at least 2 samples to observe a transition, got {points.shape[0]}"
            )
        if not np.all(np.isfinite(points)):
            bad = int(np.argwhere(~np.isfinite(points))[0][0])
            raise ArgumentError(f"series sample {bad} has non-finite coordinates")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def length(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.length

    def split(self, index: int) -> tuple["TimeSeries", "TimeSeries"]:
        """Split into two disjoint halves at ``index``."""
        return TimeSeries(self.points[:index]), TimeSeries(self.points[index:])


@dataclass(frozen=True)
class FlowSpec:
    """How a continuous flow is integrated and sampled."""

    vector_field: VectorField
    initial_state: Sequence[float]
    dt: float = FLOW_DT
    sample_stride: int = FLOW_SAMPLE_STRIDE
    transient_skip: int = FLOW_TRANSIENT_SKIP

    def __post_init__(self):
        if not self.dt > 0:
            raise ArgumentError(f"dt must be positive, got {self.dt}")
        if self.sample_stride < 1:
            raise ArgumentError(f"sample_stride must be >= 1, got {self.sample_stride}")
        if self.transient_skip < 0:
            raise ArgumentError(f"transient_skip must be >= 0, got {self.transient_skip}")


@dataclass(frozen=True)
class Lorenz63Params:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0


@dataclass(frozen=True)
class HenonParams:
    a: float = 1.4
    b: float = 0.3


@dataclass(frozen=True)
class Lorenz96Params:
    forcing: float = 8.0
    m: int = 10

    def __post_init__(self):
        if self.m < 4:
            raise ArgumentError(f"Lorenz 96 needs m >= 4 oscillators, got {self.m}")


@dataclass(frozen=True)
class SystemParams:
    """Parameters of the three benchmark systems."""

    lorenz63: Lorenz63Params = field(default_factory=Lorenz63Params)
    henon: HenonParams = field(default_factory=HenonParams)
    lorenz96: Lorenz96Params = field(default_factory=Lorenz96Params)


def _check_bounded(x: np.ndarray, step: int) -> None:
    if np.max(np.abs(x)) > DIVERGENCE_BOUND:
        raise BlowUpError(
            f"trajectory diverged at step {step}: |x|_inf > {DIVERGENCE_BOUND:g} (x={x.tolist()})",
            state=x.copy(),
        )


def _evaluate(field_fn: VectorField, x: np.ndarray) -> np.ndarray:
    value = np.asarray(field_fn(x), dtype=float)
    if not np.all(np.isfinite(value)):
        raise IntegrationError(f"vector field is not finite at state {x.tolist()}", state=x.copy())
    return value


def rk4_step(field_fn: VectorField, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = _evaluate(field_fn, x)
    k2 = _evaluate(field_fn, x + 0.5 * dt * k1)
    k3 = _evaluate(field_fn, x + 0.5 * dt * k2)
    k4 = _evaluate(field_fn, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lorenz63_field(params: Lorenz63Params) -> VectorField:
    sigma, rho, beta = params.sigma, params.rho, params.beta

    def field_fn(x: np.ndarray) -> np.ndarray:
        return np.array(
            [
                sigma * (x[1] - x[0]),
                x[0] * (rho - x[2]) - x[1],
                x[0] * x[1] - beta * x[2],
            ]
        )

    return field_fn


def lorenz96_field(params: Lorenz96Params) -> VectorField:
    forcing = params.forcing

    def field_fn(x: np.ndarray) -> np.ndarray:
        # (x[n+1] - x[n-2]) * x[n-1] - x[n] + F, indices cyclic
        return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + forcing

    return field_fn


def integrate_flow(spec: FlowSpec, n_samples: int) -> TimeSeries:
    """Integrate a flow and record ``n_samples + 1`` points, one every ``sample_stride`` steps."""
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be >= 1, got {n_samples}")
    x = np.array(spec.initial_state, dtype=float)
    step = 0
    for _ in range(spec.transient_skip):
        x = rk4_step(spec.vector_field, x, spec.dt)
        step += 1
        _check_bounded(x, step)

    points = np.empty((n_samples + 1, x.size))
    points[0] = x
    for n in range(1, n_samples + 1):
        for _ in range(spec.sample_stride):
            x = rk4_step(spec.vector_field, x, spec.dt)
            step += 1
            _check_bounded(x, step)
        points[n] = x
    return TimeSeries(points)


def iterate_map(
    map_fn: DiscreteMap,
    x0: Sequence[float],
    n: int,
    transient_skip: int = 0,
) -> TimeSeries:
    """Iterate a discrete map; drop ``transient_skip`` iterates, then record ``n + 1`` points."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    if transient_skip < 0:
        raise ArgumentError(f"transient_skip must be >= 0, got {transient_skip}")
    x = np.array(x0, dtype=float)
    for step in range(1, transient_skip + 1):
        x = np.asarray(map_fn(x), dtype=float)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(
                f"map produced a non-finite value at transient iterate {step}", state=x
            )
        _check_bounded(x, step)

    points = np.empty((n + 1, x.size))
    points[0] = x
    for k in range(1, n + 1):
        x = np.asarray(map_fn(x), dtype=float)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"map produced a non-finite value at iterate {k}", state=x)
        _check_bounded(x, transient_skip + k)
        points[k] = x
    return TimeSeries(points)


def henon_map(a: float, b: float) -> DiscreteMap:
    def map_fn(x: np.ndarray) -> np.ndarray:
        return np.array([1.0 + x[1] - a * x[0] * x[0], b * x[0]])

    return map_fn


def generate_henon(
    a: float,
    b: float,
    x0: Sequence[float],
    n: int,
    transient_skip: int = HENON_TRANSIENT_SKIP,
) -> TimeSeries:
    """Henon trajectory (x, y) -> (1 + y - a x^2, b x)."""
    logger.debug(f"Generating Henon series a={a}, b={b}, n={n}")
    return iterate_map(henon_map(a, b), x0, n, transient_skip=transient_skip)


def generate_lorenz63(params: Lorenz63Params, flow_spec: FlowSpec, n_samples: int) -> TimeSeries:
    """Lorenz 63 trajectory; ``flow_spec.vector_field`` is replaced by the Lorenz 63 field."""
    spec = FlowSpec(
        vector_field=lorenz63_field(params),
        initial_state=flow_spec.initial_state,
        dt=flow_spec.dt,
        sample_stride=flow_spec.sample_stride,
        transient_skip=flow_spec.transient_skip,
    )
    logger.debug(f"Generating Lorenz 63 series {params}, n={n_samples}")
    return integrate_flow(spec, n_samples)


def generate_lorenz96(
    forcing: float,
    m: int,
    flow_spec: FlowSpec,
    n_samples: int,
) -> TimeSeries:
    """Lorenz 96 trajectory with ``m`` cyclically coupled oscillators."""
    params = Lorenz96Params(forcing=forcing, m=m)
    if len(flow_spec.initial_state) != m:
        raise ArgumentError(
            f"initial state has {len(flow_spec.initial_state)} coordinates, expected m={m}"
        )
    spec = FlowSpec(
        vector_field=lorenz96_field(params),
        initial_state=flow_spec.initial_state,
        dt=flow_spec.dt,
        sample_stride=flow_spec.sample_stride,
        transient_skip=flow_spec.transient_skip,
    )
    logger.debug(f"Generating Lorenz 96 series F={forcing}, m={m}, n={n_samples}")
    return integrate_flow(spec, n_samples)


def default_initial_state(
    system: str, params: SystemParams, seed: Optional[int] = None
) -> np.ndarray:
    """
    Starting state for a benchmark system.

    A seed adds a reproducible perturbation so distinct generation seeds give distinct
    trajectories on the same attractor.
    """
    if system == "lorenz63":
        base, scale = np.array([1.0, 1.0, 1.0]), 1.0
    elif system == "henon":
        base, scale = np.array([0.0, 0.0]), 0.1
    elif system == "lorenz96":
        base = np.full(params.lorenz96.m, params.lorenz96.forcing)
        base[0] += 0.01
        scale = 0.5
    else:
        raise ArgumentError(f"no default initial state for system '{system}'")
    if seed is None:
        return base
    rng = np.random.Generator(np.random.Philox(seed))
    return base + scale * rng.uniform(-1.0, 1.0, size=base.size)


def as_points(series) -> np.ndarray:
    """Sample array of a TimeSeries, or of a raw (n, d) array of points (n may be 1)."""
    if isinstance(series, TimeSeries):
        return series.points
    if series is None:
        raise ArgumentError("series is required")
    points = np.asarray(series, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ArgumentError(f"expected a non-empty (n, d) point array, got shape {points.shape}")
    return points
