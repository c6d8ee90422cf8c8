"""
Kernel Layer - Gaussian Kernels and Per-Edge Transition Maps

This module fits the maps that move a point from one cell to the next:
- select_bandwidth: quantile rule on pairwise squared distances of an equispaced subsample
- kernel_matrix / markov_normalize: Gaussian kernel and its row-stochastic normalization
- fit_edge_map: ridge regression on the normalized kernel (normal equations, Cholesky)
- evaluate_edge_map: out-of-sample evaluation as a convex combination of the coefficient columns
- fit_edge_maps: independent per-edge fits on a thread pool, collected in edge order
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from dagster import get_dagster_logger
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import pdist, squareform

from znl_pipeline.errors import (
    ArgumentError,
    DegenerateDataError,
    OutOfDomainError,
    RankDeficiencyError,
    ZeroDegreeError,
)
from znl_pipeline.systems import TimeSeries, as_points


logger = get_dagster_logger()

# exp(-x) is exactly 0.0 in double precision beyond this exponent
UNDERFLOW_EXPONENT = -math.log(np.finfo(float).smallest_subnormal)


@dataclass(frozen=True)
class KernelConfig:
    """
    Gaussian kernel settings.

    ``bandwidth`` is a squared-distance scale; None means "select from data".
    ``strict_domain`` makes evaluation fail when every raw kernel weight underflows;
    otherwise weights are normalized relative to the nearest training input.
    """

    bandwidth: Optional[float] = None
    zero_threshold: float = 1e-14
    quantile: float = 0.01
    subsample_fraction: float = 0.1
    ridge: float = 0.001
    strict_domain: bool = False

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ArgumentError(f"bandwidth must be positive, got {self.bandwidth}")
        if not 0.0 < self.zero_threshold < 1.0:
            raise ArgumentError(f"zero_threshold must be in (0, 1), got {self.zero_threshold}")
        if not 0.0 < self.quantile < 1.0:
            raise ArgumentError(f"quantile must be in (0, 1), got {self.quantile}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ArgumentError(
                f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}"
            )
        if self.ridge < 0:
            raise ArgumentError(f"ridge must be >= 0, got {self.ridge}")

    def with_bandwidth(self, bandwidth: float) -> "KernelConfig":
        return replace(self, bandwidth=float(bandwidth))

    def to_dict(self) -> dict:
        return {
            "bandwidth": self.bandwidth,
            "zero_threshold": self.zero_threshold,
            "quantile": self.quantile,
            "subsample_fraction": self.subsample_fraction,
            "ridge": self.ridge,
            "strict_domain": self.strict_domain,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelConfig":
        return cls(**data)


@dataclass(frozen=True)
class EdgeMap:
    """Fitted map for the edge source -> target; ``coefficients`` is d x M, one column per input."""

    source: int
    target: int
    input_indices: np.ndarray
    coefficients: np.ndarray
    bandwidth: float

    def __post_init__(self):
        if self.coefficients.shape[1] != len(self.input_indices):
            raise ArgumentError(
                f"edge {self.source}->{self.target}: {self.coefficients.shape[1]} coefficient "
                f"columns for {len(self.input_indices)} inputs"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise ArgumentError(f"edge {self.source}->{self.target} has non-finite coefficients")

    @property
    def edge(self) -> tuple[int, int]:
        return (self.source, self.target)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "indices": self.input_indices.tolist(),
            "shape": list(self.coefficients.shape),
            "coefficients": self.coefficients.ravel(order="C").tolist(),
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EdgeMap":
        shape = tuple(int(s) for s in data["shape"])
        return cls(
            source=int(data["source"]),
            target=int(data["target"]),
            input_indices=np.asarray(data["indices"], dtype=np.int64),
            coefficients=np.asarray(data["coefficients"], dtype=float).reshape(shape, order="C"),
            bandwidth=float(data["bandwidth"]),
        )


def select_bandwidth(series: TimeSeries, config: KernelConfig = KernelConfig()) -> float:
    """
    theta = quantile_eta(S) / (-ln theta_zero), S the positive pairwise squared distances of an
    equispaced subsample, so an eta-fraction of pairs keep kernel weight >= theta_zero.
    """
    points = as_points(series)
    n = points.shape[0]
    if n < 2:
        raise ArgumentError("bandwidth selection needs at least 2 points")
    k = min(n, max(2, math.ceil(config.subsample_fraction * n)))
    picks = np.unique(np.linspace(0, n - 1, k).round().astype(np.int64))
    sq = pdist(points[picks], metric="sqeuclidean")
    sq = sq[sq > 0]
    if sq.size == 0:
        raise DegenerateDataError("all sampled points are identical; bandwidth would be 0")
    theta = float(np.quantile(sq, config.quantile) / -math.log(config.zero_threshold))
    logger.debug(f"Bandwidth {theta:.6g} from {picks.size} subsampled points")
    return theta


def kernel_matrix(points: np.ndarray, theta: float) -> np.ndarray:
    """K[i, j] = exp(-|x_i - x_j|^2 / theta); each pair computed once."""
    if not theta > 0:
        raise ArgumentError(f"bandwidth must be positive, got {theta}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 1:
        return np.ones((1, 1))
    return np.exp(-squareform(pdist(points, metric="sqeuclidean")) / theta)


def markov_normalize(K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """rho = K 1 / M and P = diag(rho)^-1 K / M, so every row of P sums to 1."""
    K = np.asarray(K, dtype=float)
    M = K.shape[0]
    rho = K.sum(axis=1) / M
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise ZeroDegreeError("kernel has a row with zero degree")
    P = K / (rho[:, None] * M)
    return P, rho


def fit_edge_map(
    inputs: np.ndarray,
    outputs: np.ndarray,
    theta: float,
    gamma: float,
    source: int = 0,
    target: int = 0,
    input_indices: Optional[Sequence[int]] = None,
) -> EdgeMap:
    """
    Ridge fit of the edge map: (P^T P + gamma I) A^T = P^T Y with P the normalized kernel on the
    inputs. With gamma = 0 and nonsingular P the map interpolates the outputs.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    if inputs.shape[0] < 1 or inputs.shape != outputs.shape:
        raise ArgumentError(
            f"edge {source}->{target}: inputs {inputs.shape} and outputs {outputs.shape} must match"
        )
    if gamma < 0:
        raise ArgumentError(f"ridge must be >= 0, got {gamma}")
    M = inputs.shape[0]

    P, _ = markov_normalize(kernel_matrix(inputs, theta))
    normal = P.T @ P + gamma * np.eye(M)
    try:
        factor = cho_factor(normal, lower=False, check_finite=True)
    except LinAlgError as exc:
        raise RankDeficiencyError(
            f"edge {source}->{target}: normal matrix is singular for {M} inputs; use ridge > 0"
        ) from exc
    if gamma == 0:
        pivots = np.abs(np.diag(factor[0]))
        if pivots.min() <= np.finfo(float).eps * M * pivots.max():
            raise RankDeficiencyError(
                f"edge {source}->{target}: normal matrix is numerically singular; use ridge > 0"
            )
    coefficients_t = cho_solve(factor, P.T @ outputs)

    indices = np.arange(M) if input_indices is None else np.asarray(input_indices, dtype=np.int64)
    return EdgeMap(
        source=int(source),
        target=int(target),
        input_indices=indices,
        coefficients=np.ascontiguousarray(coefficients_t.T),
        bandwidth=float(theta),
    )


def edge_weights(
    inputs: np.ndarray,
    theta: float,
    x: np.ndarray,
    strict: bool = True,
    edge: Optional[tuple[int, int]] = None,
) -> tuple[np.ndarray, bool]:
    """
    Normalized Gaussian weights of ``x`` against ``inputs`` and whether every raw weight underflows.

    In strict mode an all-zero raw weight vector raises OutOfDomainError; otherwise the exponents
    are shifted by their minimum before normalizing.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise OutOfDomainError(f"query point is not finite: {x.tolist()}", edge=edge, point=x)
    diff = inputs - x[None, :]
    exponents = np.einsum("ij,ij->i", diff, diff) / theta
    nearest = float(exponents.min())
    far = math.exp(-nearest) == 0.0
    if strict and far:
        raise OutOfDomainError(
            f"point {x.tolist()} is outside the kernel range of edge {edge}: "
            f"nearest input at squared distance {nearest * theta:.3e}",
            edge=edge,
            point=x,
        )
    weights = np.exp(-exponents) if strict else np.exp(-(exponents - nearest))
    return weights / weights.sum(), far


def kernel_weights(
    inputs: np.ndarray,
    theta: float,
    x: np.ndarray,
    strict: bool = True,
    edge: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    return edge_weights(inputs, theta, x, strict=strict, edge=edge)[0]


def apply_edge_map(
    edge_map: EdgeMap,
    inputs: np.ndarray,
    x: np.ndarray,
    strict: bool = True,
) -> tuple[np.ndarray, bool]:
    """Evaluate ``edge_map`` at ``x`` against its training ``inputs``; also reports far queries."""
    if inputs.shape[0] == 1:
        return edge_map.coefficients[:, 0].copy(), False
    v, far = edge_weights(inputs, edge_map.bandwidth, x, strict=strict, edge=edge_map.edge)
    return edge_map.coefficients @ v, far


def evaluate_edge_map(
    edge_map: EdgeMap,
    training_inputs: np.ndarray,
    theta: Optional[float],
    x: np.ndarray,
    strict: bool = True,
) -> np.ndarray:
    """y = A v, v the normalized kernel weights of x against the edge's training inputs."""
    theta = edge_map.bandwidth if theta is None else theta
    inputs = np.atleast_2d(np.asarray(training_inputs, dtype=float))
    if inputs.shape[0] == 1:
        return edge_map.coefficients[:, 0].copy()
    v = kernel_weights(inputs, theta, x, strict=strict, edge=edge_map.edge)
    return edge_map.coefficients @ v


def worker_count(requested: Optional[int] = None) -> int:
    """Worker pool size: ``requested`` (else the CPU count), capped by ZNL_THREADS when set."""
    if requested is not None and requested < 1:
        raise ArgumentError(f"worker count must be >= 1, got {requested}")
    cap: Optional[int] = None
    env = os.environ.get("ZNL_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ArgumentError(f"ZNL_THREADS must be an integer, got '{env}'") from exc
        if cap < 1:
            raise ArgumentError(f"ZNL_THREADS must be >= 1, got {cap}")
    if requested is None:
        return cap if cap is not None else os.cpu_count() or 1
    return requested if cap is None else min(requested, cap)


def fit_edge_maps(
    points: np.ndarray,
    edge_samples: dict[tuple[int, int], np.ndarray],
    theta: float,
    gamma: float,
    workers: Optional[int] = None,
) -> dict[tuple[int, int], EdgeMap]:
    """Fit every edge independently; results are keyed and ordered by edge."""
    edges = sorted(edge_samples)
    n_workers = min(worker_count(workers), max(1, len(edges)))

    def fit(edge: tuple[int, int]) -> EdgeMap:
        idx = edge_samples[edge]
        return fit_edge_map(
            points[idx], points[idx + 1], theta, gamma, source=edge[0], target=edge[1],
            input_indices=idx,
        )

    if n_workers == 1:
        fitted = [fit(edge) for edge in edges]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            fitted = list(executor.map(fit, edges))
    logger.info(f"Fitted {len(fitted)} edge maps with {n_workers} workers (theta={theta:.6g})")
    return dict(zip(edges, fitted))
