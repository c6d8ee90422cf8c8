"""
Cover Construction - Greedy delta-Cover of the Sampled Attractor

Builds the finite partition the Markov chain lives on:
- build_cover: greedy selection of centers on the closed-ball adjacency graph
- assign_cell / assign_cells: nearest-center (Voronoi) index function
- mesh_size: largest cell diameter over the training points
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from dagster import get_dagster_logger
from scipy.spatial.distance import pdist

from znl_pipeline.errors import ArgumentError
from znl_pipeline.spatial import Method, nearest_distances, radius_adjacency
from znl_pipeline.systems import TimeSeries, as_points


logger = get_dagster_logger()


@dataclass(frozen=True)
class CoverModel:
    """Centers (indices into the training series) and the grain size delta."""

    centers: tuple[int, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ArgumentError(f"cover radius must be positive, got {self.radius}")
        if len(self.centers) == 0:
            raise ArgumentError("cover needs at least one center")
        object.__setattr__(self, "centers", tuple(int(c) for c in self.centers))

    @property
    def m(self) -> int:
        return len(self.centers)

    @property
    def delta(self) -> float:
        return self.radius

    def center_points(self, series) -> np.ndarray:
        return as_points(series)[list(self.centers)]

    def to_dict(self) -> dict:
        return {"delta": float(self.radius), "centers": list(self.centers)}

    @classmethod
    def from_dict(cls, data: dict) -> "CoverModel":
        return cls(centers=tuple(data["centers"]), radius=float(data["delta"]))


def build_cover(series, delta: float, method: Method = "auto") -> CoverModel:
    """
    Greedy cover: repeatedly take the uncovered point whose closed delta-ball holds the most
    uncovered points, then mark that ball covered. Ties go to the lowest index.
    """
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    points = as_points(series)
    adjacency = radius_adjacency(points, delta, method=method)
    indptr, indices = adjacency.indptr, adjacency.indices
    n = points.shape[0]

    counts = np.diff(indptr).astype(np.int64)
    covered = np.zeros(n, dtype=bool)
    centers: list[int] = []
    remaining = n
    while remaining > 0:
        j = int(np.argmax(counts))
        centers.append(j)
        ball = indices[indptr[j] : indptr[j + 1]]
        newly = ball[~covered[ball]]
        covered[newly] = True
        remaining -= newly.size
        # each newly covered point stops counting toward its neighbours' rows
        touched = np.concatenate([indices[indptr[p] : indptr[p + 1]] for p in newly])
        counts -= np.bincount(touched, minlength=n)
        counts[covered] = -1

    logger.info(f"Cover built: {len(centers)} cells at delta={delta} over {n} points")
    return CoverModel(centers=tuple(centers), radius=float(delta))


def assign_cells(
    cover: CoverModel,
    series: TimeSeries,
    points: np.ndarray,
    allowed: Optional[Sequence[int]] = None,
    method: Method = "auto",
) -> np.ndarray:
    """
    Nearest-center cell index for every row of ``points``; ties go to the lower cell index.

    With ``allowed``, only those cells compete and the result is still a cover cell index.
    """
    candidates = np.arange(cover.m) if allowed is None else np.asarray(sorted(allowed), dtype=int)
    if candidates.size == 0:
        raise ArgumentError("no cells to assign to")
    centers = as_points(series)[np.asarray(cover.centers)[candidates]]
    _, nearest = nearest_distances(np.asarray(points, dtype=float), centers, method=method)
    return candidates[nearest]


def assign_cell(
    cover: CoverModel,
    series: TimeSeries,
    x: np.ndarray,
    allowed: Optional[Sequence[int]] = None,
) -> int:
    return int(assign_cells(cover, series, np.atleast_2d(np.asarray(x, dtype=float)), allowed)[0])


def cell_members(
    cover: CoverModel, series: TimeSeries, method: Method = "auto"
) -> list[np.ndarray]:
    labels = assign_cells(cover, series, as_points(series), method=method)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(cover.m + 1))
    return [order[bounds[c] : bounds[c + 1]] for c in range(cover.m)]


def mesh_size(cover: CoverModel, series: TimeSeries, method: Method = "auto") -> float:
    """Largest diameter of the training points sharing a cell."""
    largest = 0.0
    for members in cell_members(cover, series, method=method):
        if members.size > 1:
            largest = max(largest, float(pdist(as_points(series)[members]).max()))
    return largest
