"""
Transition Layer - Cell-to-Cell Combinatorics and the Column-Stochastic Matrix

This module turns an itinerary into a finite Markov chain:
- Counts consecutive-sample cell transitions (the index sets X_{j->i})
- Normalizes counts per source cell into probability vectors beta_j
- Prunes cells that have no outgoing transition and records the compaction map
- Optionally restricts the chain to its recurrent core (largest strongly connected set)
- Checks irreducibility and computes the stationary measure by power iteration
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from dagster import get_dagster_logger
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from znl_pipeline.cover import CoverModel, assign_cells
from znl_pipeline.errors import ArgumentError, ConvergenceError, StructureError
from znl_pipeline.spatial import Method
from znl_pipeline.systems import TimeSeries


logger = get_dagster_logger()

Edge = tuple[int, int]


@dataclass(frozen=True)
class TransitionModel:
    """
    Finite chain on the retained cells.

    States are 0..m-1; ``cells[s]`` is the cover cell a state stands for. ``edges[j]`` lists the
    destination states of j in ascending order and ``probs[j]`` the matching probabilities.
    """

    cells: tuple[int, ...]
    edges: tuple[tuple[int, ...], ...]
    probs: tuple[np.ndarray, ...]
    edge_samples: dict[Edge, np.ndarray] = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return sum(len(e) for e in self.edges)

    def edge_list(self) -> list[Edge]:
        return [(j, i) for j, targets in enumerate(self.edges) for i in targets]

    def state_of_cell(self) -> dict[int, int]:
        return {cell: state for state, cell in enumerate(self.cells)}

    @property
    def matrix(self) -> sparse.csc_matrix:
        """Column-stochastic P with P[i, j] = probability of j -> i."""
        rows, cols, vals = [], [], []
        for j, targets in enumerate(self.edges):
            rows.extend(targets)
            cols.extend([j] * len(targets))
            vals.extend(self.probs[j].tolist())
        return sparse.csc_matrix((vals, (rows, cols)), shape=(self.m, self.m))

    def to_dict(self) -> dict:
        triples = [
            [j, i, float(p)]
            for j, targets in enumerate(self.edges)
            for i, p in zip(targets, self.probs[j])
        ]
        return {
            "cells": list(self.cells),
            "edges": [list(t) for t in self.edges],
            "probs": [p.tolist() for p in self.probs],
            "samples": [
                {"source": j, "target": i, "indices": self.edge_samples[(j, i)].tolist()}
                for j, i in self.edge_list()
            ],
            "matrix": triples,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransitionModel":
        samples = {
            (int(s["source"]), int(s["target"])): np.asarray(s["indices"], dtype=np.int64)
            for s in data["samples"]
        }
        return cls(
            cells=tuple(int(c) for c in data["cells"]),
            edges=tuple(tuple(int(i) for i in t) for t in data["edges"]),
            probs=tuple(np.asarray(p, dtype=float) for p in data["probs"]),
            edge_samples=samples,
        )


@dataclass(frozen=True)
class StationaryEstimate:
    pi: np.ndarray
    gap: Optional[float]
    irreducible: bool
    residual: float
    iterations: int


def _keep_transitions(labels: np.ndarray, keep_cell: np.ndarray) -> np.ndarray:
    """Sample indices n whose transition labels[n] -> labels[n+1] stays inside kept cells."""
    src, dst = labels[:-1], labels[1:]
    return np.nonzero(keep_cell[src] & keep_cell[dst])[0]


def _prune_dead_ends(labels: np.ndarray, n_cells: int) -> np.ndarray:
    """Drop cells without outgoing transitions until every kept cell has one."""
    keep = np.zeros(n_cells, dtype=bool)
    keep[np.unique(labels)] = True
    while True:
        n = _keep_transitions(labels, keep)
        has_out = np.zeros(n_cells, dtype=bool)
        has_out[labels[n]] = True
        dead = keep & ~has_out
        if not dead.any():
            return keep
        logger.debug(f"Dropping {int(dead.sum())} cells without outgoing transitions")
        keep &= ~dead


def _restrict_to_core(labels: np.ndarray, keep: np.ndarray) -> np.ndarray:
    n_cells = keep.size
    n = _keep_transitions(labels, keep)
    graph = sparse.csr_matrix(
        (np.ones(n.size), (labels[n], labels[n + 1])), shape=(n_cells, n_cells)
    )
    _, comp = connected_components(graph, directed=True, connection="strong")
    internal = comp[labels[n]] == comp[labels[n + 1]]
    weight = np.bincount(comp[labels[n]][internal], minlength=comp.max() + 1)
    if weight.size == 0 or weight.max() == 0:
        raise StructureError("trajectory has no recurrent core: no cell is ever revisited")
    core = int(np.argmax(weight))
    return keep & (comp == core)


def build_transitions(
    series: TimeSeries,
    cover: CoverModel,
    restrict_to_core: bool = False,
    method: Method = "auto",
    labels: Optional[np.ndarray] = None,
) -> TransitionModel:
    """
    Count transitions between nearest-center cells along the trajectory.

    beta_j[i] = |X_{j->i}| / sum_l |X_{j->l}|. Cells left without outgoing transitions (the
    final point's cell when nothing else lands there) are pruned, together with the
    transitions into them.
    """
    if series.length < 2:
        raise ArgumentError("series needs at least 2 samples")
    if labels is None:
        labels = assign_cells(cover, series, series.points, method=method)
    labels = np.asarray(labels, dtype=np.int64)

    keep = _prune_dead_ends(labels, cover.m)
    if restrict_to_core:
        keep = _restrict_to_core(labels, keep)
    cells = np.nonzero(keep)[0]
    if cells.size == 0:
        raise StructureError("no cell keeps an outgoing transition; the trajectory never recurs")
    state = np.full(cover.m, -1, dtype=np.int64)
    state[cells] = np.arange(cells.size)

    n = _keep_transitions(labels, keep)
    src, dst = state[labels[n]], state[labels[n + 1]]
    order = np.lexsort((n, dst, src))
    src, dst, n = src[order], dst[order], n[order]

    edges: list[list[int]] = [[] for _ in range(cells.size)]
    counts: list[list[int]] = [[] for _ in range(cells.size)]
    samples: dict[Edge, np.ndarray] = {}
    if n.size:
        breaks = np.nonzero((np.diff(src) != 0) | (np.diff(dst) != 0))[0] + 1
        for block in np.split(np.arange(n.size), breaks):
            j, i = int(src[block[0]]), int(dst[block[0]])
            edges[j].append(i)
            counts[j].append(block.size)
            samples[(j, i)] = n[block].astype(np.int64)

    probs = []
    for c in counts:
        arr = np.asarray(c, dtype=float)
        probs.append(arr / arr.sum())

    dropped = cover.m - cells.size
    logger.info(
        f"Transition model: {cells.size} states, {len(samples)} edges, "
        f"{n.size} transitions ({dropped} cells dropped)"
    )
    return TransitionModel(
        cells=tuple(int(c) for c in cells),
        edges=tuple(tuple(e) for e in edges),
        probs=tuple(probs),
        edge_samples=samples,
    )


def strongly_connected_components(model: TransitionModel) -> list[list[int]]:
    n_comp, comp = connected_components(model.matrix.T, directed=True, connection="strong")
    return [np.nonzero(comp == c)[0].tolist() for c in range(n_comp)]


def check_irreducible(model: TransitionModel) -> bool:
    """True iff the transition graph is a single strongly connected component."""
    n_comp, _ = connected_components(model.matrix.T, directed=True, connection="strong")
    return n_comp == 1


def _convergence_gap(residuals: list[float]) -> Optional[float]:
    tail = [r for r in residuals if r > 0][-20:]
    if len(tail) < 2:
        return None
    rate = (tail[-1] / tail[0]) ** (1.0 / (len(tail) - 1))
    return float(min(1.0, max(0.0, 1.0 - rate)))


def stationary_measure(
    model: TransitionModel,
    tol: float = 1e-10,
    max_iters: int = 1_000_000,
    start: Optional[np.ndarray] = None,
    lazy: bool = False,
) -> StationaryEstimate:
    """
    Right Perron vector of P by power iteration from the uniform vector (or ``start``).

    ``lazy`` iterates (I + P) / 2, which shares the fixed point and converges on periodic chains.
    The gap is read off the geometric decay of the residual.
    """
    if not check_irreducible(model):
        raise StructureError(
            "stationary measure needs an irreducible chain",
            components=strongly_connected_components(model),
        )
    P = model.matrix.tocsr()
    m = model.m
    pi = np.full(m, 1.0 / m) if start is None else np.asarray(start, dtype=float) / np.sum(start)

    residuals: list[float] = []
    for iteration in range(1, max_iters + 1):
        image = P @ pi
        residual = float(np.abs(image - pi).sum())
        residuals.append(residual)
        if residual <= tol:
            return StationaryEstimate(
                pi=pi,
                gap=_convergence_gap(residuals),
                irreducible=True,
                residual=residual,
                iterations=iteration,
            )
        pi = 0.5 * (pi + image) if lazy else image
        pi = pi / pi.sum()
    raise ConvergenceError(
        "power iteration did not converge" + ("" if lazy else "; periodic chains need lazy=True"),
        residual=residuals[-1],
        iterations=max_iters,
    )
