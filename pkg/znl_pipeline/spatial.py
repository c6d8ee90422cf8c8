"""
Exact Euclidean neighbor queries.

Two interchangeable paths answer every query:
- "brute": chunked all-pairs evaluation
- "tree":  KD-tree candidate search, re-scored with the same distance kernel

Both paths score pairs with `squared_distances`, whose coordinate summation order is fixed,
so they return bitwise-identical distances and neighbor sets.
"""

from typing import Literal, Optional

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from znl_pipeline.errors import ArgumentError


Method = Literal["auto", "brute", "tree"]

TREE_THRESHOLD = 20_000
CHUNK_ELEMENTS = 4_000_000
_SLACK = 1e-9


def _as_points(points: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ArgumentError(f"{name} must be a non-empty set of points, got shape {arr.shape}")
    return arr


def resolve_method(method: Method, size: int) -> str:
    if method == "auto":
        return "tree" if size > TREE_THRESHOLD else "brute"
    if method not in ("brute", "tree"):
        raise ArgumentError(f"unknown neighbor method '{method}'")
    return method


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """|a_i - b_j|^2 for all pairs, summed coordinate by coordinate in index order."""
    out = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = a[:, k][:, None] - b[:, k][None, :]
        out += diff * diff
    return out


def euclidean_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(squared_distances(a, b))


def _chunk_rows(n_rows: int, n_cols: int, dim: int) -> int:
    return max(1, CHUNK_ELEMENTS // max(1, n_cols * dim))


def nearest_distances(
    queries: np.ndarray,
    points: np.ndarray,
    method: Method = "auto",
) -> tuple[np.ndarray, np.ndarray]:
    """
    Distance from every query to its nearest point, and that point's index.

    Ties resolve to the lowest point index on both paths.
    """
    queries = _as_points(queries, "queries")
    points = _as_points(points, "points")
    if queries.shape[1] != points.shape[1]:
        raise ArgumentError(
            f"dimension mismatch: queries have d={queries.shape[1]}, "
            f"points have d={points.shape[1]}"
        )
    path = resolve_method(method, max(queries.shape[0], points.shape[0]))
    if path == "brute":
        return _nearest_brute(queries, points)
    return _nearest_tree(queries, points)


def _nearest_brute(queries: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = queries.shape[0]
    dist = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    step = _chunk_rows(n, points.shape[0], points.shape[1])
    for start in range(0, n, step):
        block = squared_distances(queries[start : start + step], points)
        arg = np.argmin(block, axis=1)
        idx[start : start + step] = arg
        dist[start : start + step] = np.sqrt(block[np.arange(block.shape[0]), arg])
    return dist, idx


def _nearest_tree(queries: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tree = cKDTree(points)
    k = min(16, points.shape[0])
    tree_dist, tree_idx = tree.query(queries, k=k)
    if k == 1:
        tree_dist = tree_dist[:, None]
        tree_idx = tree_idx[:, None]

    n = queries.shape[0]
    dist = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    for q in range(n):
        cand = np.sort(tree_idx[q])
        sq = squared_distances(queries[q : q + 1], points[cand])[0]
        best = int(np.argmin(sq))
        best_sq = sq[best]
        # candidates beyond the k-th tree neighbour could still tie or win after re-scoring
        if k < points.shape[0] and tree_dist[q, -1] <= np.sqrt(best_sq) * (1 + _SLACK) + _SLACK:
            radius = np.sqrt(best_sq) * (1 + _SLACK) + _SLACK
            cand = np.array(sorted(tree.query_ball_point(queries[q], radius)), dtype=np.int64)
            sq = squared_distances(queries[q : q + 1], points[cand])[0]
            best = int(np.argmin(sq))
            best_sq = sq[best]
        idx[q] = cand[best]
        dist[q] = np.sqrt(best_sq)
    return dist, idx


def radius_adjacency(
    points: np.ndarray,
    radius: float,
    method: Method = "auto",
) -> sparse.csr_matrix:
    """
    0/1 adjacency of the closed-ball graph: entry (i, j) is 1 iff |x_i - x_j| <= radius.

    Stored sparsely; the diagonal is always present.
    """
    points = _as_points(points, "points")
    if not radius > 0:
        raise ArgumentError(f"radius must be positive, got {radius}")
    n = points.shape[0]
    path = resolve_method(method, n)
    r_sq = radius * radius
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []

    if path == "brute":
        step = _chunk_rows(n, n, points.shape[1])
        for start in range(0, n, step):
            block = squared_distances(points[start : start + step], points)
            r, c = np.nonzero(block <= r_sq)
            rows.append(r + start)
            cols.append(c)
    else:
        tree = cKDTree(points)
        pairs = tree.query_pairs(radius * (1 + _SLACK) + _SLACK, output_type="ndarray")
        if pairs.size:
            a, b = pairs[:, 0], pairs[:, 1]
            sq = np.zeros(a.size)
            for k in range(points.shape[1]):
                diff = points[a, k] - points[b, k]
                sq += diff * diff
            keep = sq <= r_sq
            a, b = a[keep], b[keep]
            rows.extend([a, b])
            cols.extend([b, a])
        diag = np.arange(n)
        rows.append(diag)
        cols.append(diag)

    row = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    col = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    data = np.ones(row.size, dtype=np.int8)
    adjacency = sparse.csr_matrix((data, (row, col)), shape=(n, n))
    adjacency.sum_duplicates()
    adjacency.sort_indices()
    return adjacency


def close_pairs(points: np.ndarray, radius: float) -> np.ndarray:
    """Index pairs (i, j), i < j, with 0 <= |x_i - x_j| <= radius."""
    points = _as_points(points, "points")
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius * (1 + _SLACK) + _SLACK, output_type="ndarray")
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    sq = np.zeros(pairs.shape[0])
    for k in range(points.shape[1]):
        diff = points[pairs[:, 0], k] - points[pairs[:, 1], k]
        sq += diff * diff
    pairs = pairs[sq <= radius * radius]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]
