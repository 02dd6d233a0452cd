"""DBSCAN over map-frame point clouds, plus per-cluster centroids.

Core points have at least ``min_points`` neighbours (themselves included)
within ``epsilon``. Clusters are the connected components of core points; a
border point joins the cluster of its lowest-index core neighbour. Output is
independent of the neighbour-search strategy: the numba path walks a uniform
grid, the numpy path queries a k-d tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import _accel
from ._accel import njit
from .errors import EmptyInputError, FrameMisuseError
from .geometry import MAP, PointCloud

DEFAULT_EPSILON = 0.05
DEFAULT_MIN_POINTS = 10
DEFAULT_MIN_CLUSTER_SIZE = 30


@dataclass(frozen=True)
class ClusterParams:
    epsilon: float = DEFAULT_EPSILON
    min_points: int = DEFAULT_MIN_POINTS

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.min_points < 1:
            raise ValueError(f"min_points must be >= 1, got {self.min_points}")


@dataclass(frozen=True)
class Cluster:
    indices: Tuple[int, ...]
    centroid: Tuple[float, float, float]

    def __len__(self):
        return len(self.indices)


def centroid(points) -> Tuple[float, float, float]:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyInputError("centroid of an empty point set")
    return tuple(float(c) for c in pts.mean(axis=0))


# --- numba path -----------------------------------------------------------


@njit(cache=True)
def _grid_index(points, eps):
    """Sort points by grid cell; returns the order and, per occupied cell, its 27 neighbour ranges."""
    n = points.shape[0]
    cells = np.empty((n, 3), dtype=np.int64)
    for i in range(n):
        for a in range(3):
            cells[i, a] = np.int64(np.floor(points[i, a] / eps))
    lo = np.empty(3, dtype=np.int64)
    span = np.empty(3, dtype=np.int64)
    for a in range(3):
        lo[a] = cells[:, a].min() - 1
        span[a] = cells[:, a].max() - lo[a] + 2
    keys = np.empty(n, dtype=np.int64)
    for i in range(n):
        keys[i] = ((cells[i, 0] - lo[0]) * span[1] + (cells[i, 1] - lo[1])) * span[2] + (cells[i, 2] - lo[2])
    order = np.argsort(keys, kind="mergesort")
    sorted_keys = keys[order]

    # occupied cells as runs of equal keys
    n_cells = 1
    for p in range(1, n):
        if sorted_keys[p] != sorted_keys[p - 1]:
            n_cells += 1
    cell_start = np.empty(n_cells + 1, dtype=np.int64)
    c = 0
    cell_start[0] = 0
    for p in range(1, n):
        if sorted_keys[p] != sorted_keys[p - 1]:
            c += 1
            cell_start[c] = p
    cell_start[n_cells] = n

    ranges = np.empty((n_cells, 27, 2), dtype=np.int64)
    for c in range(n_cells):
        i = order[cell_start[c]]
        k = 0
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    key = ((cells[i, 0] + dx - lo[0]) * span[1] + (cells[i, 1] + dy - lo[1])) * span[2] + (
                        cells[i, 2] + dz - lo[2]
                    )
                    ranges[c, k, 0] = np.searchsorted(sorted_keys, key, side="left")
                    ranges[c, k, 1] = np.searchsorted(sorted_keys, key, side="right")
                    k += 1
    return order, cell_start, ranges


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _dbscan_kernel(points, eps, min_points):
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    eps2 = eps * eps
    order, cell_start, ranges = _grid_index(points, eps)
    # work in cell order so neighbours sit next to each other in memory
    sp = np.empty((n, 3), dtype=np.float64)
    for p in range(n):
        for a in range(3):
            sp[p, a] = points[order[p], a]
    n_cells = cell_start.shape[0] - 1

    # pass 1: core flags; counting stops once min_points is reached
    core = np.zeros(n, dtype=np.bool_)
    for c in range(n_cells):
        for p in range(cell_start[c], cell_start[c + 1]):
            cnt = 0
            for k in range(27):
                for q in range(ranges[c, k, 0], ranges[c, k, 1]):
                    d0 = sp[p, 0] - sp[q, 0]
                    d1 = sp[p, 1] - sp[q, 1]
                    d2 = sp[p, 2] - sp[q, 2]
                    if d0 * d0 + d1 * d1 + d2 * d2 <= eps2:
                        cnt += 1
                        if cnt >= min_points:
                            break
                if cnt >= min_points:
                    break
            core[p] = cnt >= min_points

    # pass 2: union core pairs, and record each border point's lowest-index core neighbour
    parent = np.arange(n)
    anchor = np.full(n, -1, dtype=np.int64)
    for c in range(n_cells):
        for p in range(cell_start[c], cell_start[c + 1]):
            for k in range(27):
                for q in range(ranges[c, k, 0], ranges[c, k, 1]):
                    if not core[q]:
                        continue
                    if core[p] and q <= p:
                        continue
                    if not core[p] and anchor[p] >= 0 and order[q] >= order[anchor[p]]:
                        continue
                    d0 = sp[p, 0] - sp[q, 0]
                    d1 = sp[p, 1] - sp[q, 1]
                    d2 = sp[p, 2] - sp[q, 2]
                    if d0 * d0 + d1 * d1 + d2 * d2 > eps2:
                        continue
                    if core[p]:
                        rp = _find(parent, p)
                        rq = _find(parent, q)
                        if rp != rq:
                            parent[max(rp, rq)] = min(rp, rq)
                    else:
                        anchor[p] = q

    # number clusters by their smallest original member index
    pos = np.empty(n, dtype=np.int64)
    for p in range(n):
        pos[order[p]] = p
    root_label = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for i in range(n):
        p = pos[i]
        if core[p]:
            r = _find(parent, p)
        elif anchor[p] >= 0:
            r = _find(parent, anchor[p])
        else:
            continue
        if root_label[r] < 0:
            root_label[r] = next_label
            next_label += 1
        labels[i] = root_label[r]
    return labels


# --- numpy/scipy path -----------------------------------------------------


def _dbscan_numpy(points, eps, min_points):
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    tree = cKDTree(points)
    counts = np.asarray(tree.query_ball_point(points, eps, return_length=True))
    core = counts >= min_points
    pairs = tree.query_pairs(eps, output_type="ndarray")
    if pairs.size:
        a, b = pairs[:, 0], pairs[:, 1]
    else:
        a = b = np.empty(0, dtype=np.int64)

    both = core[a] & core[b]
    graph = coo_matrix((np.ones(int(both.sum())), (a[both], b[both])), shape=(n, n))
    _, component = connected_components(graph, directed=False)

    anchor = np.full(n, n, dtype=np.int64)
    to_b = core[a] & ~core[b]
    np.minimum.at(anchor, b[to_b], a[to_b])
    to_a = core[b] & ~core[a]
    np.minimum.at(anchor, a[to_a], b[to_a])

    group = np.full(n, -1, dtype=np.int64)
    group[core] = component[core]
    border = ~core & (anchor < n)
    group[border] = component[anchor[border]]

    member = np.nonzero(group >= 0)[0]
    if member.size == 0:
        return labels
    _, first, inverse = np.unique(group[member], return_index=True, return_inverse=True)
    # relabel groups in order of their smallest member
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.size)
    labels[member] = rank[inverse.ravel()]
    return labels


def _grid_fits(points, eps) -> bool:
    """Whether the flattened grid key of the numba path stays within int64."""
    if points.shape[0] == 0:
        return True
    extent = (points.max(axis=0) - points.min(axis=0)) / eps + 4
    return float(np.prod(extent)) < 2.0**62


def dbscan_labels(points, eps: float, min_points: int) -> np.ndarray:
    """Cluster label per point (``-1`` for noise); labels ordered by smallest member."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if _accel.USE_NUMBA and _grid_fits(pts, eps):
        return _dbscan_kernel(pts, float(eps), int(min_points))
    return _dbscan_numpy(pts, float(eps), int(min_points))


def cluster(cloud: PointCloud, params: ClusterParams = ClusterParams()) -> List[Cluster]:
    if cloud.frame != MAP:
        raise FrameMisuseError(f"clustering expects a map-frame cloud, got {cloud.frame!r}")
    labels = dbscan_labels(cloud.points, params.epsilon, params.min_points)
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    if n_clusters == 0:
        return []
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_clusters + 1))
    out = []
    for c in range(n_clusters):
        idx = order[bounds[c] : bounds[c + 1]]
        out.append(Cluster(tuple(int(i) for i in idx), centroid(cloud.points[idx])))
    return out


def filter_clusters(clusters: Sequence[Cluster], min_size: int = DEFAULT_MIN_CLUSTER_SIZE) -> List[Cluster]:
    """Drop clusters with fewer than ``min_size`` points."""
    return [c for c in clusters if len(c.indices) >= min_size]
