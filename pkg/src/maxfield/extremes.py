"""Partial maxima, exceedance sets, clusters and cluster counts.

Exceedances are strict (``X > v``). Counts that look at neighborhoods of a
cell read the stored margin of the grid, never fabricate values, and raise
:class:`~maxfield.errors.ExtentError` when the margin is too thin.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, ExtentError, MaxfieldError
from .fields import GridRealization
from .lattice import NeighborhoodA, OrderSpec, Point, Window

_CHUNK = 4096


def _as_array(points, d: int) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = points.astype(np.int64, copy=False)
    else:
        arr = np.asarray(list(points), dtype=np.int64)
    arr = arr.reshape(-1, d)
    return arr


def partial_max(grid: GridRealization, points) -> float:
    """Maximum of the grid over ``points``; ``-inf`` for the empty set."""
    pts = _as_array(points, grid.dim)
    if len(pts) == 0:
        return -np.inf
    local = pts - grid.origin
    shape = np.asarray(grid.values.shape)
    if np.any(local < 0) or np.any(local >= shape):
        raise ExtentError("point outside the stored grid extent")
    return float(grid.values[tuple(local.T)].max())


@dataclass(frozen=True)
class ExceedanceSet:
    threshold: float
    window: Window
    points: tuple[Point, ...]

    def __len__(self):
        return len(self.points)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.int64).reshape(-1, self.window.dim)


def exceedance_set(grid: GridRealization, window: Window, threshold: float) -> ExceedanceSet:
    """Cells of ``window`` with value strictly above ``threshold``, row-major."""
    hits = np.argwhere(grid.view(window) > threshold) + np.asarray(window.lo)
    return ExceedanceSet(float(threshold), window, tuple(map(tuple, hits.tolist())))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


@dataclass(frozen=True)
class ClusterPartition:
    """Exceedances grouped by chains of sup-norm hops of length ``<= m``.

    Blocks are sorted internally and among themselves by the order used to
    build the partition (blocks by their least element).
    """

    clusters: tuple[tuple[Point, ...], ...]
    m: int

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)


def clusters(J: ExceedanceSet, m: int, order: OrderSpec | None = None) -> ClusterPartition:
    if m < 1:
        raise MaxfieldError(f"cluster range m must be >= 1, got {m}")
    d = J.window.dim
    order = order or OrderSpec.lex(d)
    pts = J.array
    if len(pts) == 0:
        return ClusterPartition((), m)
    uf = _UnionFind(len(pts))
    if len(pts) > 1:
        for a, b in cKDTree(pts).query_pairs(m + 0.5, p=np.inf):
            uf.union(a, b)
    groups: dict[int, list[int]] = {}
    for i in range(len(pts)):
        groups.setdefault(uf.find(i), []).append(i)
    blocks = []
    for idx in groups.values():
        sub = pts[idx]
        sub = sub[order.argsort(sub)]
        blocks.append(tuple(map(tuple, sub.tolist())))
    blocks.sort(key=lambda b: order.key(b[0]))
    return ClusterPartition(tuple(blocks), m)


def diameter(block: Sequence[Point]) -> int:
    """Sup-norm diameter of a point set."""
    arr = np.asarray(block, dtype=np.int64)
    return int((arr.max(axis=0) - arr.min(axis=0)).max())


def classify_small(partition: ClusterPartition, m: int | None = None):
    """Split blocks into small (diameter ``<= m``) and large ones."""
    m = partition.m if m is None else m
    small, large = [], []
    for block in partition:
        (small if diameter(block) <= m else large).append(block)
    return small, large


def _check_covers(grid: GridRealization, w: Window, what: str) -> None:
    if not grid.extent.contains_window(w):
        raise ExtentError(f"{what} needs data on {w}, grid stores only {grid.extent}")


def _hit_any(mask: np.ndarray, origin: np.ndarray, pts: np.ndarray,
             offsets: np.ndarray) -> np.ndarray:
    """For each point, whether ``mask`` is set at any ``point + offset``."""
    out = np.zeros(len(pts), dtype=bool)
    if len(offsets) == 0 or len(pts) == 0:
        return out
    step = max(1, _CHUNK * 64 // max(1, len(offsets)))
    for s in range(0, len(pts), step):
        loc = pts[s:s + step, None, :] + offsets[None, :, :] - origin
        out[s:s + step] = mask[tuple(np.moveaxis(loc, -1, 0))].any(axis=1)
    return out


def representatives(grid: GridRealization, window: Window, offsets: np.ndarray,
                    threshold: float) -> np.ndarray:
    """Exceedances ``k`` of ``window`` with no exceedance at ``k + offsets``."""
    radius = np.abs(offsets).max(axis=0) if len(offsets) else np.zeros(window.dim, int)
    _check_covers(grid, window.dilate(tuple(int(r) for r in radius)), "neighborhood count")
    mask = grid.values > threshold
    pts = exceedance_set(grid, window, threshold).array
    return pts[~_hit_any(mask, grid.origin, pts, np.asarray(offsets, dtype=np.int64))]


def count_lambda1(grid: GridRealization, window: Window, A: NeighborhoodA,
                  threshold: float) -> int:
    """Number of ``k`` in ``window`` with ``X_k > v`` and ``M_{k+A} <= v``."""
    if A.dim != window.dim:
        raise DimensionError("neighborhood and window differ in dimension")
    _check_covers(grid, window.dilate(A.radius), "lambda1")
    return int(len(representatives(grid, window, A.offsets, threshold)))


def signed_box_sum(grid: GridRealization, window: Window, m: int,
                   threshold: float) -> np.ndarray:
    """Per-cell inclusion-exclusion sum over ``eps in {0,1}^d``.

    Entry ``k`` equals ``sum_eps (-1)^|eps| 1{M over [k+eps, k+m] > v}``.
    """
    if m < 0:
        raise MaxfieldError(f"m must be nonnegative, got {m}")
    d = window.dim
    if d > 3:
        raise DimensionError(f"signed box sums are supported for d <= 3, got d={d}")
    region = Window(window.lo, tuple(h + m for h in window.hi))
    _check_covers(grid, region, "lambda2")
    mask = (grid.view(region) > threshold).astype(np.int64)
    S = np.zeros(tuple(s + 1 for s in mask.shape), dtype=np.int64)
    S[(slice(1, None),) * d] = mask
    for ax in range(d):
        np.cumsum(S, axis=ax, out=S)
    n = window.shape
    total = np.zeros(n, dtype=np.int64)
    for eps in itertools.product((0, 1), repeat=d):
        # exceedance count in [k+eps, k+m] from the summed-area table
        cnt = np.zeros(n, dtype=np.int64)
        for tau in itertools.product((0, 1), repeat=d):
            sl = tuple(slice(e, e + nl) if t else slice(m + 1, m + 1 + nl)
                       for e, t, nl in zip(eps, tau, n))
            cnt += (-1) ** sum(tau) * S[sl]
        total += (-1) ** sum(eps) * (cnt > 0)
    return total


def count_lambda2(grid: GridRealization, window: Window, m: int, threshold: float) -> int:
    return int(signed_box_sum(grid, window, m, threshold).sum())


@dataclass(frozen=True)
class ClusterStats:
    total: int
    small: int
    large: int
    lambda1: int
    lambda2: int
    exceedances: int


def cluster_stats(grid: GridRealization, window: Window, m: int, A: NeighborhoodA,
                  threshold: float, order: OrderSpec | None = None) -> ClusterStats:
    """Exceedance and cluster counts of one realization at one threshold."""
    J = exceedance_set(grid, window, threshold)
    part = clusters(J, m, order or A.order)
    small, large = classify_small(part, m)
    return ClusterStats(
        total=len(part),
        small=len(small),
        large=len(large),
        lambda1=count_lambda1(grid, window, A, threshold),
        lambda2=count_lambda2(grid, window, m, threshold),
        exceedances=len(J),
    )
