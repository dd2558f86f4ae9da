"""Multi-indices, boxes and translation-invariant orders on Z^d.

Lattice points are plain tuples of ints. A :class:`Window` is an inclusive
axis-aligned box ``lo <= i <= hi``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError, MaxfieldError

Point = tuple[int, ...]

LESS, EQUAL, GREATER = -1, 0, 1


def as_point(coords: Sequence[int]) -> Point:
    pt = tuple(int(c) for c in coords)
    if len(pt) == 0:
        raise DimensionError("lattice points need at least one coordinate")
    return pt


def sup_norm(i: Sequence[int]) -> int:
    return max(abs(int(c)) for c in i)


@dataclass(frozen=True)
class Window:
    """Inclusive box ``{i : lo <= i <= hi}``."""

    lo: Point
    hi: Point

    def __post_init__(self):
        lo, hi = as_point(self.lo), as_point(self.hi)
        if len(lo) != len(hi):
            raise DimensionError(f"window corners differ in dimension: {lo} vs {hi}")
        if any(a > b for a, b in zip(lo, hi)):
            raise MaxfieldError(f"window lo {lo} exceeds hi {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_shape(cls, shape: Sequence[int]) -> "Window":
        """The window ``{1 <= i <= shape}``."""
        shape = as_point(shape)
        if any(s < 1 for s in shape):
            raise MaxfieldError(f"window shape must be positive, got {shape}")
        return cls((1,) * len(shape), shape)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> Point:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def dilate(self, r: int | Sequence[int]) -> "Window":
        rr = (int(r),) * self.dim if np.isscalar(r) else as_point(r)
        return Window(tuple(a - s for a, s in zip(self.lo, rr)),
                      tuple(b + s for b, s in zip(self.hi, rr)))

    def shrink(self, r: int | Sequence[int]) -> "Window":
        rr = (int(r),) * self.dim if np.isscalar(r) else as_point(r)
        return Window(tuple(a + s for a, s in zip(self.lo, rr)),
                      tuple(b - s for b, s in zip(self.hi, rr)))

    def contains(self, i: Sequence[int]) -> bool:
        return all(a <= c <= b for a, c, b in zip(self.lo, i, self.hi))

    def contains_window(self, other: "Window") -> bool:
        return self.contains(other.lo) and self.contains(other.hi)

    def __iter__(self) -> Iterator[Point]:
        return enumerate_window(self)


def enumerate_window(w: Window) -> Iterator[Point]:
    """Yield every point of ``w`` once, row-major (last axis fastest)."""
    return itertools.product(*(range(a, b + 1) for a, b in zip(w.lo, w.hi)))


def block_sizes(N: Sequence[int], k: int) -> Point:
    """Block edge lengths ``floor(N_l / k)`` for ``k`` blocks per axis."""
    N = as_point(N)
    k = int(k)
    if k < 1:
        raise MaxfieldError(f"block count must be positive, got {k}")
    if any(n < k for n in N):
        raise MaxfieldError(f"block count {k} exceeds window shape {N}")
    return tuple(n // k for n in N)


@dataclass(frozen=True)
class OrderSpec:
    """Lexicographic order on Z^d after an axis permutation and sign flips.

    Points are compared through the key ``(signs[a] * i[a] for a in
    permutation)``; ``signs`` is indexed by axis, not by rank. Every such
    order is total and translation invariant.
    """

    permutation: Point
    signs: Point

    def __post_init__(self):
        perm, signs = as_point(self.permutation), as_point(self.signs)
        if sorted(perm) != list(range(len(perm))):
            raise MaxfieldError(f"not a permutation of axes: {perm}")
        if len(signs) != len(perm) or any(s not in (1, -1) for s in signs):
            raise MaxfieldError(f"signs must be +1/-1 per axis, got {signs}")
        object.__setattr__(self, "permutation", perm)
        object.__setattr__(self, "signs", signs)

    @classmethod
    def lex(cls, d: int) -> "OrderSpec":
        return cls(tuple(range(d)), (1,) * d)

    @property
    def dim(self) -> int:
        return len(self.permutation)

    def key(self, i: Sequence[int]) -> Point:
        if len(i) != self.dim:
            raise DimensionError(f"point {tuple(i)} is not {self.dim}-dimensional")
        return tuple(self.signs[a] * int(i[a]) for a in self.permutation)

    def keys(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`key` for an ``(n, d)`` integer array."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.dim)
        return pts[:, list(self.permutation)] * np.asarray(
            [self.signs[a] for a in self.permutation], dtype=np.int64)

    def argsort(self, pts: np.ndarray) -> np.ndarray:
        """Indices sorting ``pts`` increasingly in this order."""
        k = self.keys(pts)
        if len(k) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.lexsort(k.T[::-1])

    def reversed(self) -> "OrderSpec":
        return OrderSpec(self.permutation, tuple(-s for s in self.signs))


def compare(order: OrderSpec, i: Sequence[int], j: Sequence[int]) -> int:
    """Three-way comparison: ``LESS`` (-1), ``EQUAL`` (0) or ``GREATER`` (1)."""
    ki, kj = order.key(i), order.key(j)
    return (ki > kj) - (ki < kj)


@dataclass(frozen=True)
class NeighborhoodA:
    """The points ``j`` of the box ``[-p, p]`` with ``0 < j`` in ``order``."""

    order: OrderSpec
    radius: Point
    points: tuple[Point, ...]
    offsets: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, j):
        return tuple(j) in self._members

    @cached_property
    def _members(self) -> frozenset:
        return frozenset(self.points)

    @property
    def dim(self) -> int:
        return len(self.radius)

    def difference(self, other: "NeighborhoodA") -> np.ndarray:
        """Offsets of ``self`` not in ``other``, as an ``(n, d)`` array."""
        drop = set(other.points)
        rows = [p for p in self.points if p not in drop]
        return np.asarray(rows, dtype=np.int64).reshape(-1, self.dim)


def neighborhood_A(order: OrderSpec, p: Sequence[int]) -> NeighborhoodA:
    """Order-derived declustering neighborhood, enumerated row-major."""
    p = as_point(p)
    if len(p) != order.dim:
        raise DimensionError(f"radius {p} does not match order dimension {order.dim}")
    if any(c < 0 for c in p):
        raise MaxfieldError(f"radius must be nonnegative, got {p}")
    box = np.asarray(list(enumerate_window(Window(tuple(-c for c in p), p))),
                     dtype=np.int64).reshape(-1, len(p))
    keys = order.keys(box)
    # first nonzero key component positive <=> 0 precedes j
    nz = keys != 0
    has = nz.any(axis=1)
    first = np.argmax(nz, axis=1)
    sel = has & (keys[np.arange(len(keys)), first] > 0)
    offsets = box[sel]
    offsets.setflags(write=False)
    return NeighborhoodA(order, p, tuple(map(tuple, offsets.tolist())), offsets)
