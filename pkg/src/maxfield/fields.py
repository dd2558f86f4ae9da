"""Innovation laws, kernels and seeded generators for stationary fields.

Random numbers
--------------
Every realization is driven by ``numpy.random.Philox`` keyed directly with
the 64-bit seed (``Philox(key=seed)``, counter starting at zero). A
realization over a latent box of shape ``s`` consumes one call
``rng.random((2, *s))``: plane 0 gives the sign uniforms ``u1`` and
``1 - plane 1`` gives the magnitude uniforms ``u2`` in ``(0, 1]``, both in
row-major order over the latent box. Philox and the float64 conversion are
platform independent, so grids are reproducible bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, ExtentError, MaxfieldError, NotGenerableError
from .lattice import Point, Window, as_point, sup_norm


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


@dataclass(frozen=True)
class TailSpec:
    """Signed Pareto innovations: ``P(|Z| > x) = (x/scale)^-alpha`` for ``x >= scale``.

    ``balance`` is the probability of a positive sign.
    """

    alpha: float
    balance: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise MaxfieldError(f"tail index must be positive, got {self.alpha}")
        if not 0.0 <= self.balance <= 1.0:
            raise MaxfieldError(f"balance must lie in [0, 1], got {self.balance}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise MaxfieldError(f"scale must be positive, got {self.scale}")

    def sample(self, u1, u2):
        """Map uniforms to innovations: ``sign(u1) * scale * u2**(-1/alpha)``."""
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        sign = np.where(u1 < self.balance, 1.0, -1.0)
        return sign * self.scale * u2 ** (-1.0 / self.alpha)

    def survival_abs(self, x):
        """``P(|Z| > x)``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(x < self.scale, 1.0,
                           (np.maximum(x, self.scale) / self.scale) ** -self.alpha)
        return out if out.ndim else float(out)

    def sf(self, y):
        """``P(Z > y)``."""
        y = np.asarray(y, dtype=float)
        g = np.asarray(self.survival_abs(np.abs(y)))
        out = np.where(y >= 0, self.balance * g, 1.0 - (1.0 - self.balance) * g)
        return out if out.ndim else float(out)

    def cdf(self, y):
        """``P(Z <= y)``."""
        y = np.asarray(y, dtype=float)
        pos = 1.0 - self.balance * np.asarray(self.survival_abs(np.abs(y)))
        neg = (1.0 - self.balance) * np.asarray(self.survival_abs(np.abs(y)))
        out = np.where(y >= 0, pos, neg)
        return out if out.ndim else float(out)


def sample_innovation(tail: TailSpec, u1: float, u2: float) -> float:
    return float(tail.sample(u1, u2))


def quantile_a(tail: TailSpec, n: int, d: int) -> float:
    """``a_n = inf{y > 0 : P(|Z| > y) <= n^-d} = scale * n^(d/alpha)``."""
    if n < 1 or d < 1:
        raise MaxfieldError(f"n and d must be positive, got n={n}, d={d}")
    return tail.scale * float(n) ** (d / tail.alpha)


def threshold_v(tail: TailSpec, n: int, d: int, v: float) -> float:
    """Absolute threshold ``v_n = a_n * v``; must not fall below the support."""
    if not v > 0:
        raise MaxfieldError(f"unit threshold must be positive, got {v}")
    vn = quantile_a(tail, n, d) * v
    if vn < tail.scale:
        raise MaxfieldError(
            f"threshold {vn} lies below the innovation support minimum {tail.scale}")
    return vn


@dataclass(frozen=True)
class KernelSpec:
    """Finite-support moving-maximum coefficients ``{offset: c}``.

    Zero coefficients are dropped; at least one must remain.
    """

    coefficients: Mapping[Point, float]
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        items = sorted((as_point(j), float(c)) for j, c in dict(self.coefficients).items())
        items = [(j, c) for j, c in items if c != 0.0]
        if not items:
            raise MaxfieldError("kernel needs at least one nonzero coefficient")
        dims = {len(j) for j, _ in items}
        if len(dims) != 1:
            raise DimensionError(f"kernel offsets of mixed dimension: {sorted(dims)}")
        if not all(math.isfinite(c) for _, c in items):
            raise MaxfieldError("kernel coefficients must be finite")
        object.__setattr__(self, "coefficients", dict(items))
        off = np.asarray([j for j, _ in items], dtype=np.int64)
        val = np.asarray([c for _, c in items], dtype=float)
        off.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "values", val)

    @classmethod
    def identity(cls, d: int) -> "KernelSpec":
        return cls({(0,) * d: 1.0})

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    @property
    def radius(self) -> int:
        return max(sup_norm(j) for j in self.coefficients)

    @property
    def c_plus(self) -> float:
        return max(max(c, 0.0) for c in self.coefficients.values())

    @property
    def c_minus(self) -> float:
        return max(max(-c, 0.0) for c in self.coefficients.values())


@dataclass(frozen=True)
class FieldSpec:
    """A stationary field model: ``iid``, ``moving_max`` or ``external`` data."""

    variant: str
    dimension: int
    tail: TailSpec | None = None
    kernel: KernelSpec | None = None

    def __post_init__(self):
        if self.variant not in ("iid", "moving_max", "external"):
            raise MaxfieldError(f"unknown field variant {self.variant!r}")
        if self.dimension < 1:
            raise DimensionError(f"dimension must be positive, got {self.dimension}")
        if self.variant != "external" and self.tail is None:
            raise MaxfieldError(f"{self.variant} field needs a tail spec")
        if self.variant == "moving_max":
            if self.kernel is None:
                raise MaxfieldError("moving_max field needs a kernel")
            if self.kernel.dim != self.dimension:
                raise DimensionError(
                    f"kernel is {self.kernel.dim}-dimensional, field is {self.dimension}")

    @classmethod
    def iid(cls, tail: TailSpec, d: int) -> "FieldSpec":
        return cls("iid", d, tail)

    @classmethod
    def moving_max(cls, kernel: KernelSpec, tail: TailSpec) -> "FieldSpec":
        return cls("moving_max", kernel.dim, tail, kernel)

    @classmethod
    def external(cls, d: int) -> "FieldSpec":
        return cls("external", d)

    @property
    def generable(self) -> bool:
        return self.variant != "external"

    @property
    def effective_kernel(self) -> KernelSpec:
        """The kernel realizing the field; i.i.d. is the identity kernel."""
        if self.variant == "moving_max":
            return self.kernel
        if self.variant == "iid":
            return KernelSpec.identity(self.dimension)
        raise NotGenerableError("external fields have no kernel")


def dependence_range(spec: FieldSpec) -> int | None:
    """Range ``m`` of m-dependence; ``None`` when unbounded or unknown."""
    if spec.variant == "iid":
        return 0
    if spec.variant == "moving_max":
        return 2 * spec.kernel.radius
    return None


def _term_sf(tail: TailSpec, c: float, x: float) -> float:
    """``P(c * Z > x)``."""
    return tail.sf(x / c) if c > 0 else tail.cdf(x / c)


def marginal_sf(spec: FieldSpec, x) -> float:
    """Exact ``P(X_0 > x)`` for a generable field, accurate in the far tail."""
    kern = spec.effective_kernel
    x = float(x)
    s = np.asarray([_term_sf(spec.tail, c, x) for c in kern.values])
    if np.any(s >= 1.0):
        return 1.0
    return float(-np.expm1(np.log1p(-s).sum()))


def marginal_cdf(spec: FieldSpec, x) -> float:
    """Exact ``P(X_0 <= x)`` for a generable field."""
    kern = spec.effective_kernel
    x = float(x)
    return float(np.prod([1.0 - _term_sf(spec.tail, c, x) for c in kern.values]))


@dataclass(frozen=True)
class GridRealization:
    """Field values on ``window`` dilated by ``margin``, row-major."""

    window: Window
    margin: int
    values: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        if self.margin < 0:
            raise MaxfieldError(f"margin must be nonnegative, got {self.margin}")
        if self.values.shape != self.extent.shape:
            raise MaxfieldError(
                f"values shape {self.values.shape} != dilated window shape {self.extent.shape}")
        if not np.all(np.isfinite(self.values)):
            raise MaxfieldError("grid values must be finite")

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def extent(self) -> Window:
        return self.window.dilate(self.margin)

    @property
    def origin(self) -> np.ndarray:
        """Lattice coordinates of ``values[0, ..., 0]``."""
        return np.asarray(self.extent.lo, dtype=np.int64)

    def view(self, w: Window) -> np.ndarray:
        """Array slice covering window ``w`` (must lie in the stored extent)."""
        if not self.extent.contains_window(w):
            raise ExtentError(f"window {w} not inside stored extent {self.extent}")
        o = self.extent.lo
        return self.values[tuple(slice(a - b, c - b + 1) for a, c, b in zip(w.lo, w.hi, o))]

    def __getitem__(self, point: Sequence[int]) -> float:
        if not self.extent.contains(point):
            raise ExtentError(f"point {tuple(point)} outside stored extent {self.extent}")
        return float(self.values[tuple(int(c) - o for c, o in zip(point, self.extent.lo))])


def _apply_kernel(kern: KernelSpec, Z: np.ndarray, r: int, lead: int = 0) -> np.ndarray:
    """Moving maximum of latents ``Z`` whose trailing axes carry an ``r`` margin."""
    shape = Z.shape[lead:]
    out_shape = tuple(s - 2 * r for s in shape)
    X = None
    for j, c in zip(kern.offsets, kern.values):
        sl = (slice(None),) * lead + tuple(slice(r + o, r + o + s) for o, s in zip(j, out_shape))
        term = c * Z[sl]
        X = term if X is None else np.maximum(X, term)
    return X


def generate(spec: FieldSpec, window: Window, seed: int, margin: int | None = None,
             latent_override: Mapping[Point, float] | None = None) -> GridRealization:
    """Simulate one realization covering ``window`` plus ``margin`` cells.

    Latents are drawn over the stored extent dilated by the kernel radius.
    ``latent_override`` replaces selected latent values after drawing (used for
    locality checks); it does not shift the random stream.
    """
    if not spec.generable:
        raise NotGenerableError("external fields enter through grid ingestion, not generation")
    if window.dim != spec.dimension:
        raise DimensionError(f"window is {window.dim}-dimensional, field is {spec.dimension}")
    kern = spec.effective_kernel
    r = kern.radius
    margin = r if margin is None else int(margin)
    if margin < 0:
        raise MaxfieldError(f"margin must be nonnegative, got {margin}")
    ext = window.dilate(margin)
    lat = ext.dilate(r)
    u = make_rng(seed).random((2,) + lat.shape)
    Z = spec.tail.sample(u[0], 1.0 - u[1])
    if latent_override:
        for z, val in latent_override.items():
            if not lat.contains(z):
                continue
            Z[tuple(c - o for c, o in zip(z, lat.lo))] = val
    X = _apply_kernel(kern, Z, r)
    return GridRealization(window, margin, np.ascontiguousarray(X), int(seed))


def latent_extent(spec: FieldSpec, window: Window, margin: int | None = None) -> Window:
    r = spec.effective_kernel.radius
    return window.dilate(r if margin is None else margin).dilate(r)


def _trigger_levels(kern: KernelSpec, lat: Window, targets: np.ndarray, threshold: float):
    """Latent sites able to push some target above ``threshold``, with levels.

    ``X_k > v`` for a target ``k`` forces ``|Z_{k+j}| > v/|c_j|`` for some kernel
    offset ``j``; each latent site gets the lowest such level.
    """
    best: dict[Point, float] = {}
    absc = np.abs(kern.values)
    for k in targets:
        for j, a in zip(kern.offsets, absc):
            z = tuple(int(x) for x in (k + j))
            if a > best.get(z, 0.0):
                best[z] = a
    sites = sorted(best)
    shape = lat.shape
    flat = np.asarray([np.ravel_multi_index(tuple(c - o for c, o in zip(z, lat.lo)), shape)
                       for z in sites], dtype=np.int64)
    levels = np.asarray([threshold / best[z] for z in sites], dtype=float)
    return flat, levels


def sample_patches(spec: FieldSpec, box: Window, count: int, rng: np.random.Generator,
                   condition_on: np.ndarray | None = None, threshold: float | None = None):
    """Draw ``count`` independent field patches over ``box``.

    Returns ``(X, weight)`` with ``X`` of shape ``(count, *box.shape)``.

    With ``condition_on`` (an ``(n, d)`` array of target cells) the patches
    are drawn from the law conditioned on the event ``G`` that at least one
    latent able to lift a target above ``threshold`` exceeds its level, and
    ``weight = P(G)``; otherwise ``weight = 1``. Any event contained in
    ``{max over targets > threshold}`` is contained in ``G``, so
    ``weight * mean(indicator)`` estimates its probability without bias.

    The conditional draw picks the first exceeding trigger site ``I`` from its
    exact law, draws the sites before ``I`` below their levels, site ``I`` above
    its level and all other latents unconditionally.
    """
    kern = spec.effective_kernel
    r = kern.radius
    lat = box.dilate(r)
    u = rng.random((2, count) + lat.shape)
    w = 1.0 - u[1]
    weight = 1.0
    if condition_on is not None:
        targets = np.asarray(condition_on, dtype=np.int64).reshape(-1, spec.dimension)
        flat, levels = _trigger_levels(kern, lat, targets, float(threshold))
        q = np.asarray(spec.tail.survival_abs(levels), dtype=float).reshape(-1)
        log_keep = np.log1p(-np.minimum(q, 1.0)) if np.all(q < 1.0) else None
        if log_keep is not None:
            weight = float(-np.expm1(log_keep.sum()))
        # weight 1: some trigger exceeds surely; weight 0: G underflows, nothing to condition on
        if log_keep is not None and weight > 0.0:
            before = np.concatenate([[0.0], np.cumsum(log_keep)[:-1]])
            p_first = np.exp(before) * q
            cdf = np.cumsum(p_first) / p_first.sum()
            first = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"),
                               len(q) - 1)
            wf = w.reshape(count, -1)
            sub = wf[:, flat]
            rank = np.arange(len(flat))[None, :]
            below = rank < first[:, None]
            at = rank == first[:, None]
            sub = np.where(below, q + (1.0 - q) * sub, np.where(at, q * sub, sub))
            wf[:, flat] = sub
    Z = spec.tail.sample(u[0], w)
    X = _apply_kernel(kern, Z, r, lead=1)
    return X, weight
