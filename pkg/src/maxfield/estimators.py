"""Monte Carlo probabilities, maxima approximations and extremal-index estimators.

Patch estimators
----------------
Quantities such as ``P(X_0 > v, M_A <= v)`` are estimated from independent
field patches around the origin. At high thresholds these events are rare,
so by default the patches are drawn conditionally on the event ``G`` that a
latent able to produce the required exceedance is itself large (see
:func:`maxfield.fields.sample_patches`). ``P(G)`` is known in closed form,
the estimate is ``P(G) * mean(indicator)`` and its standard error is
``P(G) * sd(indicator) / sqrt(R)``. Passing ``conditioned=False`` uses plain
sampling instead.

Patches are produced in fixed-size chunks; chunk ``c`` is seeded with
``seed_substream(seed, c)``. Per-patch statistics are integers and are
summed exactly, so any number of worker threads yields identical results.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateKernelError, DimensionError, MaxfieldError, NotGenerableError
from .extremes import ClusterStats, count_lambda1, exceedance_set
from .fields import (FieldSpec, GridRealization, KernelSpec, TailSpec, generate, make_rng,
                     marginal_sf, sample_patches, threshold_v)
from .lattice import NeighborhoodA, OrderSpec, Point, Window, block_sizes, neighborhood_A
from .seeding import seed_substream

LATENTS_PER_CHUNK = 1 << 20


@dataclass(frozen=True)
class EstimateResult:
    """A Monte Carlo estimate. ``estimate is None`` marks an undefined ratio."""

    estimate: float | None
    std_error: float
    count: int
    meta: str = ""
    interval: tuple[float, float] | None = None
    flag: str | None = None

    @property
    def defined(self) -> bool:
        return self.estimate is not None

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error, "count": self.count,
                "meta": self.meta,
                "interval": list(self.interval) if self.interval else None,
                "flag": self.flag}


def window_n(N) -> int:
    """``n = round(prod(N) ** (1/d))``."""
    return int(round(math.prod(N) ** (1.0 / len(N))))


def proportion(hits: int, total: int, meta: str = "", scale: float = 1.0) -> EstimateResult:
    """``scale * hits/total`` with binomial standard error."""
    if total < 1:
        raise MaxfieldError("proportion over zero trials")
    p = hits / total
    flag = "single trial: standard error unavailable" if total <= 1 else None
    se = 0.0 if total <= 1 else scale * math.sqrt(p * (1.0 - p) / total)
    return EstimateResult(scale * p, se, total, meta, flag=flag)


def _map(fn, items, threads: int):
    if threads is None or threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _require_generable(field: FieldSpec) -> None:
    if not field.generable:
        raise NotGenerableError("Monte Carlo estimators need a generable field")


def mc_prob_max_leq(field: FieldSpec, N, threshold: float, R: int, seed: int,
                    threads: int = 1) -> EstimateResult:
    """Fraction of ``R`` realizations on ``[1, N]`` whose maximum is ``<= threshold``."""
    _require_generable(field)
    if R < 1:
        raise MaxfieldError("need at least one replication")
    w = Window.from_shape(N)

    def one(r):
        g = generate(field, w, seed_substream(seed, r), margin=0)
        return int(g.values.max() <= threshold)

    return proportion(sum(_map(one, range(R), threads)), R, "P(M_N <= v)")


def _patch_sums(field: FieldSpec, box: Window, R: int, seed: int,
                stat: Callable[[np.ndarray], np.ndarray], threshold: float,
                condition_on: np.ndarray | None, threads: int = 1):
    """Return ``(sum, sum of squares, weight)`` of an integer patch statistic."""
    _require_generable(field)
    if R < 1:
        raise MaxfieldError("need at least one patch")
    lat_cells = box.dilate(field.effective_kernel.radius).size
    chunk = max(1, min(R, LATENTS_PER_CHUNK // lat_cells))
    starts = list(range(0, R, chunk))

    def one(c):
        count = min(chunk, R - starts[c])
        X, weight = sample_patches(field, box, count, make_rng(seed_substream(seed, c)),
                                   condition_on=condition_on, threshold=threshold)
        s = np.asarray(stat(X), dtype=np.int64)
        return int(s.sum()), int((s * s).sum()), weight

    parts = _map(one, range(len(starts)), threads)
    weights = {p[2] for p in parts}
    assert len(weights) == 1
    return sum(p[0] for p in parts), sum(p[1] for p in parts), weights.pop()


def _mean_result(total: int, total_sq: int, R: int, weight: float, meta: str,
                 scale: float = 1.0) -> EstimateResult:
    mean = total / R
    var = max(total_sq / R - mean * mean, 0.0)
    se = 0.0 if R <= 1 else scale * weight * math.sqrt(var / R)
    flag = "single trial: standard error unavailable" if R <= 1 else None
    return EstimateResult(scale * weight * mean, se, R, meta, flag=flag)


def _flat(box: Window, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, box.dim) - np.asarray(box.lo)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.ravel_multi_index(tuple(pts.T), box.shape)


def _origin_box(p) -> Window:
    return Window(tuple(-c for c in p), tuple(p))


def _origin(d: int) -> np.ndarray:
    return np.zeros((1, d), dtype=np.int64)


def _max_over(Xf: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if len(idx) == 0:
        return np.full(Xf.shape[0], -np.inf)
    return Xf[:, idx].max(axis=1)


def mc_local_prob(field: FieldSpec, A: NeighborhoodA, threshold: float, R: int, seed: int,
                  conditioned: bool = True, threads: int = 1) -> EstimateResult:
    """Estimate ``P(X_0 > v, M_A <= v)`` from ``R`` patches."""
    if A.dim != field.dimension:
        raise DimensionError("neighborhood and field differ in dimension")
    box = _origin_box(A.radius)
    c0 = _flat(box, _origin(box.dim))[0]
    ai = _flat(box, A.offsets)

    def stat(X):
        Xf = X.reshape(len(X), -1)
        return (Xf[:, c0] > threshold) & (_max_over(Xf, ai) <= threshold)

    tot, sq, w = _patch_sums(field, box, R, seed, stat, threshold,
                             _origin(box.dim) if conditioned else None, threads)
    return _mean_result(tot, sq, R, w, "P(X_0 > v, M_A <= v)")


def obrien_approx(n: int, d: int, local_prob: float) -> float:
    """``exp(-n^d * local_prob)``."""
    if not 0.0 <= local_prob <= 1.0:
        raise MaxfieldError(f"local probability must lie in [0, 1], got {local_prob}")
    return math.exp(-(float(n) ** d) * local_prob)


def approx_from_local(n: int, d: int, local: EstimateResult, meta: str = "") -> EstimateResult:
    """Push a local-probability estimate through ``exp(-n^d x)``.

    Standard error by the delta method; ``interval`` is ``exp(-n^d (x +- 2 SE))``
    with the lower exponent clipped at zero.
    """
    nd = float(n) ** d
    phi = min(max(local.estimate, 0.0), 1.0)
    est = math.exp(-nd * phi)
    lo = math.exp(-nd * (phi + 2 * local.std_error))
    hi = math.exp(-nd * max(phi - 2 * local.std_error, 0.0))
    return EstimateResult(est, nd * est * local.std_error, local.count, meta or local.meta,
                          interval=(lo, hi), flag=local.flag)


def newell_approx(field: FieldSpec, m: int, threshold: float, n: int, d: int,
                  order: OrderSpec, R: int, seed: int, conditioned: bool = True,
                  threads: int = 1) -> EstimateResult:
    """``exp(-n^d P(X_0 > v, M_{A((m,...,m))} <= v))``."""
    if m < 0:
        raise MaxfieldError(f"m must be nonnegative, got {m}")
    if d != field.dimension:
        raise DimensionError("d does not match the field dimension")
    A = neighborhood_A(order, (m,) * d)
    local = mc_local_prob(field, A, threshold, R, seed, conditioned, threads)
    return approx_from_local(n, d, local, f"newell m={m}")


def mc_signed_box_prob(field: FieldSpec, m: int, threshold: float, R: int, seed: int,
                       conditioned: bool = True, threads: int = 1) -> EstimateResult:
    """Coupled estimate of ``sum_eps (-1)^|eps| P(M_{eps,(m,...,m)} > v)``."""
    if m < 1:
        raise MaxfieldError(f"m must be >= 1, got {m}")
    d = field.dimension
    box = Window((0,) * d, (m,) * d)
    eps_list = list(np.ndindex(*(2,) * d))

    def stat(X):
        R_ = len(X)
        s = np.zeros(R_, dtype=np.int64)
        for eps in eps_list:
            sub = X[(slice(None),) + tuple(slice(e, None) for e in eps)]
            s += (-1) ** sum(eps) * (sub.reshape(R_, -1).max(axis=1) > threshold)
        return s

    cond = np.asarray(list(box), dtype=np.int64) if conditioned else None
    tot, sq, w = _patch_sums(field, box, R, seed, stat, threshold, cond, threads)
    return _mean_result(tot, sq, R, w, "signed box sum")


def inclusion_exclusion_approx(field: FieldSpec, m: int, threshold: float, n: int, d: int,
                               R: int, seed: int, conditioned: bool = True,
                               threads: int = 1) -> EstimateResult:
    """``exp(-n^d sum_eps (-1)^|eps| P(M_{eps,(m,...,m)} > v))``, all terms coupled."""
    if d != field.dimension:
        raise DimensionError("d does not match the field dimension")
    local = mc_signed_box_prob(field, m, threshold, R, seed, conditioned, threads)
    return approx_from_local(n, d, local, f"inclusion-exclusion m={m}")


def runs_counts(grid: GridRealization, window: Window, A: NeighborhoodA, p,
                threshold: float) -> tuple[int, int]:
    """``(numerator, S_n)`` of the runs estimator."""
    p = tuple(int(c) for c in p)
    if any(s <= 2 * c for s, c in zip(window.shape, p)):
        raise MaxfieldError(f"window {window.shape} is not larger than 2p = {tuple(2 * c for c in p)}")
    S = len(exceedance_set(grid, window, threshold))
    num = count_lambda1(grid, window.shrink(p), A, threshold) if S else 0
    return num, S


def runs_estimator(grid: GridRealization, window: Window, A: NeighborhoodA, p,
                   threshold: float) -> float | None:
    """Share of exceedances that are order-maximal in their ``A``-neighborhood.

    The numerator runs over the ``p``-interior of ``window``, the exceedance
    count ``S_n`` over all of it. ``None`` when ``S_n = 0``.
    """
    num, S = runs_counts(grid, window, A, p, threshold)
    return None if S == 0 else num / S


def ratio_result(num: int, den: int, meta: str) -> EstimateResult:
    """``num/den`` for nested counts, binomial-conditional (delta method) SE."""
    if den == 0:
        return EstimateResult(None, 0.0, 0, meta, flag="zero denominator")
    th = num / den
    return EstimateResult(th, math.sqrt(th * (1.0 - th) / den), den, meta)


def theta_f1_ratio(field: FieldSpec, N, k: int, order: OrderSpec, threshold: float,
                   R: int, seed: int, conditioned: bool = True,
                   threads: int = 1) -> EstimateResult:
    """``P(X_0 > v, M_{A(p)} <= v) / P(X_0 > v)`` from one patch sample, ``p = floor(N/k)``."""
    p = block_sizes(N, k)
    A = neighborhood_A(order, p)
    box = _origin_box(p)
    c0 = _flat(box, _origin(box.dim))[0]
    ai = _flat(box, A.offsets)
    # both counts packed into one integer statistic: 2 * rep + exceed
    def stat(X):
        Xf = X.reshape(len(X), -1)
        ex = Xf[:, c0] > threshold
        rep = ex & (_max_over(Xf, ai) <= threshold)
        return 2 * rep.astype(np.int64) + ex

    tot, sq, w = _patch_sums(field, box, R, seed, stat, threshold,
                             _origin(box.dim) if conditioned else None, threads)
    if w == 0.0:
        return ratio_result(0, 0, f"theta F1 p={p}")
    # per patch the value is 0, 1 or 3, so tot = 3 a + (b - a) and sq = 9 a + (b - a)
    a = (sq - tot) // 6
    b = tot - 2 * a
    return ratio_result(a, b, f"theta F1 p={p}")


def theta_cluster(stats: ClusterStats, variant: str = "total") -> float | None:
    """Clusters per exceedance; ``variant`` picks the counter (total, lambda1, lambda2)."""
    if variant not in ("total", "lambda1", "lambda2"):
        raise MaxfieldError(f"unknown cluster count {variant!r}")
    if stats.exceedances == 0:
        return None
    return getattr(stats, variant) / stats.exceedances


def check_local_mixing(field: FieldSpec, m: int, N, k: int, order: OrderSpec,
                       threshold: float, R: int, seed: int, conditioned: bool = True,
                       threads: int = 1) -> EstimateResult:
    """``n^d P(X_0 > v >= M_{A(m)}, M_{A(p) minus A(m)} > v)`` with ``p = floor(N/k)``."""
    d = field.dimension
    p = block_sizes(N, k)
    if any(m > c for c in p):
        raise MaxfieldError(f"m={m} exceeds block sizes {p}")
    n = window_n(N)
    nd = float(n) ** d
    Ap = neighborhood_A(order, p)
    Am = neighborhood_A(order, (m,) * d)
    outer = Ap.difference(Am)
    if len(outer) == 0:
        return EstimateResult(0.0, 0.0, R, "local mixing (empty difference set)")
    box = _origin_box(p)
    c0 = _flat(box, _origin(d))[0]
    mi, oi = _flat(box, Am.offsets), _flat(box, outer)

    def stat(X):
        Xf = X.reshape(len(X), -1)
        return ((Xf[:, c0] > threshold) & (_max_over(Xf, mi) <= threshold)
                & (_max_over(Xf, oi) > threshold))

    tot, sq, w = _patch_sums(field, box, R, seed, stat, threshold,
                             _origin(d) if conditioned else None, threads)
    return _mean_result(tot, sq, R, w, f"local mixing m={m} p={p}", scale=nd)


def cond_prop_sets(p) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """``(U_l, V_l, W_l)`` for ``l = 1..p_2`` in the lexicographic order on Z^2."""
    p1, p2 = int(p[0]), int(p[1])
    A = neighborhood_A(OrderSpec.lex(2), (p1, p2))
    out = []
    for l in range(1, p2 + 1):
        U = [(a, b) for a in range(0, p1 + 1) for b in range(p2 - l + 1, p2 + 1)]
        V = [(a, -l) for a in range(1, p1 + 1)]
        W = [j for j in A.points if -l + 1 <= j[1] <= p2 - l]
        out.append(tuple(np.asarray(s, dtype=np.int64).reshape(-1, 2) for s in (U, V, W)))
    return out


def check_cond_prop(field: FieldSpec, p, threshold: float, n: int, R: int, seed: int,
                    conditioned: bool = True, threads: int = 1) -> EstimateResult:
    """``n^2 sum_l P(X_0 > v, M_{U_l} > v, M_{V_l} > v, M_{W_l} <= v)`` (d = 2 only)."""
    if field.dimension != 2:
        raise DimensionError("the U/V/W condition is defined for d = 2 only")
    p = tuple(int(c) for c in p)
    box = _origin_box(p)
    c0 = _flat(box, _origin(2))[0]
    sets = [tuple(_flat(box, s) for s in uvw) for uvw in cond_prop_sets(p)]

    def stat(X):
        Xf = X.reshape(len(X), -1)
        ex = Xf[:, c0] > threshold
        s = np.zeros(len(X), dtype=np.int64)
        for U, V, W in sets:
            s += (ex & (_max_over(Xf, U) > threshold) & (_max_over(Xf, V) > threshold)
                  & (_max_over(Xf, W) <= threshold))
        return s

    tot, sq, w = _patch_sums(field, box, R, seed, stat, threshold,
                             _origin(2) if conditioned else None, threads)
    return _mean_result(tot, sq, R, w, f"U/V/W condition p={p}", scale=float(n) ** 2)


def analytic_tail_mm(kernel: KernelSpec, tail: TailSpec) -> float:
    """``lim P(X_0 > x) / P(|Z_0| > x) = p sum_{c>0} c^a + q sum_{c<0} |c|^a``."""
    a, pb = tail.alpha, tail.balance
    c = kernel.values
    return float(pb * np.sum(c[c > 0] ** a) + (1.0 - pb) * np.sum((-c[c < 0]) ** a))


def _cluster_tail(kernel: KernelSpec, tail: TailSpec) -> float:
    return tail.balance * kernel.c_plus ** tail.alpha + (1.0 - tail.balance) * kernel.c_minus ** tail.alpha


def analytic_theta_mm(kernel: KernelSpec, tail: TailSpec) -> float:
    den = analytic_tail_mm(kernel, tail)
    if not den > 0:
        raise DegenerateKernelError(
            "extremal index undefined: no kernel coefficient can produce upper "
            "exceedances for this sign balance (zero denominator)")
    return _cluster_tail(kernel, tail) / den


def analytic_limit_mm(kernel: KernelSpec, tail: TailSpec, v: float) -> float:
    """Limit of ``P(M_N <= v_n)``: ``exp(-(p c+^a + q c-^a) v^-a)``."""
    if not v > 0:
        raise MaxfieldError(f"v must be positive, got {v}")
    return math.exp(-_cluster_tail(kernel, tail) * v ** -tail.alpha)


def tail_intensity(tail: TailSpec, kernel: KernelSpec | None, n: int, d: int,
                   v: float) -> float:
    """``n^d P(X_0 > v_n)``, exact for the Pareto moving maximum (``None`` kernel: i.i.d.)."""
    spec = (FieldSpec.iid(tail, d) if kernel is None else FieldSpec.moving_max(kernel, tail))
    if spec.dimension != d:
        raise DimensionError("kernel dimension differs from d")
    return float(n) ** d * marginal_sf(spec, threshold_v(tail, n, d, v))


def empirical_tail_intensity(grid: GridRealization, window: Window, threshold: float,
                             n: int) -> float:
    """``n^d`` times the exceedance frequency of one grid (for external data)."""
    return float(n) ** window.dim * len(exceedance_set(grid, window, threshold)) / window.size
