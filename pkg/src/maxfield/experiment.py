"""Seeded replication orchestration and the per-threshold comparison table.

Seed layout: for the ``i``-th unit threshold of the grid and component ``c``
(see ``COMPONENTS``) the estimator seed is
``seed_substream(master_seed, 16 * i + c)``. Inside an estimator, replication
or chunk ``r`` uses ``seed_substream(estimator_seed, r)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import MaxfieldError, NotGenerableError
from .estimators import (EstimateResult, _map, analytic_limit_mm, analytic_theta_mm,
                         approx_from_local, check_local_mixing, inclusion_exclusion_approx,
                         mc_local_prob, mc_prob_max_leq, newell_approx, runs_counts,
                         tail_intensity, theta_f1_ratio, window_n)
from .extremes import ClusterStats, cluster_stats
from .fields import FieldSpec, dependence_range, generate, threshold_v
from .lattice import OrderSpec, Point, Window, as_point, block_sizes, neighborhood_A
from .seeding import seed_substream

__all__ = ["ExperimentConfig", "ComparisonRow", "ComparisonError", "COMPONENTS",
           "aggregate", "run_comparison", "seed_substream", "grid_replications"]

COMPONENTS = {
    "empirical": 0,
    "obrien": 1,
    "newell": 2,
    "incl_excl": 3,
    "grids": 4,       # runs and cluster estimators share realizations
    "theta_f1": 5,
    "local_mixing": 6,
}
STREAMS_PER_THRESHOLD = 16


class ComparisonError(MaxfieldError):
    """A constituent estimator failed; message names the threshold and estimator."""


def stream_id(v_index: int, component: str) -> int:
    return STREAMS_PER_THRESHOLD * v_index + COMPONENTS[component]


@dataclass(frozen=True)
class ExperimentConfig:
    """One comparison experiment.

    ``k`` defaults to ``floor(sqrt(min N))``; ``m`` to the field's dependence
    range (at least 1); ``order`` to lexicographic; ``patch_replications``
    (patches for local-probability estimators) to ``20 * replications``.
    """

    field: FieldSpec
    N: Point
    v_grid: tuple[float, ...]
    replications: int
    master_seed: int
    k: int | None = None
    m: int | None = None
    order: OrderSpec | None = None
    patch_replications: int | None = None

    def __post_init__(self):
        N = as_point(self.N)
        d = self.field.dimension
        if len(N) != d:
            raise MaxfieldError(f"window shape {N} does not match field dimension {d}")
        object.__setattr__(self, "N", N)
        k = self.k if self.k is not None else max(1, math.isqrt(min(N)))
        if k < 1 or any(x < k for x in N):
            raise MaxfieldError(f"block count k={k} must satisfy 1 <= k <= min N = {min(N)}")
        object.__setattr__(self, "k", int(k))
        if self.m is None:
            dr = dependence_range(self.field)
            object.__setattr__(self, "m", None if dr is None else max(dr, 1))
        elif self.m < 0:
            raise MaxfieldError(f"m must be nonnegative, got {self.m}")
        if self.order is None:
            object.__setattr__(self, "order", OrderSpec.lex(d))
        elif self.order.dim != d:
            raise MaxfieldError("order dimension does not match the field")
        v = tuple(float(x) for x in self.v_grid)
        if not v:
            raise MaxfieldError("v_grid must not be empty")
        if any(not x > 0 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise MaxfieldError(f"v_grid must be positive and strictly increasing, got {v}")
        object.__setattr__(self, "v_grid", v)
        if self.replications < 1:
            raise MaxfieldError("replications must be >= 1")
        if self.patch_replications is None:
            object.__setattr__(self, "patch_replications", 20 * self.replications)
        elif self.patch_replications < 1:
            raise MaxfieldError("patch_replications must be >= 1")
        if not 0 <= int(self.master_seed) < 2**64:
            raise MaxfieldError("master_seed must be an unsigned 64-bit integer")

    @property
    def n(self) -> int:
        return window_n(self.N)

    @property
    def p(self) -> Point:
        return block_sizes(self.N, self.k)


@dataclass(frozen=True)
class ComparisonRow:
    v: float
    v_n: float
    empirical: EstimateResult
    obrien: EstimateResult
    theta_runs: EstimateResult
    theta_cluster: EstimateResult
    theta_f1: EstimateResult
    tail_intensity: float
    newell: EstimateResult | None = None
    incl_excl: EstimateResult | None = None
    analytic_limit: float | None = None
    theta_analytic: float | None = None
    local_mixing: EstimateResult | None = None
    cluster_detail: dict = dc_field(default_factory=dict, compare=True)

    def as_dict(self) -> dict:
        out = {}
        for name in ("v", "v_n", "empirical", "obrien", "newell", "incl_excl",
                     "analytic_limit", "theta_runs", "theta_cluster", "theta_f1",
                     "theta_analytic", "tail_intensity", "local_mixing", "cluster_detail"):
            val = getattr(self, name)
            out[name] = val.as_dict() if isinstance(val, EstimateResult) else val
        return out


def aggregate(partials: Sequence[EstimateResult]) -> EstimateResult:
    """Pool estimates of one quantity by count-weighted moment merging.

    Each partial contributes ``count * std_error**2 * count`` as its sum of
    squared deviations; undefined partials are skipped. Sums use
    ``math.fsum`` so the result does not depend on input order.
    """
    if not partials:
        raise MaxfieldError("cannot aggregate an empty list")
    parts = [p for p in partials if p.defined and p.count > 0]
    meta = partials[0].meta
    if not parts:
        return EstimateResult(None, 0.0, 0, meta, flag="no defined partials")
    C = sum(p.count for p in parts)
    mean = math.fsum(p.count * p.estimate for p in parts) / C
    m2 = math.fsum([(p.std_error * p.count) ** 2 for p in parts]
                   + [p.count * (p.estimate - mean) ** 2 for p in parts])
    flag = "single trial: standard error unavailable" if C <= 1 else None
    return EstimateResult(mean, 0.0 if C <= 1 else math.sqrt(m2) / C, C, meta, flag=flag)


def mean_of_values(values: Sequence[float | None], meta: str) -> EstimateResult:
    """Sample mean of the defined values, SE from the population variance."""
    vals = [x for x in values if x is not None]
    if not vals:
        return EstimateResult(None, 0.0, 0, meta, flag="undefined in every replication")
    arr = np.asarray(vals, dtype=float)
    se = 0.0 if len(arr) <= 1 else float(arr.std() / math.sqrt(len(arr)))
    return EstimateResult(float(arr.mean()), se, len(arr), meta,
                          flag="single trial: standard error unavailable" if len(arr) <= 1 else None)


def pooled_ratio(num: Sequence[int], den: Sequence[int], meta: str) -> EstimateResult:
    """``sum(num) / sum(den)`` across replications, ratio-estimator SE."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    D = den.sum()
    if D == 0:
        return EstimateResult(None, 0.0, 0, meta, flag="zero denominator")
    th = num.sum() / D
    R = len(den)
    resid = num - th * den
    se = 0.0 if R <= 1 else float(math.sqrt((resid ** 2).mean() / R) / den.mean())
    return EstimateResult(float(th), se, int(D), meta)


@dataclass(frozen=True)
class GridSummary:
    """Per-realization counts feeding the runs and cluster estimators."""

    runs_num: int
    runs_den: int
    stats: ClusterStats


def grid_replications(field: FieldSpec, N, p, m: int, order: OrderSpec, threshold: float,
                      R: int, seed: int, threads: int = 1) -> list[GridSummary]:
    """Simulate ``R`` windows and collect runs counts and cluster statistics."""
    W = Window.from_shape(N)
    d = len(W.lo)
    A_p = neighborhood_A(order, p)
    A_m = neighborhood_A(order, (m,) * d)
    margin = max(m, max(p))

    def one(r):
        g = generate(field, W, seed_substream(seed, r), margin=margin)
        num, S = runs_counts(g, W, A_p, p, threshold)
        return GridSummary(num, S, cluster_stats(g, W, m, A_m, threshold, order))

    return _map(one, range(R), threads)


def _guard(v: float, name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MaxfieldError as exc:
        raise ComparisonError(f"v={v}: estimator {name} failed: {exc}") from exc


def run_comparison(config: ExperimentConfig, threads: int = 1) -> list[ComparisonRow]:
    """One row per unit threshold: empirical, approximate and analytic quantities."""
    f = config.field
    if not f.generable:
        raise NotGenerableError("comparisons need a generable field; use estimate for external grids")
    d, n, N, p, k = f.dimension, config.n, config.N, config.p, config.k
    m, order = config.m, config.order
    R, RP = config.replications, config.patch_replications
    kern, tail = f.effective_kernel, f.tail
    rows = []
    for i, v in enumerate(config.v_grid):
        seed = lambda c: seed_substream(config.master_seed, stream_id(i, c))  # noqa: E731
        vn = _guard(v, "threshold", threshold_v, tail, n, d, v)
        emp = _guard(v, "empirical", mc_prob_max_leq, f, N, vn, R, seed("empirical"), threads)
        local = _guard(v, "obrien", mc_local_prob, f, neighborhood_A(order, p), vn, RP,
                       seed("obrien"), threads=threads)
        obrien = approx_from_local(n, d, local, f"obrien p={p}")
        newell = incl = mixing = None
        if m is not None:
            newell = _guard(v, "newell", newell_approx, f, m, vn, n, d, order, RP,
                            seed("newell"), threads=threads)
            incl = _guard(v, "incl_excl", inclusion_exclusion_approx, f, max(m, 1), vn, n, d,
                          RP, seed("incl_excl"), threads=threads)
            if all(m <= c for c in p):
                mixing = _guard(v, "local_mixing", check_local_mixing, f, m, N, k, order, vn,
                                RP, seed("local_mixing"), threads=threads)
        summaries = _guard(v, "grids", grid_replications, f, N, p, max(m or 1, 1), order, vn,
                           R, seed("grids"), threads)
        runs_vals = [s.runs_num / s.runs_den if s.runs_den else None for s in summaries]
        S = [s.stats.exceedances for s in summaries]
        theta_cl = pooled_ratio([s.stats.total for s in summaries], S, "Lambda/S_n")
        detail = {
            "theta_lambda1": pooled_ratio([s.stats.lambda1 for s in summaries], S,
                                          "Lambda1/S_n").estimate,
            "theta_lambda2": pooled_ratio([s.stats.lambda2 for s in summaries], S,
                                          "Lambda2/S_n").estimate,
            "mean_exceedances": float(np.mean(S)),
            "mean_clusters": float(np.mean([s.stats.total for s in summaries])),
        }
        f1 = _guard(v, "theta_f1", theta_f1_ratio, f, N, k, order, vn, RP, seed("theta_f1"),
                    threads=threads)
        try:
            th_an = analytic_theta_mm(kern, tail)
        except MaxfieldError as exc:
            raise ComparisonError(f"v={v}: estimator theta_analytic failed: {exc}") from exc
        rows.append(ComparisonRow(
            v=v, v_n=vn, empirical=emp, obrien=obrien,
            theta_runs=mean_of_values(runs_vals, f"runs p={p}"),
            theta_cluster=theta_cl, theta_f1=f1,
            tail_intensity=_guard(v, "tail_intensity", tail_intensity, tail,
                                  None if f.variant == "iid" else kern, n, d, v),
            newell=newell, incl_excl=incl,
            analytic_limit=analytic_limit_mm(kern, tail, v),
            theta_analytic=th_an, local_mixing=mixing, cluster_detail=detail))
    return rows

