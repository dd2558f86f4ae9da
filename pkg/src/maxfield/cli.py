"""Command-line front end.

Exit codes: 0 success, 2 usage, configuration or data error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass

from .errors import MaxfieldError
from .estimators import (analytic_limit_mm, analytic_tail_mm, analytic_theta_mm,
                         runs_counts, window_n)
from .experiment import ExperimentConfig, run_comparison
from .extremes import classify_small, clusters, count_lambda1, count_lambda2, exceedance_set
from .fields import FieldSpec, GridRealization, KernelSpec, TailSpec, dependence_range, generate, threshold_v
from .gridfile import read_grid, write_grid
from .lattice import OrderSpec, Window, block_sizes, neighborhood_A

EXIT_OK, EXIT_DATA, EXIT_IO = 0, 2, 3

TOP_KEYS = {"field", "N", "v_grid", "replications", "patch_replications", "master_seed",
            "k", "m", "order", "margin", "output"}
FIELD_KEYS = {"variant", "dimension", "alpha", "balance", "scale", "kernel"}
ORDER_KEYS = {"permutation", "signs"}
OUTPUT_KEYS = {"format", "path", "verbosity"}

COMPARE_COLUMNS = ["v", "v_n", "empirical", "empirical_se", "obrien", "newell", "incl_excl",
                   "analytic_limit", "theta_runs", "theta_cluster", "theta_f1",
                   "theta_analytic", "tail_intensity", "local_mixing"]
ESTIMATE_COLUMNS = ["v", "threshold", "exceedances", "clusters", "small_clusters",
                    "large_clusters", "lambda1", "lambda2", "theta_runs", "theta_cluster",
                    "theta_lambda1", "theta_lambda2", "flag"]
UNDEFINED = "undefined"


class ConfigError(MaxfieldError):
    """Invalid configuration document or command-line value."""


# ---------------------------------------------------------------- config

def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _int(val, name: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{name} must be an integer, got {val!r}")
    if (lo is not None and val < lo) or (hi is not None and val > hi):
        raise ConfigError(f"{name}={val} out of range")
    return val


def _num(val, name: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(f"{name} must be a finite number, got {val!r}")
    return float(val)


def validate_config(doc: dict) -> dict:
    """Check keys and numeric ranges of a config document."""
    _reject_unknown(doc, TOP_KEYS, "config")
    if "field" not in doc:
        raise ConfigError("config needs a 'field' section")
    fld = doc["field"]
    _reject_unknown(fld, FIELD_KEYS, "field")
    if fld.get("variant") not in ("iid", "moving_max", "external"):
        raise ConfigError("field.variant must be one of iid, moving_max, external")
    for key in ("alpha", "balance", "scale"):
        if key in fld:
            _num(fld[key], f"field.{key}")
    if "dimension" in fld:
        _int(fld["dimension"], "field.dimension", 1)
    if "kernel" in fld and not isinstance(fld["kernel"], dict):
        raise ConfigError("field.kernel must map 'i,j,...' offsets to coefficients")
    if "N" in doc:
        if not isinstance(doc["N"], list) or not doc["N"]:
            raise ConfigError("N must be a nonempty list of positive integers")
        for x in doc["N"]:
            _int(x, "N entry", 1)
    if "v_grid" in doc:
        if not isinstance(doc["v_grid"], list):
            raise ConfigError("v_grid must be a list of numbers")
        for x in doc["v_grid"]:
            _num(x, "v_grid entry")
    for key, lo in (("replications", 1), ("patch_replications", 1), ("k", 1), ("m", 0),
                    ("margin", 0)):
        if key in doc and doc[key] is not None:
            _int(doc[key], key, lo)
    if "master_seed" in doc:
        _int(doc["master_seed"], "master_seed", 0, 2**64 - 1)
    if "order" in doc:
        _reject_unknown(doc["order"], ORDER_KEYS, "order")
    if "output" in doc:
        out = doc["output"]
        _reject_unknown(out, OUTPUT_KEYS, "output")
        if "format" in out and out["format"] not in ("csv", "json"):
            raise ConfigError("output.format must be csv or json")
        if "verbosity" in out:
            _int(out["verbosity"], "output.verbosity", 0)
    return doc


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(doc)


def parse_offset(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad kernel offset {text!r}") from exc


def build_kernel(entries: dict) -> KernelSpec:
    return KernelSpec({parse_offset(k): _num(v, f"kernel[{k}]") for k, v in entries.items()})


def build_field(doc: dict) -> FieldSpec:
    fld = doc["field"]
    variant = fld["variant"]
    if variant == "external":
        d = fld.get("dimension", len(doc["N"]) if "N" in doc else None)
        if d is None:
            raise ConfigError("external field needs field.dimension or N")
        return FieldSpec.external(d)
    if "alpha" not in fld:
        raise ConfigError(f"{variant} field needs field.alpha")
    tail = TailSpec(fld["alpha"], fld.get("balance", 1.0), fld.get("scale", 1.0))
    if variant == "iid":
        d = fld.get("dimension", len(doc["N"]) if "N" in doc else None)
        if d is None:
            raise ConfigError("iid field needs field.dimension or N")
        return FieldSpec.iid(tail, d)
    if "kernel" not in fld:
        raise ConfigError("moving_max field needs field.kernel")
    spec = FieldSpec.moving_max(build_kernel(fld["kernel"]), tail)
    if "dimension" in fld and fld["dimension"] != spec.dimension:
        raise ConfigError("field.dimension does not match the kernel offsets")
    return spec


def build_order(doc: dict, d: int) -> OrderSpec:
    if "order" not in doc:
        return OrderSpec.lex(d)
    o = doc["order"]
    return OrderSpec(tuple(o.get("permutation", range(d))), tuple(o.get("signs", (1,) * d)))


def build_experiment(doc: dict, seed: int | None = None) -> ExperimentConfig:
    f = build_field(doc)
    for key in ("N", "v_grid"):
        if key not in doc:
            raise ConfigError(f"config needs {key!r}")
    return ExperimentConfig(
        field=f, N=tuple(doc["N"]), v_grid=tuple(doc["v_grid"]),
        replications=doc.get("replications", 200),
        master_seed=doc.get("master_seed", 0) if seed is None else seed,
        k=doc.get("k"), m=doc.get("m"), order=build_order(doc, f.dimension),
        patch_replications=doc.get("patch_replications"))


def effective_config(cfg: ExperimentConfig) -> dict:
    f = cfg.field
    field = {"variant": f.variant, "dimension": f.dimension}
    if f.tail is not None:
        field.update(alpha=f.tail.alpha, balance=f.tail.balance, scale=f.tail.scale)
    if f.variant == "moving_max":
        field["kernel"] = {",".join(map(str, j)): c for j, c in
                           zip(f.kernel.offsets.tolist(), f.kernel.values.tolist())}
    return {"field": field, "N": list(cfg.N), "n": cfg.n, "k": cfg.k, "p": list(cfg.p),
            "m": cfg.m, "order": {"permutation": list(cfg.order.permutation),
                                  "signs": list(cfg.order.signs)},
            "v_grid": list(cfg.v_grid), "replications": cfg.replications,
            "patch_replications": cfg.patch_replications, "master_seed": cfg.master_seed}


# ---------------------------------------------------------------- output

def _fmt(val) -> str:
    if val is None:
        return ""
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _est(res) -> str:
    if res is None:
        return ""
    return UNDEFINED if res.estimate is None else repr(float(res.estimate))


def to_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row.get(c, "") for c in columns])
    return buf.getvalue()


def _write(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def compare_table(rows) -> list[dict]:
    out = []
    for r in rows:
        out.append({
            "v": _fmt(r.v), "v_n": _fmt(r.v_n), "empirical": _est(r.empirical),
            "empirical_se": _fmt(r.empirical.std_error), "obrien": _est(r.obrien),
            "newell": _est(r.newell), "incl_excl": _est(r.incl_excl),
            "analytic_limit": _fmt(r.analytic_limit), "theta_runs": _est(r.theta_runs),
            "theta_cluster": _est(r.theta_cluster), "theta_f1": _est(r.theta_f1),
            "theta_analytic": _fmt(r.theta_analytic), "tail_intensity": _fmt(r.tail_intensity),
            "local_mixing": _est(r.local_mixing)})
    return out


# ---------------------------------------------------------------- commands

@dataclass
class Context:
    doc: dict | None
    seed: int | None
    threads: int
    out: str | None
    fmt: str


def _require_doc(ctx: Context) -> dict:
    if ctx.doc is None:
        raise ConfigError("this command needs --config")
    return ctx.doc


def cmd_simulate(ctx: Context) -> int:
    doc = _require_doc(ctx)
    f = build_field(doc)
    if not f.generable:
        raise ConfigError("external field cannot be simulated")
    if "N" not in doc:
        raise ConfigError("config needs 'N'")
    if ctx.out is None:
        raise ConfigError("simulate needs --out (or output.path)")
    seed = doc.get("master_seed", 0) if ctx.seed is None else ctx.seed
    W = Window.from_shape(doc["N"])
    if W.dim != f.dimension:
        raise ConfigError("N does not match the field dimension")
    margin = doc.get("margin")
    if margin is None:
        m = max(dependence_range(f), 1)
        margin = max(max(block_sizes(W.shape, max(1, math.isqrt(min(W.shape))))), m)
    g = generate(f, W, seed, margin=margin)
    write_grid(g, ctx.out)
    sys.stdout.write(f"seed={seed}\n")
    return EXIT_OK


def estimate_rows(grid: GridRealization, field: FieldSpec, v_grid, k: int, m: int,
                  order: OrderSpec) -> list[dict]:
    """Runs and cluster estimates on one grid for each threshold."""
    W = grid.window
    d = W.dim
    n = window_n(W.shape)
    p = block_sizes(W.shape, k)
    A_p, A_m = neighborhood_A(order, p), neighborhood_A(order, (m,) * d)
    short = max(0, m - grid.margin)
    try:
        interior = W.shrink(short)
    except MaxfieldError:
        interior = None
    rows = []
    for v in v_grid:
        thr = threshold_v(field.tail, n, d, v) if field.generable else float(v)
        J = exceedance_set(grid, W, thr)
        S = len(J)
        part = clusters(J, m, order)
        small, large = classify_small(part, m)
        runs_ok = all(s > 2 * c for s, c in zip(W.shape, p))
        num = runs_counts(grid, W, A_p, p, thr)[0] if runs_ok else None
        l1 = l2 = None
        S_int = 0
        if interior is not None:
            l1 = count_lambda1(grid, interior, A_m, thr)
            l2 = count_lambda2(grid, interior, m, thr)
            S_int = len(exceedance_set(grid, interior, thr))
        ratio = lambda a, b: UNDEFINED if (a is None or b == 0) else repr(a / b)  # noqa: E731
        rows.append({
            "v": repr(float(v)), "threshold": repr(float(thr)), "exceedances": str(S),
            "clusters": str(len(part)), "small_clusters": str(len(small)),
            "large_clusters": str(len(large)), "lambda1": _fmt(l1), "lambda2": _fmt(l2),
            "theta_runs": ratio(num, S), "theta_cluster": ratio(len(part), S),
            "theta_lambda1": ratio(l1, S_int), "theta_lambda2": ratio(l2, S_int),
            "flag": "; ".join(f for f in (
                UNDEFINED if S == 0 else "",
                "interior only" if short else "",
                "" if runs_ok else "window too small for runs with p=" + "x".join(map(str, p)))
                if f)})
    return rows


def cmd_estimate(ctx: Context, grid_path: str | None) -> int:
    doc = _require_doc(ctx)
    f = build_field(doc)
    if "v_grid" not in doc or not doc["v_grid"]:
        raise ConfigError("config needs a nonempty 'v_grid'")
    if grid_path is not None:
        if f.generable:
            raise ConfigError("--grid requires field.variant 'external'")
        grid = read_grid(grid_path)
        if grid.dim != f.dimension:
            raise ConfigError(f"grid is {grid.dim}-dimensional, field is {f.dimension}")
        if "N" in doc and tuple(doc["N"]) != grid.window.shape:
            raise ConfigError(f"grid shape {grid.window.shape} does not match N={doc['N']}")
    elif not f.generable:
        raise ConfigError("external field needs --grid")
    shape = grid.window.shape if grid_path is not None else tuple(doc.get("N", ()))
    if not shape:
        raise ConfigError("config needs 'N'")
    k = doc.get("k") or max(1, math.isqrt(min(shape)))
    dr = dependence_range(f)
    m = doc.get("m") if doc.get("m") is not None else max(dr if dr is not None else 1, 1)
    if m < 1:
        raise ConfigError("cluster range m must be >= 1")
    order = build_order(doc, f.dimension)
    seed = doc.get("master_seed", 0) if ctx.seed is None else ctx.seed
    if grid_path is None:
        p = block_sizes(shape, k)
        grid = generate(f, Window.from_shape(shape), seed, margin=max(max(p), m))
    rows = estimate_rows(grid, f, doc["v_grid"], k, m, order)
    if ctx.fmt == "json":
        payload = {"config": {"config": doc, "k": k, "m": m, "seed": None if grid_path else seed,
                              "grid": grid_path},
                   "rows": [{c: r[c] for c in ESTIMATE_COLUMNS} for r in rows]}
        _write(json.dumps(payload, indent=2) + "\n", ctx.out)
    else:
        _write(to_csv(ESTIMATE_COLUMNS, rows), ctx.out)
    return EXIT_OK


def cmd_compare(ctx: Context) -> int:
    cfg = build_experiment(_require_doc(ctx), ctx.seed)
    rows = run_comparison(cfg, threads=ctx.threads)
    if ctx.fmt == "json":
        # threads never change results, so they stay out of the provenance record
        payload = {"config": effective_config(cfg),
                   "columns": COMPARE_COLUMNS, "rows": [r.as_dict() for r in rows]}
        _write(json.dumps(payload, indent=2) + "\n", ctx.out)
    else:
        _write(to_csv(COMPARE_COLUMNS, compare_table(rows)), ctx.out)
    return EXIT_OK


def parse_kernel_args(items: list[str]) -> KernelSpec:
    entries = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"kernel entry must look like 'i,j=c', got {item!r}")
        off, val = item.split("=", 1)
        try:
            entries[parse_offset(off.strip())] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad kernel coefficient in {item!r}") from exc
    return KernelSpec(entries)


def _float_list(items) -> list[float]:
    out = []
    for item in items:
        for s in str(item).split(","):
            if s.strip():
                try:
                    out.append(float(s))
                except ValueError as exc:
                    raise ConfigError(f"bad number {s!r}") from exc
    return out


def cmd_analytic(ctx: Context, args) -> int:
    doc = ctx.doc or {}
    fld = doc.get("field", {})
    if args.kernel:
        kernel = parse_kernel_args(args.kernel)
    elif "kernel" in fld:
        kernel = build_kernel(fld["kernel"])
    elif fld.get("variant") == "iid":
        kernel = KernelSpec.identity(fld.get("dimension", len(doc.get("N", [0]))))
    else:
        raise ConfigError("analytic needs --kernel entries or a config kernel")
    alpha = args.alpha if args.alpha is not None else fld.get("alpha")
    if alpha is None:
        raise ConfigError("analytic needs --alpha")
    tail = TailSpec(alpha, args.balance if args.balance is not None else fld.get("balance", 1.0),
                    args.scale if args.scale is not None else fld.get("scale", 1.0))
    vs = _float_list(args.v) if args.v else [float(x) for x in doc.get("v_grid", [1.0])]
    if any(not x > 0 for x in vs):
        raise ConfigError("thresholds must be positive")
    tail_c = analytic_tail_mm(kernel, tail)
    theta = analytic_theta_mm(kernel, tail)
    rows = [{"v": repr(v), "tail": repr(tail_c), "theta": repr(theta),
             "limit": repr(analytic_limit_mm(kernel, tail, v))} for v in vs]
    cols = ["v", "tail", "theta", "limit"]
    if ctx.fmt == "json":
        _write(json.dumps({"config": {"kernel": {",".join(map(str, j)): c for j, c in
                                                 zip(kernel.offsets.tolist(), kernel.values.tolist())},
                                      "alpha": tail.alpha, "balance": tail.balance,
                                      "scale": tail.scale},
                           "rows": rows}, indent=2) + "\n", ctx.out)
    else:
        _write(to_csv(cols, rows), ctx.out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--seed", type=int, help="master seed override (u64)")
    g.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    g.add_argument("--out", help="output path (stdout when omitted)")
    g.add_argument("--format", choices=("csv", "json"), help="output format")
    return g


def build_parser() -> argparse.ArgumentParser:
    g = _global_flags()
    ap = argparse.ArgumentParser(prog="maxfield", parents=[g],
                                 description="Extremes of stationary random fields.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[g], help="simulate one realization to a grid file")
    est = sub.add_parser("estimate", parents=[g], help="runs and cluster estimates on a grid")
    est.add_argument("--grid", default=None, help="grid file (.csv text, otherwise binary)")
    sub.add_parser("compare", parents=[g], help="comparison table over the v grid")
    an = sub.add_parser("analytic", parents=[g], help="closed-form moving-maximum quantities")
    an.add_argument("--kernel", action="append", default=[], help="offset=coefficient, e.g. 0,0=1.0")
    an.add_argument("--alpha", type=float, default=None)
    an.add_argument("--balance", type=float, default=None)
    an.add_argument("--scale", type=float, default=None)
    an.add_argument("--v", action="append", default=[], help="unit thresholds, comma separated")
    return ap


def resolve_threads(flag: int | None) -> int:
    if flag is None:
        env = os.environ.get("MAXFIELD_THREADS")
        if env is None or env.strip() == "":
            return 1
        try:
            flag = int(env)
        except ValueError as exc:
            raise ConfigError(f"MAXFIELD_THREADS must be an integer, got {env!r}") from exc
    if flag < 0:
        raise ConfigError("threads must be >= 0")
    return flag if flag > 0 else (os.cpu_count() or 1)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config) if getattr(args, "config", None) else None
        seed = getattr(args, "seed", None)
        if seed is not None and not 0 <= seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        out_cfg = (doc or {}).get("output", {})
        out = getattr(args, "out", None) or out_cfg.get("path")
        fmt = getattr(args, "format", None) or out_cfg.get("format") or (
            "json" if out and out.endswith(".json") else "csv")
        ctx = Context(doc, seed, resolve_threads(getattr(args, "threads", None)), out, fmt)
        if args.command == "simulate":
            return cmd_simulate(ctx)
        if args.command == "estimate":
            return cmd_estimate(ctx, args.grid)
        if args.command == "compare":
            return cmd_compare(ctx)
        return cmd_analytic(ctx, args)
    except (MaxfieldError, TypeError, ValueError) as exc:
        print(f"maxfield: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"maxfield: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
