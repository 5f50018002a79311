"""Command-line entry point: ``gausscol-bench <command> [flags]``.

Config file (JSON object, every key optional, flags win)::

    problem        "triple-integrator" | "lqr"
    method         "lg" | "mlg" | "lgr" | "mlgr"
    methods        list of methods (sweep-n)
    segments       int
    nodes          int (solve, sweep-switch) or "a..b" / list (sweep-n, identities)
    switch_bounds  [[lo, hi], ...] one pair per interior mesh point
    fixed_switch   [T1, T2, ...]
    tol, max_iter, hessian ("bfgs" | "exact")
    which, grid    sweep-switch: "T1" | "T2" and a list of values
    out            output directory
    no_timestamp   bool
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..adjoint import InconsistentSolutionError
from ..polybasis import endpoint_integration_residuals, identity_residuals
from ..transcribe import Method
from . import records
from .oracles import analytic_solution
from .study import RunConfig, RunOutcome, build_instance, postprocess, run, sweep_N, sweep_fixed_switch

__all__ = ["cli_main", "main", "UsageError"]

IDENTITY_TOL = 1e-12
ORACLE_TOL = 1e-12
METHODS = [m.value for m in Method]


class UsageError(ValueError):
    pass


def parse_range(text) -> list[int]:
    """``"3..10"`` (inclusive), ``"3,5,7"``, a single int, or a list."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    s = str(text).strip()
    try:
        if ".." in s:
            a, b = s.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise UsageError(f"empty range {s!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in s.split(",") if v]
    except ValueError as exc:
        raise UsageError(f"bad integer range {s!r}") from exc


def parse_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in np.ravel(np.asarray(text, float))]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def parse_grid(text) -> list[float]:
    """``"lo:hi:count"`` (inclusive linspace) or a comma list."""
    if isinstance(text, str) and ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid must be lo:hi:count, got {text!r}")
        try:
            return list(np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
        except ValueError as exc:
            raise UsageError(f"bad grid {text!r}") from exc
    return parse_floats(text)


def _pairs(values: list[float]) -> list[list[float]]:
    if len(values) % 2:
        raise UsageError("--switch-bounds needs lo,hi pairs")
    return [[values[i], values[i + 1]] for i in range(0, len(values), 2)]


def _common(p: argparse.ArgumentParser, nodes_help: str) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("--problem", choices=["triple-integrator", "lqr"])
    p.add_argument("--segments", type=int, metavar="K")
    p.add_argument("--nodes", metavar="N", help=nodes_help)
    p.add_argument("--switch-bounds", metavar="LO,HI,...", help="bounds for each free interior mesh point")
    p.add_argument("--fixed-switch", metavar="T,...", help="fix the interior mesh points")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--hessian", choices=["bfgs", "exact"])
    p.add_argument("--out", type=Path, metavar="DIR")
    p.add_argument("--no-timestamp", action="store_true", default=None, help="omit generated-at lines from outputs")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gausscol-bench", description="Collocation benchmark runs and checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance and write solution.csv and summary.json")
    _common(p, "collocation points per interval")
    p.add_argument("--method", choices=METHODS)

    p = sub.add_parser("sweep-n", help="independent solves over methods and N; writes errors.csv")
    _common(p, "range such as 3..10")
    p.add_argument("--methods", help="comma list, default all four")

    p = sub.add_parser("sweep-switch", help="objective with one switch time fixed on a grid")
    _common(p, "collocation points per interval")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--which", choices=["T1", "T2"])
    p.add_argument("--grid", help="lo:hi:count or comma list")

    p = sub.add_parser("check", help="adjoint residuals and Hamiltonian jumps for a saved solve")
    p.add_argument("--from", dest="source", type=Path, required=True, help="directory or summary.json")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("identities", help="matrix identity and quadrature residuals")
    p.add_argument("--nodes", default="2..20", help="range such as 2..20")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _settings(args) -> dict:
    """Config-file values overlaid with explicitly given flags."""
    cfg = {}
    if getattr(args, "config", None) is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    for key, val in vars(args).items():
        if val is not None and key not in ("config", "command", "verbose"):
            cfg[key] = val
    return cfg


def _run_config(s: dict, nodes) -> RunConfig:
    base = RunConfig()
    sb = s.get("switch_bounds")
    if isinstance(sb, str):
        sb = _pairs(parse_floats(sb))
    fx = s.get("fixed_switch")
    if fx is not None:
        fx = parse_floats(fx)
    method = s.get("method", base.method)
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    return RunConfig(
        problem=s.get("problem", base.problem),
        method=method,
        segments=int(s.get("segments", base.segments)),
        nodes=int(nodes),
        switch_bounds=sb,
        fixed_switch=fx,
        tol=float(s.get("tol", base.tol)),
        max_iter=int(s.get("max_iter", base.max_iter)),
        hessian=s.get("hessian", base.hessian),
    )


def _out_dir(s: dict) -> Path:
    out = Path(s.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _single_nodes(s: dict) -> int:
    n = parse_range(s.get("nodes", RunConfig.nodes))
    if len(n) != 1:
        raise UsageError("--nodes must be a single integer here")
    return n[0]


def _print_outcome(o: RunOutcome) -> None:
    r = o.result
    print(f"status={r.status} iterations={r.iterations} objective={r.f:.12g} wall_time={o.wall_time:.3f}s")
    if o.solution is not None:
        print("switch_times=" + ",".join(f"{v:.10g}" for v in o.solution.switch_times))
    for k, v in o.metrics.items():
        if k.endswith("error"):
            print(f"{k}={v:.3e}")


def cmd_solve(s: dict) -> int:
    cfg = _run_config(s, _single_nodes(s))
    o = run(cfg)
    out, ts = _out_dir(s), not s.get("no_timestamp", False)
    records.write_solution_csv(o, out / "solution.csv", ts)
    records.write_summary(o, out / "summary.json", ts)
    _print_outcome(o)
    return 0 if o.ok else 1


def cmd_sweep_n(s: dict) -> int:
    methods = s.get("methods", METHODS)
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}")
    Ns = parse_range(s.get("nodes", "3..10"))
    base = _run_config({**s, "method": methods[0]}, Ns[0])
    rows = sweep_N(methods, Ns, base)
    paths = records.write_sweep(rows, _out_dir(s), not s.get("no_timestamp", False))
    for r in rows:
        obj = r["objective"]
        print(f"{r['method']:5s} N={r['N']:<3d} {r['status']:<12s} objective={obj if obj == '' else format(obj, '.10g')}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def cmd_sweep_switch(s: dict) -> int:
    which = s.get("which", "T1")
    if which not in ("T1", "T2"):
        raise UsageError("--which must be T1 or T2")
    grid = parse_grid(s.get("grid", "-0.9:-0.52:20" if which == "T1" else "-0.34:0.06:20"))
    cfg = _run_config(s, _single_nodes(s))
    rows = sweep_fixed_switch(which, grid, cfg.method, cfg.nodes, cfg)
    path = records.write_rows(_out_dir(s) / "curve.csv", ["which", "value", "method", "N", "status", "objective"],
                              rows, not s.get("no_timestamp", False))
    for r in rows:
        print(f"{which}={r['value']:.6f} {r['status']:<12s} objective={r['objective']}")
    print(f"wrote {path}")
    return 0


def cmd_check(s: dict) -> int:
    worst = max(analytic_solution().self_check().values())
    print(f"oracle self-check max residual={worst:.3e}")
    if worst > ORACLE_TOL:
        print("oracle self-check failed", file=sys.stderr)
        return 1
    try:
        data = records.load_summary(s["source"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load saved solution: {exc}") from exc
    cfg = records.config_from_summary(data)
    _, _, nlp = build_instance(cfg)
    res = records.result_from_summary(data)
    if res.z.shape != (nlp.vars.n,):
        print("saved solution does not match the rebuilt transcription", file=sys.stderr)
        return 1
    try:
        o = postprocess(RunOutcome(cfg, nlp, res, float(data.get("wall_time", 0.0))))
    except InconsistentSolutionError as exc:
        print(f"inconsistent solution: {exc}", file=sys.stderr)
        return 1
    print(f"status={res.status} objective={res.f:.12g}")
    for k, v in o.residuals.items():
        print(f"residual {k}={v:.3e}")
    print(f"hamiltonian spread={o.hamiltonian.spread:.3e}")
    for row in o.weierstrass_erdmann:
        print(f"mesh point {row['mesh_point']}: H jump={row['jump']:.3e} {'ok' if row['ok'] else 'JUMP'}")
    return 0


def cmd_identities(s: dict) -> int:
    worst = 0.0
    for n in parse_range(s.get("nodes", "2..20")):
        if n < 1:
            raise UsageError("node counts must be positive")
        res = {**identity_residuals(n), **endpoint_integration_residuals(n)}
        worst = max(worst, *res.values())
        print(f"N={n:<3d} " + " ".join(f"{k}={v:.2e}" for k, v in res.items()))
    ok = worst <= IDENTITY_TOL
    print(f"max residual={worst:.3e} ({'ok' if ok else 'FAIL'} at {IDENTITY_TOL:g})")
    return 0 if ok else 1


COMMANDS = {
    "solve": cmd_solve,
    "sweep-n": cmd_sweep_n,
    "sweep-switch": cmd_sweep_switch,
    "check": cmd_check,
    "identities": cmd_identities,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](_settings(args))
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # bad mesh or bound values surface here from the builders
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
