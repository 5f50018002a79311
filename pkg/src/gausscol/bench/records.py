"""CSV and JSON writers/readers for solves and sweeps (format version 1)."""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..nlpsolve import NlpResult
from .study import ERROR_COLUMNS, RELATIVE_ERROR_DEFINITION, RunConfig, RunOutcome, objective_table

__all__ = [
    "FORMAT_VERSION",
    "write_solution_csv",
    "write_summary",
    "write_rows",
    "write_sweep",
    "load_summary",
    "result_from_summary",
    "config_from_summary",
]

FORMAT_VERSION = 1


def _cell(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _header_lines(timestamp: bool, extra: dict | None = None) -> list[str]:
    lines = [f"# format_version={FORMAT_VERSION}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={v}")
    if timestamp:
        lines.append(f"# generated={datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def write_rows(path: Path, columns: list[str], rows, timestamp: bool = True, header: dict | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in _header_lines(timestamp, header):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            values = [r.get(c, "") for c in columns] if isinstance(r, dict) else r
            w.writerow([_cell(v) for v in values])
    return path


def solution_columns(outcome: RunOutcome) -> list[str]:
    p = outcome.nlp.problem
    cols = ["interval", "node_index", "tau", "T"]
    cols += [f"x{i + 1}" for i in range(p.n_x)]
    cols += [f"v{i + 1}" for i in range(p.n_v)]
    cols += [f"u{i + 1}" for i in range(p.n_u)]
    cols += [f"lambda_x{i + 1}" for i in range(p.n_x)]
    cols += [f"lambda_v{i + 1}" for i in range(p.n_v)]
    return cols + ["hamiltonian"]


def solution_rows(outcome: RunOutcome):
    sol, co, ham = outcome.solution, outcome.costates, outcome.hamiltonian
    colloc = list(outcome.nlp.scheme.colloc)
    for k, iv in enumerate(sol.intervals):
        for j in range(len(iv.taus)):
            h = ham.values[k][colloc.index(j)] if j in colloc else float("nan")
            yield [k + 1, j, iv.taus[j], iv.T[j], *iv.X[j], *iv.V[j], *iv.U[j],
                   *co.lambda_x[k][j], *co.lambda_v[k][j], h]


def write_solution_csv(outcome: RunOutcome, path: Path, timestamp: bool = True) -> Path:
    return write_rows(path, solution_columns(outcome), solution_rows(outcome), timestamp)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def summary_dict(outcome: RunOutcome, timestamp: bool = True) -> dict:
    res, nlp = outcome.result, outcome.nlp
    out = {
        "format_version": FORMAT_VERSION,
        "config": outcome.config.to_dict(),
        "status": res.status,
        "message": res.message,
        "iterations": res.iterations,
        "objective": res.f,
        "kkt": res.kkt,
        "wall_time": outcome.wall_time,
    }
    if outcome.solution is not None:
        sol = outcome.solution
        out.update(t0=sol.t0, tf=sol.tf, switch_times=sol.switch_times, mesh_points=sol.mesh_points, alpha=sol.alpha)
    out["residuals"] = outcome.residuals
    out["weierstrass_erdmann"] = outcome.weierstrass_erdmann
    if outcome.hamiltonian is not None:
        out["hamiltonian"] = {"min": float(outcome.hamiltonian.all_values.min()),
                              "max": float(outcome.hamiltonian.all_values.max()),
                              "spread": outcome.hamiltonian.spread}
    out["errors"] = outcome.metrics
    out["layouts"] = {"variables": nlp.vars.to_dict(), "constraints": nlp.cons.to_dict()}
    # enough to rebuild the solution without re-solving
    out["solver_state"] = {k: getattr(res, k) for k in ("z", "lambda_E", "lambda_I", "z_L", "z_U")}
    if timestamp:
        out["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return _jsonable(out)


def write_summary(outcome: RunOutcome, path: Path, timestamp: bool = True) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary_dict(outcome, timestamp), indent=2, sort_keys=True) + "\n")
    return path


def write_sweep(rows: list[dict], out_dir: Path, timestamp: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    header = {"relative_error": RELATIVE_ERROR_DEFINITION}
    paths = [write_rows(out_dir / "errors.csv", ERROR_COLUMNS, rows, timestamp, header)]
    cols, table = objective_table(rows)
    paths.append(write_rows(out_dir / "objective.csv", cols, table, timestamp))
    return paths


def load_summary(path: Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    data = json.loads(path.read_text())
    if data.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported summary format_version {data.get('format_version')!r}")
    return data


def config_from_summary(data: dict) -> RunConfig:
    return RunConfig(**data["config"])


def result_from_summary(data: dict) -> NlpResult:
    st = data["solver_state"]
    arr = lambda k: np.asarray(st[k], float)
    return NlpResult(
        status=data["status"], z=arr("z"), f=float(data["objective"]), lambda_E=arr("lambda_E"),
        lambda_I=arr("lambda_I"), z_L=arr("z_L"), z_U=arr("z_U"), kkt=data.get("kkt", {}),
        iterations=int(data.get("iterations", 0)), message=data.get("message", ""),
    )
