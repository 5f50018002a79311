"""Single runs, error metrics and parameter sweeps on the built-in problems."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..adjoint import adjoint_residual, discrete_hamiltonian, map_costates, weierstrass_erdmann_check
from ..nlpsolve import NlpResult, SolverOptions, solve
from ..ocp import Mesh
from ..polybasis import RuleKind, build_scheme
from ..transcribe import Method, Solution, extract_solution, initial_guess, transcribe
from .oracles import AnalyticSolution, LqrOracle, analytic_solution, lqr_oracle
from .problems import OPTIMAL_SWITCH_TIMES, LqrParameters, lqr_problem, triple_integrator_mesh, triple_integrator_problem

__all__ = [
    "RunConfig",
    "RunOutcome",
    "build_instance",
    "run",
    "error_metrics",
    "sweep_N",
    "sweep_fixed_switch",
    "RELATIVE_ERROR_DEFINITION",
]

log = logging.getLogger(__name__)

RELATIVE_ERROR_DEFINITION = "max over nodes of |approx - exact| / (1 + max_T |exact|), max over components"


@dataclass
class RunConfig:
    problem: str = "triple-integrator"
    method: str = "mlg"
    segments: int = 3
    nodes: int = 3
    # (lo, hi) pairs for free interior mesh points; None selects the problem default
    switch_bounds: list | None = None
    # fixed interior mesh points; overrides switch_bounds
    fixed_switch: list | None = None
    tol: float = 1e-8
    max_iter: int = 500
    hessian: str = "bfgs"
    diagnostic: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunOutcome:
    config: RunConfig
    nlp: object
    result: NlpResult
    wall_time: float
    solution: Solution | None = None
    costates: object = None
    hamiltonian: object = None
    residuals: dict = field(default_factory=dict)
    weierstrass_erdmann: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.result.success


def _mesh_for(cfg: RunConfig) -> Mesh:
    K = cfg.segments
    if cfg.fixed_switch is not None:
        if len(cfg.fixed_switch) != K - 1:
            raise ValueError(f"need {K - 1} fixed mesh points, got {len(cfg.fixed_switch)}")
        return Mesh(tuple(float(v) for v in cfg.fixed_switch))
    if cfg.switch_bounds is not None:
        if len(cfg.switch_bounds) != K - 1:
            raise ValueError(f"need {K - 1} switch-bound pairs, got {len(cfg.switch_bounds)}")
        return Mesh(tuple((float(a), float(b)) for a, b in cfg.switch_bounds))
    if cfg.problem == "triple-integrator" and K == 3:
        return triple_integrator_mesh()
    return Mesh.uniform(K)


def build_instance(cfg: RunConfig):
    """Problem, mesh and transcribed NLP for a run configuration."""
    if cfg.problem == "triple-integrator":
        problem = triple_integrator_problem()
    elif cfg.problem == "lqr":
        problem = lqr_problem()
    else:
        raise ValueError(f"unknown problem {cfg.problem!r}")
    method = Method(cfg.method)
    mesh = _mesh_for(cfg)
    scheme = build_scheme(cfg.nodes, method.family)
    return problem, mesh, transcribe(problem, mesh, scheme, method, diagnostic=cfg.diagnostic)


def oracle_for(name: str):
    if name == "triple-integrator":
        return analytic_solution()
    if name == "lqr":
        return lqr_oracle(LqrParameters())
    return None


def postprocess(outcome: RunOutcome) -> RunOutcome:
    """Fill costates, Hamiltonian, residuals and oracle errors for a finished solve."""
    cfg, nlp, res = outcome.config, outcome.nlp, outcome.result
    sol = extract_solution(nlp, res, allow_failed=True)
    outcome.solution = sol
    outcome.costates = map_costates(sol)
    outcome.hamiltonian = discrete_hamiltonian(sol, outcome.costates)
    if sol.K > 1:
        outcome.weierstrass_erdmann = weierstrass_erdmann_check(outcome.hamiltonian)
    if nlp.method.family is RuleKind.LG:
        outcome.residuals = adjoint_residual(sol, outcome.costates)
    oracle = oracle_for(cfg.problem)
    if oracle is not None:
        outcome.metrics = error_metrics(sol, oracle, outcome.costates)
    return outcome


def run(cfg: RunConfig, start=None) -> RunOutcome:
    _, _, nlp = build_instance(cfg)
    z0 = initial_guess(nlp) if start is None else np.asarray(start, float)
    opts = SolverOptions(tol=cfg.tol, max_iter=cfg.max_iter, hessian=cfg.hessian)
    t = time.perf_counter()
    res = solve(nlp.to_spec(), z0, opts)
    wall = time.perf_counter() - t
    log.info("%s N=%d: %s in %d iterations, f=%.10g", cfg.method, cfg.nodes, res.status, res.iterations, res.f)
    return postprocess(RunOutcome(cfg, nlp, res, wall))


def _reference(oracle, T, t, which):
    if isinstance(oracle, AnalyticSolution):
        return oracle.state(T) if which == "state" else oracle.costate(T)
    vals = oracle.state(t) if which == "state" else oracle.costate(t)
    return vals[:, None]


def _scales(oracle, which):
    if isinstance(oracle, AnalyticSolution):
        return 1.0 + oracle.max_abs(which)
    t = np.linspace(0.0, oracle.prm.tf, 4001)
    vals = oracle.state(t) if which == "state" else oracle.costate(t)
    return 1.0 + np.array([np.max(np.abs(vals))])


def error_metrics(solution: Solution, oracle, costates=None) -> dict:
    """Max relative state and costate errors against an oracle.

    Reference values are evaluated at the realized normalized node times
    (analytic solution) or physical times (regulator).
    """
    st_scale = _scales(oracle, "state")
    out = {"status": solution.status, "objective": solution.objective, "tf": solution.tf}
    out.update({f"T{i + 1}": float(v) for i, v in enumerate(solution.switch_times)})
    err = 0.0
    for iv in solution.intervals:
        approx = np.hstack([iv.X, iv.V])
        exact = _reference(oracle, iv.T, iv.t, "state")
        err = max(err, float(np.max(np.abs(approx - exact) / st_scale)))
    out["state_error"] = err
    if costates is not None:
        co_scale = _scales(oracle, "costate")
        err = 0.0
        for k, iv in enumerate(solution.intervals):
            exact = _reference(oracle, iv.T, iv.t, "costate")
            err = max(err, float(np.max(np.abs(costates.stacked(k) - exact) / co_scale)))
        out["costate_error"] = err
    return out


ERROR_COLUMNS = [
    "method", "N", "status", "iterations", "objective", "tf", "T1", "T2",
    "state_error", "costate_error", "hamiltonian_spread", "wall_time",
]


def _row(method, N, outcome: RunOutcome | None, exc: Exception | None = None) -> dict:
    row = {c: "" for c in ERROR_COLUMNS}
    row.update(method=method, N=N)
    if outcome is None:
        row["status"] = f"error: {exc}"
        return row
    m = outcome.metrics
    row.update(
        status=outcome.result.status,
        iterations=outcome.result.iterations,
        objective=outcome.result.f,
        tf=m.get("tf", ""),
        T1=m.get("T1", ""),
        T2=m.get("T2", ""),
        state_error=m.get("state_error", ""),
        costate_error=m.get("costate_error", ""),
        hamiltonian_spread=outcome.hamiltonian.spread if outcome.hamiltonian is not None else "",
        wall_time=outcome.wall_time,
    )
    return row


def sweep_N(methods=("lg", "mlg", "lgr", "mlgr"), N_range=range(3, 11), base: RunConfig | None = None) -> list[dict]:
    """One independent solve per (method, N) from the default guess.

    Failures are recorded in the row and the sweep carries on.
    """
    base = RunConfig() if base is None else base
    rows = []
    for method in methods:
        for N in N_range:
            cfg = RunConfig(**{**base.to_dict(), "method": method, "nodes": int(N)})
            try:
                rows.append(_row(method, N, run(cfg)))
            except Exception as exc:  # keep sweeping; the row carries the message
                log.warning("%s N=%d failed: %s", method, N, exc)
                rows.append(_row(method, N, None, exc))
    return rows


def objective_table(rows: list[dict]) -> tuple[list[str], list[list]]:
    """Objective by N (rows) and method (columns)."""
    methods = list(dict.fromkeys(r["method"] for r in rows))
    Ns = sorted({r["N"] for r in rows})
    lookup = {(r["method"], r["N"]): r["objective"] for r in rows}
    return ["N", *methods], [[N, *[lookup.get((m, N), "") for m in methods]] for N in Ns]


def sweep_fixed_switch(which: str, grid, method: str = "lg", nodes: int = 3, base: RunConfig | None = None) -> list[dict]:
    """Objective with one switch time pinned at each grid value and the other at its optimum."""
    if which not in ("T1", "T2"):
        raise ValueError("which must be 'T1' or 'T2'")
    base = RunConfig() if base is None else base
    slot = 0 if which == "T1" else 1
    rows = []
    for value in grid:
        fixed = list(OPTIMAL_SWITCH_TIMES)
        fixed[slot] = float(value)
        row = {"which": which, "value": float(value), "method": method, "N": nodes}
        if not (-1.0 < fixed[0] < fixed[1] < 1.0):
            row.update(status="invalid mesh ordering", objective="")
            rows.append(row)
            continue
        cfg = RunConfig(**{**base.to_dict(), "method": method, "nodes": nodes, "fixed_switch": fixed})
        try:
            out = run(cfg)
            row.update(status=out.result.status, objective=out.result.f)
        except Exception as exc:
            row.update(status=f"error: {exc}", objective="")
        rows.append(row)
    return rows
