"""Triple-integrator and regulator benchmarks, oracles, sweeps and the command line."""

from .cli import cli_main
from .oracles import AnalyticSolution, LqrOracle, analytic_solution, lqr_oracle
from .problems import LqrParameters, lqr_problem, triple_integrator_mesh, triple_integrator_problem
from .study import RunConfig, RunOutcome, error_metrics, run, sweep_N, sweep_fixed_switch

__all__ = [
    "AnalyticSolution",
    "LqrOracle",
    "LqrParameters",
    "RunConfig",
    "RunOutcome",
    "analytic_solution",
    "cli_main",
    "error_metrics",
    "lqr_oracle",
    "lqr_problem",
    "run",
    "sweep_N",
    "sweep_fixed_switch",
    "triple_integrator_mesh",
    "triple_integrator_problem",
]
