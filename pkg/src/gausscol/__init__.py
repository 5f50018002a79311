"""Gauss and Radau collocation with free mesh points for bang-bang optimal control."""

from .adjoint import adjoint_residual, discrete_hamiltonian, map_costates, weierstrass_erdmann_check
from .nlpsolve import NlpResult, NlpSpec, SolverOptions, solve
from .ocp import BolzaProblem, Mesh
from .polybasis import RuleKind, build_scheme
from .transcribe import Method, extract_solution, initial_guess, transcribe

__all__ = [
    "BolzaProblem",
    "Mesh",
    "Method",
    "NlpResult",
    "NlpSpec",
    "RuleKind",
    "SolverOptions",
    "adjoint_residual",
    "build_scheme",
    "discrete_hamiltonian",
    "extract_solution",
    "initial_guess",
    "map_costates",
    "solve",
    "transcribe",
    "weierstrass_erdmann_check",
]

__version__ = "0.1.0"
