"""Built-in benchmark problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ocp import BolzaProblem, Mesh

__all__ = [
    "CONTROL_LIMIT",
    "OPTIMAL_SWITCH_TIMES",
    "OPTIMAL_FINAL_TIME",
    "TARGET_STATE",
    "triple_integrator_problem",
    "triple_integrator_mesh",
    "LqrParameters",
    "lqr_problem",
    "PROBLEMS",
]

CONTROL_LIMIT = 0.5
OPTIMAL_SWITCH_TIMES = (-5.0 / 7.0, -1.0 / 7.0)
OPTIMAL_FINAL_TIME = 7.0
TARGET_STATE = np.array([13.0 / 4.0, 9.0 / 4.0, 3.0 / 2.0])


def _ti_boundary(x0, v0, xf, vf, t0, tf):
    return np.concatenate([x0, v0, xf - TARGET_STATE[:2], vf - TARGET_STATE[2:]])


_TI_BOUNDARY_JAC = np.hstack([np.eye(6), np.zeros((6, 2))])


def triple_integrator_problem(tf_bounds=(1.0, 20.0)) -> BolzaProblem:
    """Minimum-time triple integrator: x1' = x2, x2' = v, v' = u, |u| <= 1/2.

    The state is split into the control-free part ``x = (x1, x2)`` and the
    control-explicit part ``v``.  Starts at rest at the origin and must reach
    (13/4, 9/4, 3/2).
    """
    return BolzaProblem(
        n_x=2,
        n_v=1,
        n_u=1,
        fx=lambda x, v: np.array([x[1], v[0]]),
        fv=lambda x, v, u: np.array([u[0]]),
        fx_jac=lambda x, v: np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
        fv_jac=lambda x, v, u: np.array([[0.0, 0.0, 0.0, 1.0]]),
        mayer=lambda x0, v0, xf, vf, t0, tf: tf,
        mayer_grad=lambda *a: np.array([0, 0, 0, 0, 0, 0, 0, 1.0]),
        boundary=_ti_boundary,
        boundary_jac=lambda *a: _TI_BOUNDARY_JAC,
        n_b=6,
        u_lower=[-CONTROL_LIMIT],
        u_upper=[CONTROL_LIMIT],
        t0=0.0,
        tf=tuple(tf_bounds),
        guess_start=[0.0, 0.0, 0.0],
        guess_end=TARGET_STATE.tolist(),
        name="triple-integrator",
    )


def triple_integrator_mesh(width: float = 0.2, fixed=None) -> Mesh:
    """Three intervals whose interior points float within +-width of the optimum.

    ``fixed`` maps 0/1 (first/second switch) to a value to pin that point.
    """
    pts = []
    for i, t in enumerate(OPTIMAL_SWITCH_TIMES):
        if fixed is not None and i in fixed:
            pts.append(float(fixed[i]))
        else:
            pts.append((t - width, t + width))
    return Mesh(tuple(pts))


@dataclass(frozen=True)
class LqrParameters:
    a: float = 0.5
    b: float = 1.0
    q: float = 1.0
    r: float = 0.5
    s_f: float = 2.0
    x0: float = 1.0
    tf: float = 2.0


def lqr_problem(prm: LqrParameters = LqrParameters()) -> BolzaProblem:
    """Scalar linear-quadratic regulator with fixed horizon and free end state.

    Cost ``s_f/2 x(tf)^2 + int q/2 x^2 + r/2 u^2``; dynamics ``x' = a x + b u``;
    ``x(0) = x0``.  Smooth and unconstrained, so every optimality row applies.
    """
    return BolzaProblem(
        n_x=0,
        n_v=1,
        n_u=1,
        fx=None,
        fv=lambda x, v, u: np.array([prm.a * v[0] + prm.b * u[0]]),
        fv_jac=lambda x, v, u: np.array([[prm.a, prm.b]]),
        lagrange=lambda x, v, u: 0.5 * (prm.q * v[0] ** 2 + prm.r * u[0] ** 2),
        lagrange_grad=lambda x, v, u: np.array([prm.q * v[0], prm.r * u[0]]),
        mayer=lambda x0, v0, xf, vf, t0, tf: 0.5 * prm.s_f * vf[0] ** 2,
        mayer_grad=lambda x0, v0, xf, vf, t0, tf: np.array([0.0, prm.s_f * vf[0], 0.0, 0.0]),
        boundary=lambda x0, v0, xf, vf, t0, tf: np.array([v0[0] - prm.x0]),
        boundary_jac=lambda *a: np.array([[1.0, 0.0, 0.0, 0.0]]),
        n_b=1,
        t0=0.0,
        tf=prm.tf,
        guess_start=[prm.x0],
        guess_end=[prm.x0],
        name="lqr",
    )


PROBLEMS = {"triple-integrator": triple_integrator_problem, "lqr": lqr_problem}
