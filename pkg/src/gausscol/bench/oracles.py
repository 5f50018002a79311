"""Reference solutions used to score the collocation methods."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp

from .problems import CONTROL_LIMIT, OPTIMAL_FINAL_TIME, OPTIMAL_SWITCH_TIMES, LqrParameters

__all__ = ["AnalyticSolution", "analytic_solution", "LqrOracle", "lqr_oracle"]


@dataclass(frozen=True)
class AnalyticSolution:
    """Bang-bang triple-integrator optimum as piecewise polynomials in physical time.

    ``state_arcs[a]`` and ``costate_arcs[a]`` hold ``(x1, x2, v)`` and
    ``(lam_x1, lam_x2, lam_v)`` polynomials in ``t`` on arc ``a``.
    """

    switch_times: tuple  # normalized T
    tf: float
    u_max: float
    controls: tuple
    breaks: np.ndarray  # physical arc boundaries, length 4
    state_arcs: tuple
    costate_arcs: tuple

    def to_time(self, T):
        return 0.5 * self.tf * (np.asarray(T, float) + 1.0)

    def _arc(self, t):
        return np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.controls) - 1)

    def _eval(self, arcs, T):
        t = np.atleast_1d(self.to_time(T))
        a = self._arc(t)
        out = np.empty((len(t), 3))
        for q in range(len(self.controls)):
            sel = a == q
            if np.any(sel):
                out[sel] = np.column_stack([poly(t[sel]) for poly in arcs[q]])
        return out

    def state(self, T) -> np.ndarray:
        return self._eval(self.state_arcs, T)

    def costate(self, T) -> np.ndarray:
        return self._eval(self.costate_arcs, T)

    def control(self, T) -> np.ndarray:
        t = np.atleast_1d(self.to_time(T))
        return np.asarray(self.controls)[self._arc(t)]

    def hamiltonian(self, T) -> np.ndarray:
        y, lam, u = self.state(T), self.costate(T), self.control(T)
        return lam[:, 0] * y[:, 1] + lam[:, 1] * y[:, 2] + lam[:, 2] * u

    def max_abs(self, which: str, samples: int = 4001) -> np.ndarray:
        T = np.linspace(-1, 1, samples)
        vals = self.state(T) if which == "state" else self.costate(T)
        return np.max(np.abs(vals), axis=0)

    def self_check(self, samples: int = 1000) -> dict:
        """Largest ODE, adjoint, boundary, switching and Hamiltonian residuals."""
        out = {"ode": 0.0, "adjoint": 0.0}
        for a in range(len(self.controls)):
            t = np.linspace(self.breaks[a], self.breaks[a + 1], samples)
            x1, x2, v = self.state_arcs[a]
            l1, l2, lv = self.costate_arcs[a]
            r = [x1.deriv()(t) - x2(t), x2.deriv()(t) - v(t), v.deriv()(t) - self.controls[a]]
            out["ode"] = max(out["ode"], max(np.max(np.abs(q)) for q in r))
            r = [l1.deriv()(t), l2.deriv()(t) + l1(t), lv.deriv()(t) + l2(t)]
            out["adjoint"] = max(out["adjoint"], max(np.max(np.abs(q)) for q in r))
        ends = self.state(np.array([-1.0, 1.0]))
        out["boundary"] = float(np.max(np.abs(ends - np.array([[0, 0, 0], [13 / 4, 9 / 4, 3 / 2]]))))
        jumps = [np.max(np.abs(self.state_arcs[a][i](self.breaks[a + 1]) - self.state_arcs[a + 1][i](self.breaks[a + 1])))
                 for a in range(len(self.controls) - 1) for i in range(3)]
        out["continuity"] = float(max(jumps))
        out["switching"] = float(np.max(np.abs(self.costate(np.asarray(self.switch_times))[:, 2])))
        out["hamiltonian"] = float(np.max(np.abs(self.hamiltonian(np.linspace(-1, 1, samples)) + 1.0)))
        return out


def analytic_solution() -> AnalyticSolution:
    """Integrate the three bang arcs exactly and fit the costate by a linear solve.

    Costate: ``lam_x1 = c1``, ``lam_x2 = c2 - c1 t``, ``lam_v = c3 - c2 t + c1 t^2/2``
    with ``lam_v`` zero at both switches and ``H(0) = lam_v(0) u(0) = -1``.
    """
    tf = OPTIMAL_FINAL_TIME
    u = (CONTROL_LIMIT, -CONTROL_LIMIT, CONTROL_LIMIT)
    ts = [0.5 * tf * (T + 1.0) for T in OPTIMAL_SWITCH_TIMES]
    breaks = np.array([0.0, *ts, tf])
    arcs = []
    y0 = np.zeros(3)
    for a in range(3):
        s0 = breaks[a]
        v = Polynomial([y0[2] - u[a] * s0, u[a]])
        x2 = v.integ(lbnd=s0, k=y0[1])
        x1 = x2.integ(lbnd=s0, k=y0[0])
        arcs.append((x1, x2, v))
        y0 = np.array([x1(breaks[a + 1]), x2(breaks[a + 1]), v(breaks[a + 1])])
    t1, t2 = ts
    # rows: lam_v(t1) = 0, lam_v(t2) = 0, lam_v(0) * u0 = -1
    A = np.array([[t1**2 / 2, -t1, 1.0], [t2**2 / 2, -t2, 1.0], [0.0, 0.0, u[0]]])
    c1, c2, c3 = np.linalg.solve(A, [0.0, 0.0, -1.0])
    lam = (Polynomial([c1]), Polynomial([c2, -c1]), Polynomial([c3, -c2, c1 / 2]))
    return AnalyticSolution(
        switch_times=tuple(OPTIMAL_SWITCH_TIMES),
        tf=tf,
        u_max=CONTROL_LIMIT,
        controls=u,
        breaks=breaks,
        state_arcs=tuple(arcs),
        costate_arcs=(lam, lam, lam),
    )


@dataclass(frozen=True)
class LqrOracle:
    """Riccati solution of the scalar regulator, integrated numerically."""

    prm: LqrParameters
    rtol: float = 1e-12

    @cached_property
    def _riccati(self):
        p = self.prm
        rhs = lambda t, P: -p.q - 2 * p.a * P + p.b**2 * P**2 / p.r
        return solve_ivp(rhs, (p.tf, 0.0), [p.s_f], method="DOP853", rtol=self.rtol, atol=1e-14, dense_output=True)

    @cached_property
    def _state(self):
        p = self.prm
        P = self._riccati.sol
        rhs = lambda t, x: (p.a - p.b**2 * P(t)[0] / p.r) * x
        return solve_ivp(rhs, (0.0, p.tf), [p.x0], method="DOP853", rtol=self.rtol, atol=1e-14, dense_output=True)

    def gain(self, t) -> np.ndarray:
        return self._riccati.sol(np.atleast_1d(t))[0]

    def state(self, t) -> np.ndarray:
        return self._state.sol(np.atleast_1d(t))[0]

    def costate(self, t) -> np.ndarray:
        return self.gain(t) * self.state(t)

    def control(self, t) -> np.ndarray:
        return -self.prm.b * self.costate(t) / self.prm.r

    def cost(self) -> float:
        return 0.5 * self.gain(0.0)[0] * self.prm.x0**2


def lqr_oracle(prm: LqrParameters = LqrParameters()) -> LqrOracle:
    return LqrOracle(prm)
