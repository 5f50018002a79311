"""Multi-interval Bolza problem with a control-free / control-explicit split.

Dynamics are written in the normalized time ``T in [-1, 1]``::

    dx/dT = (tf - t0)/2 * fx(x, v)
    dv/dT = (tf - t0)/2 * fv(x, v, u)

Callbacks take and return 1-D numpy arrays for a single node and must be
pure (no hidden state).  Jacobian callbacks are optional; missing ones are
replaced by central finite differences.  Endpoint functions (``mayer``,
``boundary``) receive ``(x0, v0, xf, vf, t0, tf)`` and their Jacobians are
taken with respect to the packed vector ``[x0, v0, xf, vf, t0, tf]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nlpsolve import fd_derivatives

__all__ = [
    "BolzaProblem",
    "Mesh",
    "InvalidMeshError",
    "ValidationReport",
    "alpha_from_mesh",
    "map_tau_to_T",
    "map_T_to_tau",
    "validate",
]



class InvalidMeshError(ValueError):
    pass


@dataclass(frozen=True)
class BolzaProblem:
    n_x: int
    n_v: int
    n_u: int
    fx: Callable | None
    fv: Callable
    mayer: Callable | None = None
    lagrange: Callable | None = None
    boundary: Callable | None = None
    n_b: int = 0
    path: Callable | None = None
    n_c: int = 0
    u_lower: Sequence[float] | None = None
    u_upper: Sequence[float] | None = None
    t0: float | tuple[float, float] = 0.0
    tf: float | tuple[float, float] = 1.0
    t0_guess: float | None = None
    tf_guess: float | None = None
    # linear initial guess for the stacked state [x, v]
    guess_start: Sequence[float] | None = None
    guess_end: Sequence[float] | None = None
    fx_jac: Callable | None = None
    fv_jac: Callable | None = None
    mayer_grad: Callable | None = None
    lagrange_grad: Callable | None = None
    boundary_jac: Callable | None = None
    path_jac: Callable | None = None
    name: str = "problem"

    def __post_init__(self):
        if self.n_x < 0 or self.n_v < 1 or self.n_u < 1:
            raise ValueError("need n_x >= 0, n_v >= 1 and n_u >= 1")
        if self.n_x > 0 and self.fx is None:
            raise ValueError("fx is required when n_x > 0")

    @property
    def n_state(self) -> int:
        return self.n_x + self.n_v

    @property
    def n_y(self) -> int:
        return self.n_x + self.n_v + self.n_u

    @property
    def n_end(self) -> int:
        return 2 * self.n_state + 2

    def control_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.n_u, -np.inf) if self.u_lower is None else np.asarray(self.u_lower, float)
        hi = np.full(self.n_u, np.inf) if self.u_upper is None else np.asarray(self.u_upper, float)
        return lo, hi

    # -- per-node evaluations on y = [x, v, u] ---------------------------------

    def split(self, y):
        nx, nv = self.n_x, self.n_v
        return y[:nx], y[nx : nx + nv], y[nx + nv :]

    def dynamics(self, y) -> np.ndarray:
        x, v, u = self.split(y)
        fx = np.asarray(self.fx(x, v), float).ravel() if self.n_x else np.empty(0)
        fv = np.asarray(self.fv(x, v, u), float).ravel()
        return np.concatenate([fx, fv])

    def dynamics_jac(self, y) -> np.ndarray:
        """Jacobian of ``[fx, fv]`` with respect to ``y``, shape (n_state, n_y)."""
        x, v, u = self.split(y)
        out = np.zeros((self.n_state, self.n_y))
        if self.n_x:
            if self.fx_jac is not None:
                out[: self.n_x, : self.n_state] = self.fx_jac(x, v)
            else:
                out[: self.n_x, : self.n_state] = fd_derivatives(
                    lambda s: self.fx(s[: self.n_x], s[self.n_x :]), y[: self.n_state]
                )
        if self.fv_jac is not None:
            out[self.n_x :] = self.fv_jac(x, v, u)
        else:
            out[self.n_x :] = fd_derivatives(lambda s: self.fv(*self.split(s)), y)
        return out

    def running_cost(self, y) -> float:
        if self.lagrange is None:
            return 0.0
        return float(self.lagrange(*self.split(y)))

    def running_cost_grad(self, y) -> np.ndarray:
        if self.lagrange is None:
            return np.zeros(self.n_y)
        if self.lagrange_grad is not None:
            return np.asarray(self.lagrange_grad(*self.split(y)), float)
        return fd_derivatives(lambda s: self.lagrange(*self.split(s)), y)

    def _unpack_end(self, e):
        ns = self.n_state
        nx = self.n_x
        return e[:nx], e[nx:ns], e[ns : ns + nx], e[ns + nx : 2 * ns], e[2 * ns], e[2 * ns + 1]

    def endpoint_cost(self, e) -> float:
        if self.mayer is None:
            return 0.0
        return float(self.mayer(*self._unpack_end(e)))

    def endpoint_cost_grad(self, e) -> np.ndarray:
        if self.mayer is None:
            return np.zeros(self.n_end)
        if self.mayer_grad is not None:
            return np.asarray(self.mayer_grad(*self._unpack_end(e)), float)
        return fd_derivatives(self.endpoint_cost, e)

    def boundary_values(self, e) -> np.ndarray:
        if self.n_b == 0:
            return np.empty(0)
        return np.asarray(self.boundary(*self._unpack_end(e)), float).ravel()

    def boundary_jacobian(self, e) -> np.ndarray:
        if self.n_b == 0:
            return np.empty((0, self.n_end))
        if self.boundary_jac is not None:
            return np.asarray(self.boundary_jac(*self._unpack_end(e)), float)
        return fd_derivatives(self.boundary_values, e)

    def path_values(self, u) -> np.ndarray:
        if self.n_c == 0:
            return np.empty(0)
        return np.asarray(self.path(u), float).ravel()

    def path_jacobian(self, u) -> np.ndarray:
        if self.n_c == 0:
            return np.empty((0, self.n_u))
        if self.path_jac is not None:
            return np.asarray(self.path_jac(u), float)
        return fd_derivatives(self.path_values, u)


@dataclass(frozen=True)
class Mesh:
    """K intervals on [-1, 1]; each interior point is fixed or free in (lo, hi)."""

    points: tuple = ()
    guesses: tuple | None = None

    @property
    def K(self) -> int:
        return len(self.points) + 1

    @classmethod
    def uniform(cls, K: int) -> "Mesh":
        if K < 1:
            raise InvalidMeshError("K must be at least 1")
        return cls(tuple(np.linspace(-1, 1, K + 1)[1:-1].tolist()))

    def is_free(self, i: int) -> bool:
        return isinstance(self.points[i], (tuple, list))

    @property
    def free(self) -> list[int]:
        return [i for i in range(len(self.points)) if self.is_free(i)]

    def guess_points(self) -> np.ndarray:
        """Concrete mesh points T_0..T_K (free points at hint or bound midpoint)."""
        out = [-1.0]
        for i, p in enumerate(self.points):
            if self.is_free(i):
                g = None if self.guesses is None else self.guesses[i]
                out.append(0.5 * (p[0] + p[1]) if g is None else float(g))
            else:
                out.append(float(p))
        out.append(1.0)
        return np.asarray(out)

    def with_points(self, values) -> "Mesh":
        return Mesh(tuple(float(v) for v in values))


def alpha_from_mesh(points) -> np.ndarray:
    """Half-widths of the mesh intervals for points T_0=-1 < ... < T_K=+1."""
    T = np.asarray(points, dtype=float)
    if T.ndim != 1 or len(T) < 2:
        raise InvalidMeshError("need at least two mesh points")
    if T[0] != -1.0 or T[-1] != 1.0:
        raise InvalidMeshError("mesh must start at -1 and end at +1")
    if np.any(np.diff(T) <= 0):
        raise InvalidMeshError("mesh points must be strictly increasing")
    alpha = np.diff(T) / 2.0
    if np.any(alpha <= 0):
        raise InvalidMeshError("mesh interval too narrow to represent")
    return alpha


def map_tau_to_T(k: int, tau, points):
    """Map local time of interval ``k`` (1-based) to mesh time T."""
    T = np.asarray(points, dtype=float)
    a, b = T[k - 1], T[k]
    return 0.5 * (b - a) * np.asarray(tau) + 0.5 * (b + a)


def map_T_to_tau(k: int, t, points):
    T = np.asarray(points, dtype=float)
    a, b = T[k - 1], T[k]
    return (2.0 * np.asarray(t) - (b + a)) / (b - a)


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks.values())

    @property
    def dimensions_ok(self) -> bool:
        return all(c["ok"] for name, c in self.checks.items() if name.startswith("dim:"))

    def failures(self) -> list[str]:
        return [f"{k}: {c['msg']}" for k, c in self.checks.items() if not c["ok"]]

    def __str__(self) -> str:
        return "\n".join(f"{'PASS' if c['ok'] else 'FAIL'} {k} {c['msg']}" for k, c in self.checks.items())


def _jac_check(analytic, func, point, rtol=1e-5):
    ana = np.atleast_2d(np.asarray(analytic, float))
    num = np.atleast_2d(fd_derivatives(func, point))
    if ana.shape != num.shape:
        return False, f"shape {ana.shape} != {num.shape}"
    err = np.max(np.abs(ana - num), initial=0.0) / max(1.0, np.max(np.abs(num), initial=0.0))
    return err <= rtol, f"rel err {err:.2e}"


def validate(problem: BolzaProblem, rng=None, rtol: float = 1e-5) -> ValidationReport:
    """Probe every callback for output sizes and check supplied Jacobians.

    Nothing is raised; failures are listed in the returned report.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    p = problem
    rep = ValidationReport()
    lo, hi = p.control_bounds()
    boxed = np.isfinite(lo) & np.isfinite(hi)
    u = np.zeros(p.n_u)
    u[boxed] = 0.5 * (lo[boxed] + hi[boxed])
    u += 0.1 * rng.standard_normal(p.n_u)
    u = np.clip(u, lo, hi)
    x = rng.standard_normal(p.n_x)
    v = rng.standard_normal(p.n_v)
    y = np.concatenate([x, v, u])
    e = np.concatenate([rng.standard_normal(2 * p.n_state), [0.1, 1.3]])

    def dim(name, fn, expected):
        try:
            out = np.atleast_1d(np.asarray(fn(), float))
            ok = out.shape == (expected,) and np.all(np.isfinite(out))
            rep.checks[f"dim:{name}"] = {"ok": bool(ok), "msg": f"got {out.shape}, expected ({expected},)"}
            return ok
        except Exception as exc:  # report, do not raise
            rep.checks[f"dim:{name}"] = {"ok": False, "msg": repr(exc)}
            return False

    def jac(name, analytic, func, point):
        try:
            ok, msg = _jac_check(analytic(), func, point, rtol)
        except Exception as exc:
            ok, msg = False, repr(exc)
        rep.checks[f"jac:{name}"] = {"ok": bool(ok), "msg": msg}

    if p.n_x:
        if dim("fx", lambda: p.fx(x, v), p.n_x) and p.fx_jac is not None:
            jac("fx", lambda: p.fx_jac(x, v), lambda s: p.fx(s[: p.n_x], s[p.n_x :]), y[: p.n_state])
    if dim("fv", lambda: p.fv(x, v, u), p.n_v) and p.fv_jac is not None:
        jac("fv", lambda: p.fv_jac(x, v, u), lambda s: p.fv(*p.split(s)), y)
    if p.lagrange is not None:
        if dim("lagrange", lambda: p.lagrange(x, v, u), 1) and p.lagrange_grad is not None:
            jac("lagrange", lambda: p.lagrange_grad(x, v, u), lambda s: p.running_cost(s), y)
    if p.mayer is not None:
        if dim("mayer", lambda: p.endpoint_cost(e), 1) and p.mayer_grad is not None:
            jac("mayer", lambda: p.mayer_grad(*p._unpack_end(e)), p.endpoint_cost, e)
    if p.n_b:
        if dim("boundary", lambda: p.boundary(*p._unpack_end(e)), p.n_b) and p.boundary_jac is not None:
            jac("boundary", lambda: p.boundary_jac(*p._unpack_end(e)), p.boundary_values, e)
    if p.n_c:
        if dim("path", lambda: p.path(u), p.n_c) and p.path_jac is not None:
            jac("path", lambda: p.path_jac(u), p.path_values, u)
    return rep
