"""Dense primal-dual interior-point solver for small nonlinear programs.

Problem form::

    min f(z)  s.t.  c_E(z) = 0,  c_I(z) <= 0,  lower <= z <= upper

Multiplier convention: the Lagrangian is ``f + lam_E.c_E + lam_I.c_I
- zL.(z - lower) - zU.(upper - z)`` with ``lam_I, zL, zU >= 0``.

Inequalities are turned into equalities with non-negative slacks.  Each
iteration solves the regularized primal-dual Newton system with an
inertia-corrected symmetric indefinite factorization, applies the
fraction-to-boundary rule and backtracks on an l1 exact-penalty merit
function (one second-order correction on the first trial).  The barrier
parameter is reduced monotonically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = ["NlpSpec", "NlpResult", "SolverOptions", "solve", "fd_derivatives", "kkt_residual"]

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


def fd_derivatives(callback: Callable, point, scheme: str = "central", step=None) -> np.ndarray:
    """Central finite-difference gradient (scalar callback) or Jacobian.

    The step for component i is ``sqrt(eps) * (1 + |z_i|)`` unless ``step``
    gives the relative factor explicitly.
    """
    if scheme != "central":
        raise ValueError(f"unsupported scheme {scheme!r}")
    z = np.asarray(point, dtype=float)
    rel = np.sqrt(_EPS) if step is None else step
    f0 = np.asarray(callback(z), dtype=float)
    out = np.empty(f0.shape + (z.size,))
    zp = z.copy()
    for i in range(z.size):
        h = rel * (1.0 + abs(z[i]))
        zp[i] = z[i] + h
        fp = np.asarray(callback(zp), dtype=float)
        zp[i] = z[i] - h
        fm = np.asarray(callback(zp), dtype=float)
        zp[i] = z[i]
        out[..., i] = (fp - fm) / (2 * h)
    return out


@dataclass
class NlpSpec:
    n: int
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable
    gradient: Callable
    m_E: int = 0
    m_I: int = 0
    constraints: Callable | None = None
    jacobian: Callable | None = None
    # hessian(z, obj_factor, lam) -> Hessian of obj_factor*f + lam.c
    hessian: Callable | None = None

    def __post_init__(self):
        self.lower = np.broadcast_to(np.asarray(self.lower, float), (self.n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, float), (self.n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.m_E + self.m_I and (self.constraints is None or self.jacobian is None):
            raise ValueError("constraints and jacobian callbacks are required when m > 0")

    @property
    def m(self) -> int:
        return self.m_E + self.m_I

    def cons(self, z) -> np.ndarray:
        if self.m == 0:
            return np.empty(0)
        return np.asarray(self.constraints(z), float)

    def jac(self, z) -> np.ndarray:
        if self.m == 0:
            return np.empty((0, self.n))
        return np.asarray(self.jacobian(z), float)


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 500
    mu0: float = 0.1
    hessian: str = "bfgs"  # damped BFGS; "exact" calls NlpSpec.hessian
    tau_min: float = 0.995
    kappa_eps: float = 10.0
    armijo: float = 1e-4
    acceptable_factor: float = 100.0
    verbose: bool = False


@dataclass
class NlpResult:
    status: str
    z: np.ndarray
    f: float
    lambda_E: np.ndarray
    lambda_I: np.ndarray
    z_L: np.ndarray
    z_U: np.ndarray
    kkt: dict
    iterations: int
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def success(self) -> bool:
        return self.status in ("solved", "acceptable")

    @property
    def multipliers(self) -> np.ndarray:
        return np.concatenate([self.lambda_E, self.lambda_I])


def kkt_residual(spec: NlpSpec, z, lambda_E, lambda_I=None, z_L=None, z_U=None) -> dict:
    """Infinity norms of stationarity, feasibility and complementarity.

    Inequality complementarity uses ``min(-c_I, lam_I)``; bound
    complementarity uses the products ``(z - lower) z_L`` and
    ``(upper - z) z_U`` over finite bounds.
    """
    z = np.asarray(z, float)
    lam_E = np.asarray(lambda_E, float)
    lam_I = np.zeros(spec.m_I) if lambda_I is None else np.asarray(lambda_I, float)
    zl = np.zeros(spec.n) if z_L is None else np.asarray(z_L, float)
    zu = np.zeros(spec.n) if z_U is None else np.asarray(z_U, float)
    c = spec.cons(z)
    J = spec.jac(z)
    lam = np.concatenate([lam_E, lam_I])
    grad = np.asarray(spec.gradient(z), float) + J.T @ lam - zl + zu
    cE, cI = c[: spec.m_E], c[spec.m_E :]
    lo_fin = np.isfinite(spec.lower)
    hi_fin = np.isfinite(spec.upper)
    bound_viol = np.concatenate([(spec.lower - z)[lo_fin], (z - spec.upper)[hi_fin], [0.0]])
    feas = max(np.max(np.abs(cE), initial=0.0), np.max(np.maximum(cI, 0.0), initial=0.0), bound_viol.max())
    comp = max(
        np.max(np.abs(np.minimum(-cI, lam_I)), initial=0.0),
        np.max(np.abs((z - spec.lower)[lo_fin] * zl[lo_fin]), initial=0.0),
        np.max(np.abs((spec.upper - z)[hi_fin] * zu[hi_fin]), initial=0.0),
    )
    return {
        "stationarity": float(np.max(np.abs(grad), initial=0.0)),
        "feasibility": float(feas),
        "complementarity": float(comp),
    }


class _Factorization:
    """LDL^T of the symmetric KKT matrix with inertia counts."""

    def __init__(self, K: np.ndarray):
        self.K = K
        lu, d, perm = scipy.linalg.ldl(K, lower=True)
        self.Lp = lu[perm]
        self.d = d
        self.perm = perm
        eig = np.linalg.eigvalsh(d)
        # near-singular pivots are caught by the solve accuracy check instead;
        # a relative threshold misreads tiny regularized pivots when the
        # barrier terms are large
        zero = eig == 0.0
        self.n_zero = int(zero.sum())
        self.n_pos = int((eig > 0)[~zero].sum())
        self.n_neg = int((eig < 0)[~zero].sum())

    def _solve_once(self, b):
        y = scipy.linalg.solve_triangular(self.Lp, b[self.perm], lower=True, unit_diagonal=True)
        w = np.linalg.solve(self.d, y)
        w = scipy.linalg.solve_triangular(self.Lp.T, w, lower=False, unit_diagonal=True)
        x = np.empty_like(w)
        x[self.perm] = w
        return x

    def solve(self, b):
        x = self._solve_once(b)
        return x + self._solve_once(b - self.K @ x)

    def accurate(self, b, x) -> bool:
        r = np.max(np.abs(self.K @ x - b), initial=0.0)
        ref = np.max(np.abs(self.K), initial=0.0) * np.max(np.abs(x), initial=0.0) + np.max(np.abs(b), initial=0.0)
        return bool(np.all(np.isfinite(x))) and r <= 1e-8 * max(ref, 1e-300)


class _Interior:
    def __init__(self, spec: NlpSpec, opts: SolverOptions):
        self.spec = spec
        self.opts = opts
        n, mI = spec.n, spec.m_I
        self.n = n
        self.N = n + mI
        self.m = spec.m
        self.xl = np.concatenate([spec.lower, np.zeros(mI)])
        self.xu = np.concatenate([spec.upper, np.full(mI, np.inf)])
        self.hasL = np.isfinite(self.xl)
        self.hasU = np.isfinite(self.xu)
        if opts.hessian == "exact":
            if spec.hessian is None:
                raise ValueError("exact Hessian requested but no callback supplied")
            self.exact = True
        elif opts.hessian == "bfgs":
            self.exact = False
        else:
            raise ValueError(f"unknown hessian option {opts.hessian!r}")
        self.B = np.eye(n)

    # -- evaluations ---------------------------------------------------------

    def evaluate(self, x):
        z = x[: self.n]
        s = x[self.n :]
        sp = self.spec
        f = float(sp.objective(z))
        c = sp.cons(z)
        if sp.m_I:
            c = c.copy()
            c[sp.m_E :] += s
        return f, c

    def derivatives(self, x):
        z = x[: self.n]
        sp = self.spec
        g = np.zeros(self.N)
        g[: self.n] = sp.gradient(z)
        A = np.zeros((self.m, self.N))
        if self.m:
            A[:, : self.n] = sp.jac(z)
            A[sp.m_E :, self.n :] = np.eye(sp.m_I)
        return g, A

    def barrier(self, x, f, mu):
        val = f
        if self.hasL.any():
            val -= mu * np.sum(np.log(x[self.hasL] - self.xl[self.hasL]))
        if self.hasU.any():
            val -= mu * np.sum(np.log(self.xu[self.hasU] - x[self.hasU]))
        return val

    def barrier_grad(self, x, g, mu):
        gb = g.copy()
        gb[self.hasL] -= mu / (x[self.hasL] - self.xl[self.hasL])
        gb[self.hasU] += mu / (self.xu[self.hasU] - x[self.hasU])
        return gb

    def errors(self, x, g, A, c, lam, zl, zu, mu):
        grad = g + A.T @ lam - zl + zu
        comp_l = np.abs((x - self.xl)[self.hasL] * zl[self.hasL] - mu)
        comp_u = np.abs((self.xu - x)[self.hasU] * zu[self.hasU] - mu)
        return (
            float(np.max(np.abs(grad), initial=0.0)),
            float(np.max(np.abs(c), initial=0.0)),
            float(max(np.max(comp_l, initial=0.0), np.max(comp_u, initial=0.0))),
        )

    def scaled_error(self, errs, lam, zl, zu):
        smax = 100.0
        nm = self.N + self.m
        sd = max(smax, (np.abs(lam).sum() + zl.sum() + zu.sum()) / max(nm, 1)) / smax
        sc = max(smax, (zl.sum() + zu.sum()) / max(self.N, 1)) / smax
        return max(errs[0] / sd, errs[1], errs[2] / sc)

    # -- main loop -------------------------------------------------------------

    def initial_point(self, z0):
        sp = self.spec
        z = np.asarray(z0, float).copy()
        k1 = k2 = 1e-2
        lo, hi = sp.lower, sp.upper
        width = hi - lo
        pl = np.minimum(k1 * np.maximum(1.0, np.abs(lo)), k2 * np.where(np.isfinite(width), width, np.inf))
        pu = np.minimum(k1 * np.maximum(1.0, np.abs(hi)), k2 * np.where(np.isfinite(width), width, np.inf))
        fin_l, fin_u = np.isfinite(lo), np.isfinite(hi)
        z[fin_l] = np.maximum(z[fin_l], lo[fin_l] + pl[fin_l])
        z[fin_u] = np.minimum(z[fin_u], hi[fin_u] - pu[fin_u])
        if sp.m_I:
            cI = sp.cons(z)[sp.m_E :]
            s = np.maximum(-cI, k1)
        else:
            s = np.empty(0)
        return np.concatenate([z, s])

    def run(self, z0):
        sp, o = self.spec, self.opts
        x = self.initial_point(z0)
        mu = o.mu0
        # below tol: an inactive row with slack s < 1 keeps lambda = mu / s above tol otherwise
        mu_min = o.tol * 1e-4
        zl = np.where(self.hasL, 1.0, 0.0)
        zu = np.where(self.hasU, 1.0, 0.0)
        f, c = self.evaluate(x)
        g, A = self.derivatives(x)
        lam = self._initial_multipliers(g, A, zl, zu)
        nu = 1.0
        delta_last = 0.0
        history = []
        status, message = "max_iter", "iteration limit reached"
        it = 0
        best = None
        while True:
            kkt = self._public_kkt(x, lam, zl, zu)
            kmax = max(kkt.values())
            history.append({"iter": it, "f": f, "mu": mu, **kkt})
            if best is None or kmax < best[0]:
                best = (kmax, x.copy(), lam.copy(), zl.copy(), zu.copy(), f)
            if o.verbose:
                log.info("it %3d f %.10g mu %.1e stat %.2e feas %.2e comp %.2e", it, f, mu, *kkt.values())
            if kmax <= o.tol:
                status, message = "solved", "KKT tolerance met"
                break
            if it >= o.max_iter:
                break
            if not (np.isfinite(f) and np.all(np.isfinite(c)) and np.all(np.isfinite(g))):
                status, message = "error", "non-finite function values"
                break
            while mu > mu_min:
                errs = self.errors(x, g, A, c, lam, zl, zu, mu)
                if self.scaled_error(errs, lam, zl, zu) > o.kappa_eps * mu:
                    break
                mu = max(mu_min, mu / 10.0)
            # Newton system
            H = self._hessian(x, lam)
            sig = np.zeros(self.N)
            sig[self.hasL] += zl[self.hasL] / (x - self.xl)[self.hasL]
            sig[self.hasU] += zu[self.hasU] / (self.xu - x)[self.hasU]
            gb = self.barrier_grad(x, g, mu)
            rhs = -np.concatenate([gb + A.T @ lam, c])
            fac, delta_w, delta_c, sol = self._factor(H, sig, A, mu, delta_last, rhs)
            if fac is None:
                status, message = "error", "KKT matrix could not be regularized"
                break
            if delta_w > 0:
                delta_last = delta_w
            dx, dlam = sol[: self.N], sol[self.N :]
            dzl = np.zeros(self.N)
            dzu = np.zeros(self.N)
            dzl[self.hasL] = (mu / (x - self.xl) - zl - zl / (x - self.xl) * dx)[self.hasL]
            dzu[self.hasU] = (mu / (self.xu - x) - zu + zu / (self.xu - x) * dx)[self.hasU]
            tau = max(o.tau_min, 1.0 - mu)
            a_max = self._fraction_to_boundary(x, dx, tau)
            a_z = min(self._max_step(zl, dzl, tau), self._max_step(zu, dzu, tau))
            # penalty parameter
            cnorm = np.abs(c).sum()
            Hs = H + np.diag(sig)
            dphi = gb @ dx
            if cnorm > 0:
                curv = max(0.0, 0.5 * dx @ Hs @ dx)
                nu_req = (dphi + curv) / (0.9 * cnorm)
                if nu < nu_req:
                    nu = nu_req + 1.0
            ddir = dphi - nu * cnorm
            merit0 = self.barrier(x, f, mu) + nu * cnorm
            x_new, alpha, f_new, c_new = self._line_search(x, dx, a_max, mu, nu, merit0, ddir, fac, c, gb, A, lam, tau)
            if x_new is None:
                status, message = "error", "line search produced non-finite values"
                break
            lam_new = lam + alpha * dlam
            zl_new = zl + a_z * dzl
            zu_new = zu + a_z * dzu
            zl_new, zu_new = self._safeguard(x_new, zl_new, zu_new, mu)
            g_new, A_new = self.derivatives(x_new)
            if not self.exact:
                self._bfgs_update(x, x_new, g, A, g_new, A_new, lam_new)
            x, lam, zl, zu, f, c, g, A = x_new, lam_new, zl_new, zu_new, f_new, c_new, g_new, A_new
            it += 1

        if status != "solved":
            kbest, xb, lb, zlb, zub, fb = best
            if status != "error" and kbest <= o.acceptable_factor * o.tol:
                status, message = "acceptable", f"KKT residual {kbest:.2e} within acceptable level"
            elif status == "max_iter":
                feas = self._public_kkt(xb, lb, zlb, zub)["feasibility"]
                if feas > np.sqrt(o.tol):
                    status, message = "infeasible", f"constraint violation {feas:.2e} at iteration limit"
            x, lam, zl, zu, f = xb, lb, zlb, zub, fb
        z = x[: self.n].copy()
        return NlpResult(
            status=status,
            z=z,
            f=float(sp.objective(z)),
            lambda_E=lam[: sp.m_E].copy(),
            lambda_I=lam[sp.m_E :].copy(),
            z_L=zl[: self.n].copy(),
            z_U=zu[: self.n].copy(),
            kkt=self._public_kkt(x, lam, zl, zu),
            iterations=it,
            message=message,
            history=history,
        )

    # -- pieces ----------------------------------------------------------------

    def _public_kkt(self, x, lam, zl, zu):
        sp = self.spec
        return kkt_residual(sp, x[: self.n], lam[: sp.m_E], lam[sp.m_E :], zl[: self.n], zu[: self.n])

    def _initial_multipliers(self, g, A, zl, zu):
        if self.m == 0:
            return np.empty(0)
        K = np.block([[np.eye(self.N), A.T], [A, np.zeros((self.m, self.m))]])
        rhs = np.concatenate([-(g - zl + zu), np.zeros(self.m)])
        try:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        except np.linalg.LinAlgError:
            return np.zeros(self.m)
        lam = sol[self.N :]
        if np.max(np.abs(lam), initial=0.0) > 1e3:
            return np.zeros(self.m)
        return lam

    def _hessian(self, x, lam):
        H = np.zeros((self.N, self.N))
        if self.exact:
            H[: self.n, : self.n] = self.spec.hessian(x[: self.n], 1.0, lam)
        else:
            H[: self.n, : self.n] = self.B
        return H

    def _factor(self, H, sig, A, mu, delta_last, rhs):
        N, m = self.N, self.m
        base = np.zeros((N + m, N + m))
        base[:N, :N] = H + np.diag(sig)
        base[N:, :N] = A
        base[:N, N:] = A.T
        delta_w, delta_c = 0.0, 0.0
        for attempt in range(60):
            K = base.copy()
            K[:N, :N] += delta_w * np.eye(N)
            K[N:, N:] -= delta_c * np.eye(m)
            try:
                fac = _Factorization(K)
            except (np.linalg.LinAlgError, ValueError):
                fac = None
            sol = None
            if fac is not None and fac.n_pos == N and fac.n_neg == m and fac.n_zero == 0:
                sol = fac.solve(rhs)
                if fac.accurate(rhs, sol):
                    return fac, delta_w, delta_c, sol
            singular = fac is not None and (fac.n_zero > 0 or sol is not None)
            if singular and delta_c == 0.0 and m > 0:
                delta_c = 1e-8 * mu**0.25
                continue
            if delta_w == 0.0:
                delta_w = 1e-4 if delta_last == 0.0 else max(1e-20, delta_last / 3.0)
            else:
                delta_w *= 100.0 if delta_last == 0.0 else 8.0
            if delta_w > 1e40:
                break
        return None, delta_w, delta_c, None

    def _max_step(self, v, dv, tau):
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))

    def _fraction_to_boundary(self, x, dx, tau):
        a = 1.0
        if self.hasL.any():
            a = min(a, self._max_step((x - self.xl)[self.hasL], dx[self.hasL], tau))
        if self.hasU.any():
            a = min(a, self._max_step((self.xu - x)[self.hasU], -dx[self.hasU], tau))
        return a

    def _merit(self, x, mu, nu):
        f, c = self.evaluate(x)
        return self.barrier(x, f, mu) + nu * np.abs(c).sum(), f, c

    def _line_search(self, x, dx, a_max, mu, nu, merit0, ddir, fac, c, gb, A, lam, tau):
        eta = self.opts.armijo
        alpha = a_max
        first = True
        last = None
        while alpha > 1e-14:
            xt = x + alpha * dx
            mt, ft, ct = self._merit(xt, mu, nu)
            if not np.isfinite(mt):
                alpha *= 0.5
                first = False
                continue
            last = (xt, alpha, ft, ct)
            if mt <= merit0 + eta * alpha * ddir:
                return xt, alpha, ft, ct
            if first and self.m:
                # second-order correction
                rhs = -np.concatenate([gb + A.T @ lam, alpha * c + ct])
                dsoc = fac.solve(rhs)[: self.N]
                a_soc = self._fraction_to_boundary(x, dsoc, tau)
                xs = x + a_soc * dsoc
                ms, fs, cs = self._merit(xs, mu, nu)
                if np.isfinite(ms) and ms <= merit0 + eta * alpha * ddir:
                    return xs, alpha, fs, cs
            first = False
            alpha *= 0.5
        if last is None:
            return None, 0.0, None, None
        return last

    def _safeguard(self, x, zl, zu, mu):
        k = 1e10
        zl = zl.copy()
        zu = zu.copy()
        sl = (x - self.xl)[self.hasL]
        su = (self.xu - x)[self.hasU]
        zl[self.hasL] = np.clip(zl[self.hasL], mu / (k * sl), k * mu / sl)
        zu[self.hasU] = np.clip(zu[self.hasU], mu / (k * su), k * mu / su)
        return zl, zu

    def _bfgs_update(self, x, x_new, g, A, g_new, A_new, lam):
        n = self.n
        s = (x_new - x)[:n]
        y = (g_new - g)[:n] + (A_new - A)[:, :n].T @ lam
        if s @ s < 1e-30:
            return
        Bs = self.B @ s
        sBs = s @ Bs
        sy = s @ y
        if sy < 0.2 * sBs:
            theta = 0.8 * sBs / (sBs - sy)
            y = theta * y + (1 - theta) * Bs
            sy = s @ y
        self.B = self.B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy


def solve(spec: NlpSpec, start, options: SolverOptions | None = None, **kw) -> NlpResult:
    """Solve ``spec`` from ``start`` (projected into the bounds).

    Keyword arguments override fields of ``options``.
    """
    opts = SolverOptions() if options is None else options
    if kw:
        opts = SolverOptions(**{**opts.__dict__, **kw})
    start = np.asarray(start, float)
    if start.shape != (spec.n,):
        raise ValueError(f"start has shape {start.shape}, expected ({spec.n},)")
    f0 = np.asarray(spec.gradient(np.clip(start, spec.lower, spec.upper)))
    if f0.shape != (spec.n,):
        raise ValueError("gradient callback returned wrong size")
    if spec.m:
        c0 = spec.cons(np.clip(start, spec.lower, spec.upper))
        if c0.shape != (spec.m,):
            raise ValueError(f"constraint callback returned {c0.shape}, expected ({spec.m},)")
    return _Interior(spec, opts).run(start)
