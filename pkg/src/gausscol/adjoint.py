"""Costate estimates from NLP multipliers and checks of the discrete adjoint system.

The solver reports multipliers for ``f + lam.c``.  The costate formulas
below are written for the subtractive Lagrangian ``f - Lam.c``, so every
row multiplier is negated once, in :func:`_row_multipliers`, and nowhere
else.

Gauss family (``lg``/``mlg``), per interval, with ``Lam_i`` the defect
multipliers at the Gauss nodes, ``Lam_e`` the closure multiplier and
``Lt_0``/``Lt_e`` the two endpoint-row multipliers (``mlg`` only)::

    lam_0   = Lam_e - D[:, 0]^T Lam          (v part also - Dt[0,0] Lt_0 - Dt[N+1,0] Lt_e)
    lam_i   = Lam_i / w_i + Lam_e            (v part also - L[0,i] Lt_0 + L[N+1,i] Lt_e)
    lam_N+1 = Lam_e
    psi     = boundary multipliers

Radau family (``lgr``/``mlgr``): ``lam_i = Lam_i / w_i`` at the collocation
nodes (``mlgr`` adds ``D[i, N] Lt`` to the v part) and the end value is
``lam_N = D[:, N]^T Lam`` plus, for ``mlgr``,
``Dt[N, N] Lt - sigma * dfv/d(x, v)^T Lt``.

The endpoint-row terms reproduce the exact KKT conditions only when ``fv``
does not depend on the state or when the endpoint-row multipliers vanish
(unconstrained endpoint controls).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polybasis import RuleKind
from .transcribe import Method, Solution

__all__ = [
    "InconsistentSolutionError",
    "CostateEstimate",
    "HamiltonianProfile",
    "map_costates",
    "discrete_hamiltonian",
    "weierstrass_erdmann_check",
    "adjoint_residual",
    "ACTIVE_BOUND_TOL",
]

ACTIVE_BOUND_TOL = 1e-6


class InconsistentSolutionError(ValueError):
    pass


@dataclass
class CostateEstimate:
    method: Method
    lambda_x: list  # per interval, (n_local, n_x)
    lambda_v: list  # per interval, (n_local, n_v)
    psi: np.ndarray
    endpoint_multipliers: list = field(default_factory=list)  # per interval, endpoint-row multipliers in the subtractive sign

    def stacked(self, k: int) -> np.ndarray:
        return np.hstack([self.lambda_x[k], self.lambda_v[k]])

    def continuity_gaps(self) -> np.ndarray:
        """|lambda(end of k) - lambda(start of k+1)| per interior mesh point (Gauss family)."""
        return np.array(
            [np.max(np.abs(self.stacked(k)[-1] - self.stacked(k + 1)[0])) for k in range(len(self.lambda_x) - 1)]
        )


@dataclass
class HamiltonianProfile:
    values: list  # per interval, H at the collocation nodes
    T: list  # normalized times of those nodes

    @property
    def all_values(self) -> np.ndarray:
        return np.concatenate(self.values) if self.values else np.empty(0)

    @property
    def spread(self) -> float:
        v = self.all_values
        return float(v.max() - v.min()) if v.size else 0.0


def _row_multipliers(solution: Solution, name: str) -> np.ndarray:
    mult = solution.multipliers
    if name not in mult:
        raise InconsistentSolutionError(f"solution has no multipliers for block {name!r}")
    return -np.asarray(mult[name], float)


def _fv_state_jac(problem, y):
    return problem.dynamics_jac(y)[problem.n_x :, : problem.n_state]


def map_costates(solution: Solution, zero_endpoint_rows: bool = False) -> CostateEstimate:
    """Costate estimates at every local node of every interval.

    ``zero_endpoint_rows`` drops the endpoint-row multipliers, which turns the
    modified mapping into the unmodified one.
    """
    nlp = solution.nlp
    p, sc = nlp.problem, nlp.scheme
    N, nx, ns = sc.n, p.n_x, p.n_state
    method = solution.method
    Lam = _row_multipliers(solution, "defects")  # (K, N, ns)
    psi = _row_multipliers(solution, "boundary") if p.n_b else np.empty(0)
    Lt_all = None
    if method.modified:
        Lt_all = _row_multipliers(solution, "endpoint")  # (K, n_end, nv)
        if zero_endpoint_rows:
            Lt_all = np.zeros_like(Lt_all)
    w = sc.weights
    D, Dt = sc.D, sc.Dtilde
    lam_x, lam_v, ends = [], [], []
    if method.family is RuleKind.LG:
        Lam_e = _row_multipliers(solution, "closures")  # (K, ns)
        for k in range(nlp.K):
            lam = np.empty((N + 2, ns))
            lam[1 : N + 1] = Lam[k] / w[:, None] + Lam_e[k]
            lam[N + 1] = Lam_e[k]
            lam[0] = Lam_e[k] - D[:, 0] @ Lam[k]
            if Lt_all is not None:
                Lt0, Lte = Lt_all[k, 0], Lt_all[k, 1]
                lam[0, nx:] -= Dt[0, 0] * Lt0 + Dt[N + 1, 0] * Lte
                lam[1 : N + 1, nx:] += -np.outer(sc.L[0], Lt0) + np.outer(sc.L[N + 1], Lte)
                ends.append(np.vstack([Lt0, Lte]))
            lam_x.append(lam[:, :nx])
            lam_v.append(lam[:, nx:])
    else:
        for k in range(nlp.K):
            lam = np.empty((N + 1, ns))
            lam[:N] = Lam[k] / w[:, None]
            lam[N] = D[:, N] @ Lam[k]
            if Lt_all is not None:
                Lt = Lt_all[k, 0]
                lam[:N, nx:] += np.outer(D[:, N], Lt)
                lam[N, nx:] += Dt[N, N] * Lt
                iv = solution.intervals[k]
                y = np.concatenate([iv.X[N], iv.V[N], iv.U[N]])
                sig = 0.5 * (solution.tf - solution.t0) * solution.alpha[k]
                lam[N] -= sig * _fv_state_jac(p, y).T @ Lt
                ends.append(Lt[None, :])
            lam_x.append(lam[:, :nx])
            lam_v.append(lam[:, nx:])
    return CostateEstimate(method, lam_x, lam_v, psi, ends)


def _node_y(iv, j):
    return np.concatenate([iv.X[j], iv.V[j], iv.U[j]])


def discrete_hamiltonian(solution: Solution, costates: CostateEstimate) -> HamiltonianProfile:
    """``L + <lam, f>`` at every collocation node, with the mapped costates."""
    p = solution.nlp.problem
    colloc = solution.nlp.scheme.colloc
    vals, Ts = [], []
    for k, iv in enumerate(solution.intervals):
        lam = costates.stacked(k)
        h = np.empty(len(colloc))
        for q, j in enumerate(colloc):
            y = _node_y(iv, j)
            h[q] = p.running_cost(y) + lam[j] @ p.dynamics(y)
        vals.append(h)
        Ts.append(iv.T[colloc])
    return HamiltonianProfile(vals, Ts)


def weierstrass_erdmann_check(profile: HamiltonianProfile, threshold: float = 1e-4) -> list[dict]:
    """Hamiltonian jump at each interior mesh point, from the nearest nodes on either side."""
    out = []
    for k in range(len(profile.values) - 1):
        left = float(profile.values[k][-1])
        right = float(profile.values[k + 1][0])
        jump = abs(left - right)
        out.append({"mesh_point": k + 1, "left": left, "right": right, "jump": jump, "ok": jump <= threshold})
    return out


def _inactive_control_mask(solution: Solution, k: int, j: int) -> np.ndarray:
    p = solution.nlp.problem
    lo, hi = p.control_bounds()
    u = solution.intervals[k].U[j]
    bm = solution.control_bound_multipliers[k, j]
    near = (np.abs(u - lo) < ACTIVE_BOUND_TOL) | (np.abs(hi - u) < ACTIVE_BOUND_TOL)
    return ~(near | (np.abs(bm) > ACTIVE_BOUND_TOL))


def adjoint_residual(solution: Solution, costates: CostateEstimate) -> dict:
    """Infinity norms of each family of discrete optimality rows (Gauss family only).

    Families: ``state_adjoint`` (Ddag rows against ``-sigma * grad_y H``),
    ``control_stationarity`` (inactive controls, costate without endpoint-row terms), ``transversality_initial``,
    ``transversality_final``, ``continuity``, ``t0``/``tf`` (free times only),
    ``mesh`` (free mesh points strictly inside their bounds) and ``theta``
    (diagnostic transcription only).
    """
    nlp = solution.nlp
    if nlp.method.family is not RuleKind.LG:
        raise ValueError("adjoint residuals are defined for the Gauss-family methods")
    p, sc = nlp.problem, nlp.scheme
    N, nx, ns = sc.n, p.n_x, p.n_state
    Dd, w = sc.Ddag, sc.weights
    s = 0.5 * (solution.tf - solution.t0)
    res = {"state_adjoint": 0.0, "control_stationarity": 0.0}
    # interior controls touch only defect and closure rows, so their stationarity
    # row carries no endpoint-row terms even when those multipliers are nonzero
    plain = map_costates(solution, zero_endpoint_rows=True) if nlp.method.modified else costates
    quad = np.empty(nlp.K)  # sum_i w_i H_i per interval
    for k, iv in enumerate(solution.intervals):
        lam = costates.stacked(k)
        lam_u = plain.stacked(k)
        sig = s * solution.alpha[k]
        Hq = 0.0
        for i in range(1, N + 1):
            y = _node_y(iv, i)
            gH = p.running_cost_grad(y) + p.dynamics_jac(y).T @ lam[i]
            Hq += w[i - 1] * (p.running_cost(y) + lam[i] @ p.dynamics(y))
            lhs = Dd[i - 1] @ lam[1 : N + 2]
            res["state_adjoint"] = max(res["state_adjoint"], float(np.max(np.abs(lhs + sig * gH[:ns]))))
            mask = _inactive_control_mask(solution, k, i)
            if np.any(mask):
                gHu = p.running_cost_grad(y)[ns:] + p.dynamics_jac(y)[:, ns:].T @ lam_u[i]
                res["control_stationarity"] = max(res["control_stationarity"], float(np.max(np.abs(sig * gHu[mask]))))
        quad[k] = Hq
    e = nlp.endpoint_vector(solution.z)
    gM = p.endpoint_cost_grad(e)
    Jb = p.boundary_jacobian(e)
    target = gM - (Jb.T @ costates.psi if p.n_b else 0.0)  # dM/de - psi^T db/de
    lam0 = costates.stacked(0)[0]
    lamf = costates.stacked(nlp.K - 1)[-1]
    res["transversality_initial"] = float(np.max(np.abs(lam0 + target[:ns])))
    res["transversality_final"] = float(np.max(np.abs(lamf - target[ns : 2 * ns])))
    gaps = costates.continuity_gaps()
    res["continuity"] = float(gaps.max()) if gaps.size else 0.0
    half_quad = 0.5 * float(np.sum(solution.alpha * quad))
    if nlp.vars.t0_index is not None:
        res["t0"] = float(abs(half_quad - target[2 * ns]))
    if nlp.vars.tf_index is not None:
        res["tf"] = float(abs(half_quad + target[2 * ns + 1]))
    if nlp.diagnostic:
        theta = float(_row_multipliers(solution, "mesh_sum")[0])
        extra = np.zeros(nlp.K)
        J = nlp.jacobian(solution.z)
        lam_all = -np.concatenate([solution.result.lambda_E, solution.result.lambda_I])
        for name in ("mesh_fixed", "mesh_bounds"):
            if name in nlp.cons.blocks:
                sl = nlp.cons.blocks[name]
                extra += lam_all[sl] @ J[sl][:, nlp.vars.alpha_index]
        res["theta"] = float(np.max(np.abs(s * quad - theta - extra)))
    elif nlp.mesh.free:
        worst = 0.0
        T = solution.mesh_points
        for i in nlp.mesh.free:
            lo, hi = nlp.mesh_bounds[i]
            if min(T[i + 1] - lo, hi - T[i + 1]) < ACTIVE_BOUND_TOL:
                continue
            if nlp.order_pairs:
                continue  # ordering rows would add terms; skip rather than guess
            worst = max(worst, abs(0.5 * s * (quad[i] - quad[i + 1])))
        res["mesh"] = float(worst)
    return res
