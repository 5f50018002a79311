"""Direct transcription of a multi-interval Bolza problem into an NLP.

Four methods share one assembly path:

* ``lg``    Gauss collocation; support ``-1, nodes``; the interval end state is
            fixed by a quadrature closure row; controls at the Gauss nodes.
* ``mlg``   ``lg`` plus control variables at both interval ends and two extra
            collocation rows (control-explicit components only) at ``-1`` and
            ``+1``.
* ``lgr``   Radau collocation at the N Radau nodes; support adds ``+1``.
* ``mlgr``  ``lgr`` plus a control variable at ``+1`` and one extra
            collocation row there for the control-explicit components.

State values at mesh points are single shared variables, so continuity is
implicit.  Interior mesh points are fixed floats or free variables with
bounds; in diagnostic mode the interval half-widths become the variables
instead, tied together by an explicit sum row.

Rows are written as ``derivative - sigma_k * f`` with
``sigma_k = (tf - t0)/2 * alpha_k``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .nlpsolve import NlpResult, NlpSpec, fd_derivatives
from .ocp import BolzaProblem, InvalidMeshError, Mesh
from .polybasis import CollocationScheme, RuleKind, lagrange_diff_matrix, lagrange_eval_matrix

__all__ = [
    "Method",
    "VariableLayout",
    "ConstraintLayout",
    "TranscribedNlp",
    "Solution",
    "IntervalSolution",
    "SolutionError",
    "UnsupportedProblemError",
    "transcribe",
    "initial_guess",
    "extract_solution",
    "approximate_control",
    "MESH_MARGIN",
    "TIME_GAP",
]

MESH_MARGIN = 1e-3
TIME_GAP = 1e-6


class SolutionError(RuntimeError):
    pass


class UnsupportedProblemError(ValueError):
    pass


class Method(str, enum.Enum):
    LG = "lg"
    MLG = "mlg"
    LGR = "lgr"
    MLGR = "mlgr"

    @property
    def family(self) -> RuleKind:
        return RuleKind.LG if self in (Method.LG, Method.MLG) else RuleKind.LGR

    @property
    def modified(self) -> bool:
        return self in (Method.MLG, Method.MLGR)


@dataclass
class VariableLayout:
    n: int
    blocks: dict
    state_index: np.ndarray  # (n_nodes, n_state)
    control_index: np.ndarray  # (K, n_local, n_u); -1 where absent
    mesh_index: list  # per interior mesh point: variable index or None
    alpha_index: np.ndarray | None  # diagnostic mode only
    t0_index: int | None
    tf_index: int | None
    node_of: np.ndarray  # (K, n_local) global state node

    def check(self) -> None:
        seen = np.zeros(self.n, dtype=int)
        for sl in self.blocks.values():
            seen[sl] += 1
        if not np.all(seen == 1):
            raise AssertionError("variable blocks overlap or leave gaps")

    def to_dict(self) -> dict:
        return {k: [s.start, s.stop] for k, s in self.blocks.items()}


@dataclass
class ConstraintLayout:
    m_E: int
    m_I: int
    blocks: dict  # name -> slice into [c_E, c_I]
    shapes: dict  # name -> shape used to reshape row multipliers

    @property
    def m(self) -> int:
        return self.m_E + self.m_I

    def to_dict(self) -> dict:
        return {k: [s.start, s.stop] for k, s in self.blocks.items()}


@dataclass
class _Point:
    """A node where the dynamics enter some row."""

    k: int
    j: int
    weight: float  # quadrature weight, 0 for pure endpoint rows
    defect_row: int | None  # first row of the full defect block for this node
    endpoint_row: int | None  # first row of the v-only endpoint block


class TranscribedNlp:
    """NLP assembled for one method, mesh and node count.

    Callback methods (``objective``, ``gradient``, ``constraints``,
    ``jacobian``, ``hessian``) are pure functions of ``z``.
    """

    def __init__(self, problem: BolzaProblem, mesh: Mesh, scheme: CollocationScheme, method: Method, diagnostic: bool):
        self.problem = problem
        self.mesh = mesh
        self.scheme = scheme
        self.method = method
        self.diagnostic = diagnostic
        self.K = mesh.K
        self._build_variables()
        self._build_points()
        self._build_constraints()
        self._cache_key = None
        self._cache_val = None
        self._pidx = None

    # -- layout ------------------------------------------------------------------

    def _build_variables(self):
        p, sc, K = self.problem, self.scheme, self.K
        N = sc.n
        ns, nu = p.n_state, p.n_u
        lg = self.method.family is RuleKind.LG
        n_local = sc.n_local
        per = N + 1 if lg else N
        n_nodes = K * per + 1
        node_of = np.array([[k * per + j for j in range(n_local)] for k in range(K)])
        if self.method is Method.LG:
            ctrl_local = list(range(1, N + 1))
        elif self.method is Method.MLG:
            ctrl_local = list(range(N + 2))
        elif self.method is Method.LGR:
            ctrl_local = list(range(N))
        else:
            ctrl_local = list(range(N + 1))
        self.ctrl_local = ctrl_local
        blocks = {}
        pos = 0
        blocks["states"] = slice(pos, pos + n_nodes * ns)
        state_index = np.arange(pos, pos + n_nodes * ns).reshape(n_nodes, ns)
        pos += n_nodes * ns
        n_ctrl = K * len(ctrl_local) * nu
        blocks["controls"] = slice(pos, pos + n_ctrl)
        control_index = -np.ones((K, n_local, nu), dtype=int)
        c = pos
        for k in range(K):
            for j in ctrl_local:
                control_index[k, j] = np.arange(c, c + nu)
                c += nu
        pos += n_ctrl
        mesh_index = [None] * (K - 1)
        alpha_index = None
        if self.diagnostic:
            alpha_index = np.arange(pos, pos + K)
            blocks["alpha"] = slice(pos, pos + K)
            pos += K
        else:
            start = pos
            for i in self.mesh.free:
                mesh_index[i] = pos
                pos += 1
            if pos > start:
                blocks["mesh"] = slice(start, pos)
        t0_index = tf_index = None
        if isinstance(p.t0, (tuple, list)):
            t0_index = pos
            blocks["t0"] = slice(pos, pos + 1)
            pos += 1
        if isinstance(p.tf, (tuple, list)):
            tf_index = pos
            blocks["tf"] = slice(pos, pos + 1)
            pos += 1
        self.vars = VariableLayout(pos, blocks, state_index, control_index, mesh_index, alpha_index, t0_index, tf_index, node_of)
        self.vars.check()
        self.n = pos
        self.lower, self.upper = self._bounds()

    def _mesh_bounds(self):
        """Clipped bounds for each free interior mesh point."""
        pts = self.mesh.points
        out = {}
        for i in self.mesh.free:
            lo, hi = map(float, pts[i])
            prev_fixed = -1.0
            for q in range(i - 1, -2, -1):
                if q < 0:
                    break
                if not self.mesh.is_free(q):
                    prev_fixed = float(pts[q])
                    break
            next_fixed = 1.0
            for q in range(i + 1, len(pts)):
                if not self.mesh.is_free(q):
                    next_fixed = float(pts[q])
                    break
            lo = max(lo, prev_fixed + MESH_MARGIN)
            hi = min(hi, next_fixed - MESH_MARGIN)
            if lo >= hi:
                raise InvalidMeshError(f"free mesh point {i + 1} has empty bounds after margin")
            out[i] = (lo, hi)
        return out

    def _bounds(self):
        p = self.problem
        lo = np.full(self.n, -np.inf)
        hi = np.full(self.n, np.inf)
        ulo, uhi = p.control_bounds()
        ci = self.vars.control_index
        for k in range(self.K):
            for j in self.ctrl_local:
                lo[ci[k, j]] = ulo
                hi[ci[k, j]] = uhi
        self.mesh_bounds = self._mesh_bounds()
        if self.diagnostic:
            lo[self.vars.alpha_index] = MESH_MARGIN / 2
            hi[self.vars.alpha_index] = 1.0
        else:
            for i, (a, b) in self.mesh_bounds.items():
                lo[self.vars.mesh_index[i]] = a
                hi[self.vars.mesh_index[i]] = b
        if self.vars.t0_index is not None:
            lo[self.vars.t0_index], hi[self.vars.t0_index] = p.t0
        if self.vars.tf_index is not None:
            lo[self.vars.tf_index], hi[self.vars.tf_index] = p.tf
        return lo, hi

    def _build_points(self):
        sc, K = self.scheme, self.K
        N = sc.n
        lg = self.method.family is RuleKind.LG
        self.points: list[_Point] = []
        self.colloc_local = list(sc.colloc)
        for k in range(K):
            for j in sc.colloc:
                w = sc.weights[j - 1] if lg else sc.weights[j]
                self.points.append(_Point(k, int(j), float(w), None, None))
            if self.method is Method.MLG:
                self.points.append(_Point(k, 0, 0.0, None, None))
                self.points.append(_Point(k, N + 1, 0.0, None, None))
            elif self.method is Method.MLGR:
                self.points.append(_Point(k, N, 0.0, None, None))

    def _build_constraints(self):
        p, sc, K = self.problem, self.scheme, self.K
        N, ns, nv, nu = sc.n, p.n_state, p.n_v, p.n_u
        lg = self.method.family is RuleKind.LG
        blocks, shapes = {}, {}
        pos = 0

        def add(name, count, shape):
            nonlocal pos
            blocks[name] = slice(pos, pos + count)
            shapes[name] = shape
            pos += count

        add("defects", K * N * ns, (K, N, ns))
        if lg:
            add("closures", K * ns, (K, ns))
        n_end = {Method.MLG: 2, Method.MLGR: 1}.get(self.method, 0)
        if n_end:
            add("endpoint", K * n_end * nv, (K, n_end, nv))
        add("boundary", p.n_b, (p.n_b,))
        fixed_mesh = []
        if self.diagnostic:
            add("mesh_sum", 1, (1,))
            fixed_mesh = [i for i in range(K - 1) if not self.mesh.is_free(i)]
            if fixed_mesh:
                add("mesh_fixed", len(fixed_mesh), (len(fixed_mesh),))
        m_E = pos
        n_ctrl_nodes = len(self.ctrl_local)
        if p.n_c:
            add("path", K * n_ctrl_nodes * p.n_c, (K, n_ctrl_nodes, p.n_c))
        order_pairs = []
        if not self.diagnostic:
            free = self.mesh.free
            for a, b in zip(free, free[1:]):
                if all(not self.mesh.is_free(q) for q in range(a + 1, b)) and b == a + 1:
                    if self.mesh_bounds[a][1] > self.mesh_bounds[b][0] - 2 * MESH_MARGIN:
                        order_pairs.append((a, b))
            if order_pairs:
                add("mesh_order", len(order_pairs), (len(order_pairs),))
        free_diag = []
        if self.diagnostic:
            free_diag = self.mesh.free
            if free_diag:
                add("mesh_bounds", 2 * len(free_diag), (len(free_diag), 2))
        if self.vars.t0_index is not None and self.vars.tf_index is not None:
            add("time_gap", 1, (1,))
        self.cons = ConstraintLayout(m_E, pos - m_E, blocks, shapes)
        self.order_pairs = order_pairs
        self.fixed_mesh = fixed_mesh
        self.free_diag = free_diag
        # row bookkeeping for points
        dstart = blocks["defects"].start
        ci = 0
        for pt in self.points:
            if pt.weight > 0:
                pt.defect_row = dstart + ((pt.k * N) + (self.colloc_local.index(pt.j))) * ns
            else:
                slot = 0 if (self.method is Method.MLGR or pt.j == 0) else 1
                pt.endpoint_row = blocks["endpoint"].start + (pt.k * n_end + slot) * nv
            ci += 1

    @property
    def m_E(self) -> int:
        return self.cons.m_E

    @property
    def m_I(self) -> int:
        return self.cons.m_I

    # -- time and mesh scalings --------------------------------------------------

    def times(self, z):
        p = self.problem
        t0 = z[self.vars.t0_index] if self.vars.t0_index is not None else float(p.t0)
        tf = z[self.vars.tf_index] if self.vars.tf_index is not None else float(p.tf)
        return float(t0), float(tf)

    def mesh_points(self, z) -> np.ndarray:
        if self.diagnostic:
            a = z[self.vars.alpha_index]
            return np.concatenate([[-1.0], -1.0 + 2.0 * np.cumsum(a)])
        T = [-1.0]
        for i, pt in enumerate(self.mesh.points):
            T.append(float(z[self.vars.mesh_index[i]]) if self.mesh.is_free(i) else float(pt))
        T.append(1.0)
        return np.asarray(T)

    def alphas(self, z) -> np.ndarray:
        if self.diagnostic:
            return np.asarray(z[self.vars.alpha_index], float).copy()
        return np.diff(self.mesh_points(z)) / 2.0

    def _sigma(self, z, k):
        """sigma_k, its gradient entries and its (upper) Hessian entries."""
        t0, tf = self.times(z)
        s = 0.5 * (tf - t0)
        v = self.vars
        if self.diagnostic:
            a = float(z[v.alpha_index[k]])
            da = [(int(v.alpha_index[k]), 1.0)]
        else:
            T = self.mesh_points(z)
            a = 0.5 * (T[k + 1] - T[k])
            da = []
            if k >= 1 and v.mesh_index[k - 1] is not None:
                da.append((v.mesh_index[k - 1], -0.5))
            if k < self.K - 1 and v.mesh_index[k] is not None:
                da.append((v.mesh_index[k], 0.5))
        ds = []
        if v.t0_index is not None:
            ds.append((v.t0_index, -0.5))
        if v.tf_index is not None:
            ds.append((v.tf_index, 0.5))
        grad = [(i, a * d) for i, d in ds] + [(i, s * d) for i, d in da]
        hess = [(i, j, di * dj) for i, di in ds for j, dj in da]
        return s * a, grad, hess

    # -- per-node access -----------------------------------------------------------

    def _y_index(self, k, j) -> np.ndarray:
        v = self.vars
        return np.concatenate([v.state_index[v.node_of[k, j]], v.control_index[k, j]])

    def _support_index(self, k) -> np.ndarray:
        """State indices of the support nodes of interval k, shape (N+1, n_state)."""
        v = self.vars
        return v.state_index[v.node_of[k, : self.scheme.n + 1]]

    def endpoint_index(self) -> np.ndarray:
        """Variable indices of ``[x0, v0, xf, vf, t0, tf]`` (-1 for fixed times)."""
        v = self.vars
        return np.concatenate(
            [
                v.state_index[0],
                v.state_index[-1],
                [-1 if v.t0_index is None else v.t0_index, -1 if v.tf_index is None else v.tf_index],
            ]
        )

    def endpoint_vector(self, z) -> np.ndarray:
        t0, tf = self.times(z)
        v = self.vars
        return np.concatenate([z[v.state_index[0]], z[v.state_index[-1]], [t0, tf]])

    # -- callbacks -----------------------------------------------------------------

    def objective(self, z) -> float:
        z = np.asarray(z, float)
        p = self.problem
        val = p.endpoint_cost(self.endpoint_vector(z))
        if p.lagrange is not None:
            for pt in self.points:
                if pt.weight > 0:
                    sig = self._sigma(z, pt.k)[0]
                    val += sig * pt.weight * p.running_cost(z[self._y_index(pt.k, pt.j)])
        return float(val)

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, float)
        p = self.problem
        g = np.zeros(self.n)
        self._scatter_endpoint(g, p.endpoint_cost_grad(self.endpoint_vector(z)))
        if p.lagrange is not None:
            for pt in self.points:
                if pt.weight > 0:
                    sig, sg, _ = self._sigma(z, pt.k)
                    yi = self._y_index(pt.k, pt.j)
                    y = z[yi]
                    g[yi] += sig * pt.weight * p.running_cost_grad(y)
                    Lval = p.running_cost(y)
                    for i, d in sg:
                        g[i] += d * pt.weight * Lval
        return g

    def _scatter_endpoint(self, out, grad_e):
        idx = self.endpoint_index()
        keep = idx >= 0
        np.add.at(out, idx[keep], np.asarray(grad_e)[keep])

    def _evaluate(self, z, want_jac):
        key = z.tobytes()
        if key == self._cache_key and (self._cache_val[1] is not None or not want_jac):
            return self._cache_val
        out = self._assemble(z, want_jac)
        self._cache_key, self._cache_val = key, out
        return out

    def constraints(self, z) -> np.ndarray:
        return self._evaluate(np.asarray(z, float), False)[0].copy()

    def jacobian(self, z) -> np.ndarray:
        return self._evaluate(np.asarray(z, float), True)[1].copy()

    def _point_indices(self):
        """Index arrays per point, computed once."""
        if getattr(self, "_pidx", None) is None:
            p, ns, nx, nv = self.problem, self.problem.n_state, self.problem.n_x, self.problem.n_v
            B = self.cons.blocks
            out = []
            for pt in self.points:
                yi = self._y_index(pt.k, pt.j)
                sup = self._support_index(pt.k)
                if pt.weight > 0:
                    rows = np.arange(pt.defect_row, pt.defect_row + ns)
                    sup_cols = sup
                else:
                    rows = np.arange(pt.endpoint_row, pt.endpoint_row + nv)
                    sup_cols = sup[:, nx:]
                crow = None
                if pt.weight > 0 and "closures" in B:
                    crow = np.arange(B["closures"].start + pt.k * ns, B["closures"].start + (pt.k + 1) * ns)
                out.append((yi, sup, rows, sup_cols, crow))
            self._pidx = out
        return self._pidx

    def _assemble(self, z, want_jac=True):
        p, sc = self.problem, self.scheme
        N, ns, nx = sc.n, p.n_state, p.n_x
        m = self.cons.m
        c = np.zeros(m)
        J = np.zeros((m, self.n)) if want_jac else None
        B = self.cons.blocks
        Dt = sc.Dtilde
        sigmas = [self._sigma(z, k) for k in range(self.K)]
        for pt, (yi, sup, rows, sup_cols, crow) in zip(self.points, self._point_indices()):
            j = pt.j
            sig, sg, _ = sigmas[pt.k]
            y = z[yi]
            f = p.dynamics(y)
            Jf = p.dynamics_jac(y) if want_jac else None
            if pt.weight > 0:
                c[rows] = Dt[j] @ z[sup] - sig * f
                if crow is not None:
                    c[crow] -= sig * pt.weight * f
            else:
                f = f[nx:]
                c[rows] = Dt[j] @ z[sup_cols] - sig * f
                if want_jac:
                    Jf = Jf[nx:]
            if not want_jac:
                continue
            for q in range(N + 1):
                J[rows, sup_cols[q]] += Dt[j, q]
            J[rows[:, None], yi] -= sig * Jf
            for i, d in sg:
                J[rows, i] -= d * f
            if crow is not None:
                J[crow[:, None], yi] -= sig * pt.weight * Jf
                for i, d in sg:
                    J[crow, i] -= d * pt.weight * f
        if "closures" in B:
            v = self.vars
            for k in range(self.K):
                crow = np.arange(B["closures"].start + k * ns, B["closures"].start + (k + 1) * ns)
                i0 = v.state_index[v.node_of[k, 0]]
                i1 = v.state_index[v.node_of[k, N + 1]]
                c[crow] += z[i1] - z[i0]
                if want_jac:
                    J[crow, i1] += 1.0
                    J[crow, i0] -= 1.0
        if p.n_b:
            e = self.endpoint_vector(z)
            rows = np.arange(B["boundary"].start, B["boundary"].stop)
            c[rows] = p.boundary_values(e)
            if want_jac:
                Jb = p.boundary_jacobian(e)
                idx = self.endpoint_index()
                for col in range(len(idx)):
                    if idx[col] >= 0:
                        J[rows, idx[col]] += Jb[:, col]
        if self.diagnostic:
            ai = self.vars.alpha_index
            r = B["mesh_sum"].start
            c[r] = z[ai].sum() - 1.0
            if want_jac:
                J[r, ai] = 1.0
            if self.fixed_mesh:
                T = self.mesh_points(z)
                for q, i in enumerate(self.fixed_mesh):
                    r = B["mesh_fixed"].start + q
                    c[r] = T[i + 1] - float(self.mesh.points[i])
                    if want_jac:
                        J[r, ai[: i + 1]] = 2.0
        if p.n_c:
            r = B["path"].start
            ci = self.vars.control_index
            for k in range(self.K):
                for j in self.ctrl_local:
                    rows = np.arange(r, r + p.n_c)
                    c[rows] = p.path_values(z[ci[k, j]])
                    if want_jac:
                        J[rows[:, None], ci[k, j]] = p.path_jacobian(z[ci[k, j]])
                    r += p.n_c
        if self.order_pairs:
            mi = self.vars.mesh_index
            for q, (a, b) in enumerate(self.order_pairs):
                r = B["mesh_order"].start + q
                c[r] = z[mi[a]] - z[mi[b]] + 2 * MESH_MARGIN
                if want_jac:
                    J[r, mi[a]] = 1.0
                    J[r, mi[b]] = -1.0
        if self.free_diag:
            T = self.mesh_points(z)
            ai = self.vars.alpha_index
            for q, i in enumerate(self.free_diag):
                lo, hi = self.mesh_bounds[i]
                r = B["mesh_bounds"].start + 2 * q
                c[r] = lo - T[i + 1]
                c[r + 1] = T[i + 1] - hi
                if want_jac:
                    J[r, ai[: i + 1]] = -2.0
                    J[r + 1, ai[: i + 1]] = 2.0
        if "time_gap" in B:
            r = B["time_gap"].start
            c[r] = z[self.vars.t0_index] - z[self.vars.tf_index] + TIME_GAP
            if want_jac:
                J[r, self.vars.t0_index] = 1.0
                J[r, self.vars.tf_index] = -1.0
        return c, J

    def hessian(self, z, obj_factor, lam) -> np.ndarray:
        """Hessian of ``obj_factor * f + lam . c`` (solver sign convention)."""
        z = np.asarray(z, float)
        lam = np.asarray(lam, float)
        p, sc = self.problem, self.scheme
        nx, nv, ns = p.n_x, p.n_v, p.n_state
        H = np.zeros((self.n, self.n))
        B = self.cons.blocks
        lg = self.method.family is RuleKind.LG
        for pt in self.points:
            k = pt.k
            G = np.zeros(ns)
            if pt.weight > 0:
                G -= lam[pt.defect_row : pt.defect_row + ns]
                if lg:
                    cr = B["closures"].start + k * ns
                    G -= pt.weight * lam[cr : cr + ns]
                cL = obj_factor * pt.weight if p.lagrange is not None else 0.0
            else:
                G[nx:] -= lam[pt.endpoint_row : pt.endpoint_row + nv]
                cL = 0.0

            def grad_phi(y, G=G, cL=cL):
                out = p.dynamics_jac(y).T @ G
                if cL:
                    out = out + cL * p.running_cost_grad(y)
                return out

            yi = self._y_index(k, pt.j)
            y = z[yi]
            gphi = grad_phi(y)
            hphi = fd_derivatives(grad_phi, y)
            hphi = 0.5 * (hphi + hphi.T)
            sig, sg, sh = self._sigma(z, k)
            H[np.ix_(yi, yi)] += sig * hphi
            if sg or sh:
                phi = G @ p.dynamics(y) + (cL * p.running_cost(y) if cL else 0.0)
                for i, d in sg:
                    H[yi, i] += d * gphi
                    H[i, yi] += d * gphi
                for i, jj, d in sh:
                    H[i, jj] += d * phi
                    H[jj, i] += d * phi
        # endpoint functions
        lam_b = lam[B["boundary"]] if p.n_b else None
        if p.mayer is not None or p.n_b:

            def grad_end(e):
                out = obj_factor * p.endpoint_cost_grad(e)
                if p.n_b:
                    out = out + p.boundary_jacobian(e).T @ lam_b
                return out

            He = fd_derivatives(grad_end, self.endpoint_vector(z))
            He = 0.5 * (He + He.T)
            idx = self.endpoint_index()
            keep = np.where(idx >= 0)[0]
            H[np.ix_(idx[keep], idx[keep])] += He[np.ix_(keep, keep)]
        if p.n_c:
            r = B["path"].start
            ci = self.vars.control_index
            for k in range(self.K):
                for j in self.ctrl_local:
                    lc = lam[r : r + p.n_c]
                    if np.any(lc):
                        Hc = fd_derivatives(lambda u, lc=lc: p.path_jacobian(u).T @ lc, z[ci[k, j]])
                        H[np.ix_(ci[k, j], ci[k, j])] += 0.5 * (Hc + Hc.T)
                    r += p.n_c
        return H

    def to_spec(self) -> NlpSpec:
        return NlpSpec(
            n=self.n,
            lower=self.lower,
            upper=self.upper,
            objective=self.objective,
            gradient=self.gradient,
            m_E=self.m_E,
            m_I=self.m_I,
            constraints=self.constraints,
            jacobian=self.jacobian,
            hessian=self.hessian,
        )

    # -- point construction --------------------------------------------------------

    def node_times(self, z):
        """Normalized times T of every local node, shape (K, n_local)."""
        T = self.mesh_points(z)
        taus = self.scheme.taus
        return np.array([0.5 * (T[k + 1] - T[k]) * taus + 0.5 * (T[k + 1] + T[k]) for k in range(self.K)])

    def pack(self, states, controls, mesh_points=None, t0=None, tf=None) -> np.ndarray:
        """Assemble z from ``states(k, j) -> y`` and ``controls(k, j) -> u`` callables."""
        z = np.zeros(self.n)
        v = self.vars
        if mesh_points is not None:
            T = np.asarray(mesh_points, float)
            if self.diagnostic:
                z[v.alpha_index] = np.diff(T) / 2
            else:
                for i, mi in enumerate(v.mesh_index):
                    if mi is not None:
                        z[mi] = T[i + 1]
        if v.t0_index is not None:
            z[v.t0_index] = t0
        if v.tf_index is not None:
            z[v.tf_index] = tf
        for k in range(self.K):
            for j in range(self.scheme.n_local):
                z[v.state_index[v.node_of[k, j]]] = states(k, j)
                if v.control_index[k, j, 0] >= 0:
                    z[v.control_index[k, j]] = controls(k, j)
        return z


def transcribe(problem: BolzaProblem, mesh: Mesh, scheme: CollocationScheme, method, diagnostic: bool = False) -> TranscribedNlp:
    method = Method(method.lower() if isinstance(method, str) else method)
    if mesh.K < 1:
        raise InvalidMeshError("K must be at least 1")
    if scheme.kind is not method.family:
        raise ValueError(f"method {method.value} needs a {method.family.value} scheme, got {scheme.kind.value}")
    for i in mesh.free:
        lo, hi = mesh.points[i]
        if not (-1.0 < lo < hi < 1.0):
            raise InvalidMeshError(f"free mesh point {i + 1} has invalid bounds ({lo}, {hi})")
    fixed = [-1.0] + [float(p) for i, p in enumerate(mesh.points) if not mesh.is_free(i)] + [1.0]
    if np.any(np.diff(fixed) <= 0):
        raise InvalidMeshError("fixed mesh points must be strictly increasing inside (-1, 1)")
    return TranscribedNlp(problem, mesh, scheme, method, diagnostic)


def _free_guess(spec, hint, name):
    if hint is not None:
        return float(hint)
    lo, hi = spec
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError(f"{name} is free and unbounded; supply a guess")
    return 0.5 * (lo + hi)


def initial_guess(nlp: TranscribedNlp, strategy: str = "linear") -> np.ndarray:
    """Deterministic starting point.

    States are interpolated linearly in T between the problem's guess
    endpoints, controls are 0 clipped into bounds, free mesh points sit at
    their hint or bound midpoint and free times at their hint or midpoint.
    """
    if strategy != "linear":
        raise ValueError(f"unknown guess strategy {strategy!r}")
    p = nlp.problem
    ns = p.n_state
    a = np.zeros(ns) if p.guess_start is None else np.asarray(p.guess_start, float)
    b = a if p.guess_end is None else np.asarray(p.guess_end, float)
    T = nlp.mesh.guess_points()
    for i, (lo, hi) in nlp.mesh_bounds.items():
        T[i + 1] = min(max(T[i + 1], lo), hi)
    t0 = _free_guess(p.t0, p.t0_guess, "t0") if isinstance(p.t0, (tuple, list)) else float(p.t0)
    tf = _free_guess(p.tf, p.tf_guess, "tf") if isinstance(p.tf, (tuple, list)) else float(p.tf)
    Tn = np.array([0.5 * (T[k + 1] - T[k]) * nlp.scheme.taus + 0.5 * (T[k + 1] + T[k]) for k in range(nlp.K)])
    ulo, uhi = p.control_bounds()
    u0 = np.clip(np.zeros(p.n_u), ulo, uhi)
    z = nlp.pack(lambda k, j: a + 0.5 * (Tn[k, j] + 1.0) * (b - a), lambda k, j: u0, T, t0, tf)
    return np.clip(z, nlp.lower, nlp.upper)


@dataclass
class IntervalSolution:
    taus: np.ndarray
    T: np.ndarray  # normalized time of each local node
    t: np.ndarray  # physical time
    X: np.ndarray  # (n_local, n_x)
    V: np.ndarray  # (n_local, n_v)
    U: np.ndarray  # (n_local, n_u), NaN where no control variable exists


@dataclass
class Solution:
    method: Method
    nlp: TranscribedNlp
    result: NlpResult
    z: np.ndarray
    objective: float
    t0: float
    tf: float
    mesh_points: np.ndarray
    alpha: np.ndarray
    intervals: list
    multipliers: dict  # solver-sign row multipliers keyed by constraint block
    control_bound_multipliers: np.ndarray  # (K, n_local, n_u) z_L - z_U, NaN where absent
    extra: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return self.result.status

    @property
    def switch_times(self) -> np.ndarray:
        return self.mesh_points[1:-1]

    @property
    def K(self) -> int:
        return len(self.intervals)


def extract_solution(nlp: TranscribedNlp, result: NlpResult, allow_failed: bool = False) -> Solution:
    """Unpack a solver result into per-interval node arrays and keyed multipliers."""
    if not result.success and not allow_failed:
        raise SolutionError(f"solver status {result.status}: {result.message}")
    z = np.asarray(result.z, float)
    p, v = nlp.problem, nlp.vars
    nx = p.n_x
    t0, tf = nlp.times(z)
    T = nlp.mesh_points(z)
    Tn = nlp.node_times(z)
    intervals = []
    for k in range(nlp.K):
        Y = z[v.state_index[v.node_of[k]]]
        U = np.full((nlp.scheme.n_local, p.n_u), np.nan)
        has = v.control_index[k, :, 0] >= 0
        U[has] = z[v.control_index[k][has]]
        intervals.append(
            IntervalSolution(
                taus=nlp.scheme.taus.copy(),
                T=Tn[k],
                t=t0 + 0.5 * (tf - t0) * (Tn[k] + 1.0),
                X=Y[:, :nx],
                V=Y[:, nx:],
                U=U,
            )
        )
    lam = np.concatenate([result.lambda_E, result.lambda_I])
    mult = {name: lam[sl].reshape(nlp.cons.shapes[name]) for name, sl in nlp.cons.blocks.items()}
    zb = result.z_L - result.z_U
    cbm = np.full(v.control_index.shape, np.nan)
    has = v.control_index >= 0
    cbm[has] = zb[v.control_index[has]]
    return Solution(
        method=nlp.method,
        nlp=nlp,
        result=result,
        z=z,
        objective=float(result.f),
        t0=t0,
        tf=tf,
        mesh_points=T,
        alpha=nlp.alphas(z),
        intervals=intervals,
        multipliers=mult,
        control_bound_multipliers=cbm,
    )


def approximate_control(solution: Solution, k: int, tau) -> np.ndarray:
    """Control implied by the state interpolant's derivative in interval ``k`` (1-based).

    Requires ``fv`` affine in ``u`` with a square, nonsingular control
    Jacobian.  Returns shape ``(len(tau), n_u)``.
    """
    nlp = solution.nlp
    p, sc = nlp.problem, nlp.scheme
    if p.n_v != p.n_u:
        raise UnsupportedProblemError("control reconstruction needs n_v == n_u")
    iv = solution.intervals[k - 1]
    tau = np.atleast_1d(np.asarray(tau, float))
    sup = sc.support
    n_sup = len(sup)
    Y = np.hstack([iv.X, iv.V])[:n_sup]
    vals = lagrange_eval_matrix(sup, tau) @ Y
    ders = lagrange_diff_matrix(sup, tau) @ Y[:, p.n_x :]
    sig = 0.5 * (solution.tf - solution.t0) * solution.alpha[k - 1]
    out = np.empty((len(tau), p.n_u))
    for q in range(len(tau)):
        x, vv = vals[q, : p.n_x], vals[q, p.n_x :]
        u0 = np.zeros(p.n_u)
        f0 = np.asarray(p.fv(x, vv, u0), float)
        Bu = fd_derivatives(lambda u: p.fv(x, vv, u), u0)
        if np.linalg.matrix_rank(Bu) < p.n_u:
            raise UnsupportedProblemError("fv is not invertible in u")
        u = np.linalg.solve(Bu, ders[q] / sig - f0)
        f1 = np.asarray(p.fv(x, vv, u), float)
        if not np.allclose(f1, f0 + Bu @ u, rtol=1e-6, atol=1e-8):
            raise UnsupportedProblemError("fv is not affine in u")
        out[q] = u
    return out
