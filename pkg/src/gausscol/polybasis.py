"""Gaussian quadrature rules, Lagrange bases and differentiation matrices.

All matrices are dense float64 arrays and are pure functions of the node
count and rule kind.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "RuleKind",
    "QuadratureRule",
    "CollocationScheme",
    "legendre_eval",
    "lg_rule",
    "lgr_rule",
    "barycentric_weights",
    "lagrange_eval_matrix",
    "lagrange_diff_matrix",
    "ddag_matrix",
    "build_scheme",
    "identity_residuals",
    "endpoint_integration_residuals",
]

_NEWTON_MAXITER = 100
_RESIDUAL_TOL = 1e-14


class RuleKind(str, enum.Enum):
    LG = "LG"
    LGR = "LGR"


@dataclass(frozen=True)
class QuadratureRule:
    kind: RuleKind
    n: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class CollocationScheme:
    """Nodes, weights and matrices for one mesh interval.

    ``taus`` lists every local node of an interval in order: for LG these are
    ``-1``, the N Gauss nodes and ``+1``; for LGR they are the N Radau nodes
    (starting at ``-1``) followed by ``+1``.  The state polynomial lives on
    ``support``.  ``Dtilde`` holds the derivative of the support basis at every
    entry of ``taus`` and ``D`` is the subset of rows at the collocation
    nodes.

    ``L`` (derivatives of the basis on ``-1, nodes, +1`` at the Gauss nodes,
    shape (N+2, N)) and ``Ddag`` (the adjoint difference operator) exist only
    for the LG family.
    """

    rule: RuleKind
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    support: np.ndarray
    taus: np.ndarray
    D: np.ndarray
    Dtilde: np.ndarray
    L: np.ndarray | None
    Ddag: np.ndarray | None

    @property
    def kind(self) -> RuleKind:
        return self.rule

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def colloc(self) -> np.ndarray:
        """Positions of the collocation nodes inside ``taus``."""
        if self.rule is RuleKind.LG:
            return np.arange(1, self.n + 1)
        return np.arange(self.n)

    @property
    def n_local(self) -> int:
        return len(self.taus)


def legendre_eval(n: int, x):
    """Value and first derivative of the Legendre polynomial P_n at ``x``.

    Uses the Bonnet recurrence for the values and
    ``P'_{k+1} = P'_{k-1} + (2k+1) P_k`` for the derivative, which stays
    well defined at the endpoints.
    """
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    p_prev, p = np.ones_like(x), x.copy()
    dp_prev, dp = np.zeros_like(x), np.ones_like(x)
    if n == 0:
        return p_prev, dp_prev
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        dp_next = dp_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


def _newton_roots(func, x0: np.ndarray) -> np.ndarray:
    x = x0.copy()
    for _ in range(_NEWTON_MAXITER):
        val, der = func(x)
        dx = val / der
        x = x - dx
        if np.all(np.abs(val) <= _RESIDUAL_TOL) or np.all(np.abs(dx) <= 1e-15):
            # one polishing step past convergence
            val, der = func(x)
            return x - val / der
    raise RuntimeError("Newton iteration for quadrature nodes did not converge")


@lru_cache(maxsize=None)
def _lg_cached(n: int) -> QuadratureRule:
    k = np.arange(1, n + 1)
    guess = -np.cos((2 * k - 1) * np.pi / (2 * n))
    x = _newton_roots(lambda t: legendre_eval(n, t), guess).astype(np.longdouble)
    # weights are accurate to ~30 ulp when formed in double; polish and round once
    for _ in range(2):
        val, der = legendre_eval(n, x)
        x = x - val / der
    if n % 2 == 1:
        x[n // 2] = 0.0
    x = 0.5 * (x - x[::-1])  # exact symmetry
    _, dp = legendre_eval(n, x)
    w = 2.0 / ((1.0 - x**2) * dp**2)
    w = 0.5 * (w + w[::-1])
    x, w = x.astype(float), w.astype(float)
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(RuleKind.LG, n, x, w)


def lg_rule(n: int) -> QuadratureRule:
    """Legendre-Gauss nodes (roots of P_N) and weights on (-1, 1)."""
    if n < 1:
        raise ValueError("N must be at least 1")
    return _lg_cached(int(n))


def _radau_poly(n: int):
    def func(t):
        p1, d1 = legendre_eval(n - 1, t)
        p2, d2 = legendre_eval(n, t)
        return p1 + p2, d1 + d2

    return func


@lru_cache(maxsize=None)
def _lgr_cached(n: int) -> QuadratureRule:
    if n == 1:
        x = np.array([-1.0])
    else:
        k = np.arange(1, n)
        guess = -np.cos(2 * np.pi * k / (2 * n - 1))
        x = np.concatenate(([-1.0], _newton_roots(_radau_poly(n), guess))).astype(np.longdouble)
        for _ in range(2):
            val, der = _radau_poly(n)(x[1:])
            x[1:] = x[1:] - val / der
    x = np.asarray(x, dtype=np.longdouble)
    p, _ = legendre_eval(n - 1, x)
    w = (1.0 - x) / (n**2 * p**2)
    w[0] = np.longdouble(2) / n**2
    x, w = x.astype(float), w.astype(float)
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(RuleKind.LGR, n, x, w)


def lgr_rule(n: int) -> QuadratureRule:
    """Legendre-Gauss-Radau nodes (roots of P_{N-1} + P_N, including -1)."""
    if n < 1:
        raise ValueError("N must be at least 1")
    return _lgr_cached(int(n))


def barycentric_weights(support, dtype=float) -> np.ndarray:
    s = np.asarray(support, dtype=dtype)
    diff = s[:, None] - s[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("support points must be distinct")
    return 1.0 / np.prod(diff, axis=1)


def _basis_row(b, s, x):
    """Barycentric basis values at x, or None when x sits on (or numerically at) a node."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t = b / (x - s)
        total = t.sum()
        row = t / total
    if x in s or not np.all(np.isfinite(row)):
        return None
    return row


def lagrange_eval_matrix(support, points, dtype=float) -> np.ndarray:
    """Matrix of basis values ``ell_j(points_i)`` (barycentric second form)."""
    s = np.asarray(support, dtype=dtype)
    p = np.atleast_1d(np.asarray(points, dtype=dtype))
    b = barycentric_weights(s, dtype)
    out = np.empty((len(p), len(s)), dtype=dtype)
    for i, x in enumerate(p):
        row = _basis_row(b, s, x)
        if row is None:
            row = np.zeros(len(s), dtype=dtype)
            row[np.argmin(np.abs(x - s))] = 1.0
        out[i] = row
    return out


def _node_diff_matrix(s, b):
    m = len(s)
    diff = s[:, None] - s[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (b[None, :] / b[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def lagrange_diff_matrix(support, points, dtype=float) -> np.ndarray:
    """Matrix of basis derivatives ``d ell_j / d tau`` at ``points``.

    Rows at support points use the classic barycentric formula.  Elsewhere the
    derivative interpolant is exact, so ``ell_j'(x) = sum_k ell_k(x) D_kj``
    with ``D`` the support-point matrix.  The entry for the support point
    nearest the evaluation point is then replaced by the negative sum of the
    others so each row annihilates constants exactly.  ``dtype`` sets the
    working precision.
    """
    s = np.asarray(support, dtype=dtype)
    p = np.atleast_1d(np.asarray(points, dtype=dtype))
    b = barycentric_weights(s, dtype)
    Ds = _node_diff_matrix(s, b)
    out = np.empty((len(p), len(s)), dtype=dtype)
    for i, x in enumerate(p):
        ell = _basis_row(b, s, x)
        j0 = int(np.argmin(np.abs(x - s)))
        row = Ds[j0].copy() if ell is None else ell @ Ds
        row[j0] = 0.0
        row[j0] = -row.sum()
        out[i] = row
    return out


def ddag_matrix(D, w) -> np.ndarray:
    """Adjoint difference operator built from an LG differentiation matrix.

    ``D`` is N x (N+1) with column 0 belonging to tau=-1; the result acts on
    samples at ``tau_1 .. tau_{N+1}``.
    """
    D = np.asarray(D, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(w)
    if D.shape != (n, n + 1):
        raise ValueError(f"expected D of shape {(n, n + 1)}, got {D.shape}")
    ratio = w[None, :] / w[:, None]  # (i, j) -> w_j / w_i
    core = -ratio * D[:, 1:].T
    last = (ratio * D[:, 1:].T).sum(axis=1)
    return np.column_stack([core, last])


def _refined_nodes(rule: QuadratureRule) -> np.ndarray:
    """One extended-precision Newton step on the double-precision nodes."""
    x = rule.nodes.astype(np.longdouble)
    if rule.kind is RuleKind.LG:
        val, der = legendre_eval(rule.n, x)
        return x - val / der
    if rule.n == 1:
        return x
    val, der = _radau_poly(rule.n)(x[1:])
    return np.concatenate((x[:1], x[1:] - val / der))


@lru_cache(maxsize=None)
def _scheme_cached(n: int, kind: RuleKind) -> CollocationScheme:
    # matrices are formed in extended precision and rounded once
    ext = np.longdouble
    if kind is RuleKind.LG:
        rule = lg_rule(n)
        xe = _refined_nodes(rule)
        sup_e = np.concatenate(([ext(-1)], xe))
        taus_e = np.concatenate((sup_e, [ext(1)]))
        Dtilde = lagrange_diff_matrix(sup_e, taus_e, ext).astype(float)
        D = Dtilde[1 : n + 1].copy()
        L = lagrange_diff_matrix(taus_e, xe, ext).T.astype(float)
        Ddag = ddag_matrix(D, rule.weights)
        support = np.concatenate(([-1.0], rule.nodes))
        taus = np.concatenate((support, [1.0]))
    else:
        rule = lgr_rule(n)
        xe = _refined_nodes(rule)
        sup_e = np.concatenate((xe, [ext(1)]))
        Dtilde = lagrange_diff_matrix(sup_e, sup_e, ext).astype(float)
        D = Dtilde[:n].copy()
        L = None
        Ddag = None
        support = np.concatenate((rule.nodes, [1.0]))
        taus = support.copy()
    for a in (support, taus, D, Dtilde, L, Ddag):
        if a is not None:
            a.flags.writeable = False
    return CollocationScheme(kind, n, rule.nodes, rule.weights, support, taus, D, Dtilde, L, Ddag)


def build_scheme(n: int, kind="LG") -> CollocationScheme:
    if n < 1:
        raise ValueError("N must be at least 1")
    return _scheme_cached(int(n), RuleKind(kind.upper() if isinstance(kind, str) else kind))


def identity_residuals(n: int) -> dict[str, float]:
    """Max-abs residuals of the matrix identities for the N-point LG scheme."""
    sc = build_scheme(n, RuleKind.LG)
    WD = sc.W @ sc.D[:, 1:]
    res = {
        "initial_row_identity": np.max(np.abs(sc.Dtilde[0, 1:] + sc.L[0] @ WD)),
        "final_row_identity": np.max(np.abs(sc.Dtilde[n + 1, 1:] - sc.L[n + 1] @ WD)),
        "row_sum_D": np.max(np.abs(sc.D.sum(axis=1))),
        "row_sum_Dtilde": np.max(np.abs(sc.Dtilde.sum(axis=1))),
        "row_sum_Ddag": np.max(np.abs(sc.Ddag.sum(axis=1))),
    }
    x, w = sc.nodes, sc.weights
    exact = [2.0 / (k + 1) if k % 2 == 0 else 0.0 for k in range(2 * n)]
    res["quadrature"] = max(abs(w @ x**k - e) for k, e in enumerate(exact))
    return {k: float(v) for k, v in res.items()}


def endpoint_integration_residuals(n: int, rng=None, trials: int = 5) -> dict[str, float]:
    """Check the endpoint integration identities for random z of degree <= N-1.

    For the (N+2)-point basis L_j on ``-1, nodes, +1`` the Gauss rule must give
    ``int z L_0' = -z(-1)`` and ``int z L_{N+1}' = z(+1)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    sc = build_scheme(n, RuleKind.LG)
    w = sc.weights
    r0 = r1 = 0.0
    for _ in range(trials):
        coef = rng.standard_normal(n)  # degree n-1
        z = np.polynomial.legendre.legval(sc.nodes, coef)
        zm, zp = np.polynomial.legendre.legval([-1.0, 1.0], coef)
        r0 = max(r0, abs(np.sum(w * z * sc.L[0]) + zm))
        r1 = max(r1, abs(np.sum(w * z * sc.L[n + 1]) - zp))
    return {"initial_integration": float(r0), "final_integration": float(r1)}
