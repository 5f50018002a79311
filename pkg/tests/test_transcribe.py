import dataclasses

import numpy as np
import pytest

from gausscol.bench.oracles import analytic_solution
from gausscol.bench.problems import OPTIMAL_SWITCH_TIMES, TARGET_STATE, lqr_problem, triple_integrator_mesh, triple_integrator_problem
from gausscol.nlpsolve import fd_derivatives
from gausscol.ocp import InvalidMeshError, Mesh
from gausscol.polybasis import RuleKind, build_scheme, lagrange_eval_matrix
from gausscol.transcribe import (
    MESH_MARGIN,
    Method,
    SolutionError,
    UnsupportedProblemError,
    approximate_control,
    extract_solution,
    initial_guess,
    transcribe,
)

METHODS = ["lg", "mlg", "lgr", "mlgr"]


def _nlp(method="mlg", N=3, mesh=None, problem=None, diagnostic=False):
    m = Method(method)
    return transcribe(
        problem or triple_integrator_problem(),
        mesh or triple_integrator_mesh(),
        build_scheme(N, m.family),
        m,
        diagnostic=diagnostic,
    )


def _exact_point(nlp):
    """The analytic optimum sampled at the nodes of a mesh pinned to the true switches."""
    sol = analytic_solution()
    Tn = nlp.node_times(nlp.pack(lambda k, j: 0.0, lambda k, j: 0.0, [-1.0, *OPTIMAL_SWITCH_TIMES, 1.0], 0.0, sol.tf))
    return nlp.pack(
        lambda k, j: sol.state(Tn[k, j])[0],
        lambda k, j: [sol.controls[k]],
        [-1.0, *OPTIMAL_SWITCH_TIMES, 1.0],
        0.0,
        sol.tf,
    )


def _in_bounds_point(nlp, rng):
    lo = np.where(np.isfinite(nlp.lower), nlp.lower, -2.0)
    hi = np.where(np.isfinite(nlp.upper), nlp.upper, 2.0)
    return lo + (hi - lo) * rng.uniform(0.05, 0.95, nlp.n)


# -- counts and layouts ---------------------------------------------------------


def test_mlg_counts():
    nlp = _nlp("mlg")
    assert nlp.n == 57
    assert len(nlp.vars.state_index.ravel()) == 39
    assert nlp.vars.blocks["controls"].stop - nlp.vars.blocks["controls"].start == 15
    sizes = {k: s.stop - s.start for k, s in nlp.cons.blocks.items()}
    assert sizes == {"defects": 27, "closures": 9, "endpoint": 6, "boundary": 6}
    assert nlp.m_E == 48 and nlp.m_I == 0


def test_lg_counts():
    nlp = _nlp("lg")
    # 39 state values + 9 controls + tf + 2 switch times
    assert nlp.n == 51
    assert nlp.m_E == 42


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("diagnostic", [False, True])
def test_layouts_partition(method, diagnostic):
    nlp = _nlp(method, diagnostic=diagnostic)
    nlp.vars.check()
    rows = np.zeros(nlp.cons.m, dtype=int)
    for sl in nlp.cons.blocks.values():
        rows[sl] += 1
    assert np.all(rows == 1)
    assert len(nlp.constraints(initial_guess(nlp))) == nlp.m_E + nlp.m_I


@pytest.mark.parametrize("method", METHODS)
def test_mesh_points_share_state_variables(method):
    nlp = _nlp(method)
    v = nlp.vars
    last = nlp.scheme.n_local - 1
    for k in range(nlp.K - 1):
        np.testing.assert_array_equal(v.state_index[v.node_of[k, last]], v.state_index[v.node_of[k + 1, 0]])


def test_scheme_mismatch_and_bad_mesh_rejected():
    p = triple_integrator_problem()
    with pytest.raises(ValueError):
        transcribe(p, triple_integrator_mesh(), build_scheme(3, RuleKind.LGR), "mlg")
    with pytest.raises(InvalidMeshError):
        transcribe(p, Mesh(((-0.5, 1.2),)), build_scheme(3, RuleKind.LG), "mlg")


def test_free_mesh_bounds_keep_margin():
    nlp = _nlp("mlg", mesh=Mesh(((-0.9999, 0.0), (-0.5, 0.9999))))
    lo, hi = nlp.mesh_bounds[0]
    assert lo == pytest.approx(-1.0 + MESH_MARGIN)
    assert nlp.mesh_bounds[1][1] == pytest.approx(1.0 - MESH_MARGIN)
    # overlapping ranges get an ordering row
    assert "mesh_order" in nlp.cons.blocks


# -- initial guess --------------------------------------------------------------


def test_guess_interpolates_states_linearly():
    nlp = _nlp("mlg")
    z = initial_guess(nlp)
    Tn = nlp.node_times(z)
    v = nlp.vars
    for k in range(nlp.K):
        for j in range(nlp.scheme.n_local):
            y = z[v.state_index[v.node_of[k, j]]]
            np.testing.assert_allclose(y, 0.5 * (Tn[k, j] + 1) * TARGET_STATE, atol=1e-15)
    assert z[v.tf_index] == pytest.approx(10.5)
    np.testing.assert_allclose(nlp.mesh_points(z)[1:-1], OPTIMAL_SWITCH_TIMES)


def test_guess_at_midpoint_mesh_node():
    nlp = _nlp("lgr", mesh=Mesh((0.0,)))
    z = initial_guess(nlp)
    v = nlp.vars
    assert z[v.state_index[v.node_of[1, 0]]][0] == 13 / 8


def test_guess_respects_bounds_and_fixed_values():
    nlp = _nlp("mlg", problem=triple_integrator_problem(tf_bounds=(7.0, 7.0)), mesh=Mesh(((0.3, 0.5), (0.6, 0.9))))
    z = initial_guess(nlp)
    assert z[nlp.vars.tf_index] == 7.0
    assert np.all(z >= nlp.lower) and np.all(z <= nlp.upper)
    assert nlp.mesh_points(z)[1] == pytest.approx(0.4)


def test_guess_needs_hint_for_unbounded_time():
    p = dataclasses.replace(triple_integrator_problem(), tf=(1.0, np.inf))
    with pytest.raises(ValueError):
        initial_guess(_nlp("mlg", problem=p))
    p = dataclasses.replace(p, tf_guess=6.0)
    assert initial_guess(_nlp("mlg", problem=p))[-1] == 6.0


# -- assembly -------------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_exact_solution_satisfies_rows_on_aligned_mesh(method):
    mesh = Mesh(tuple(float(t) for t in OPTIMAL_SWITCH_TIMES))
    nlp = _nlp(method, mesh=mesh)
    c = nlp.constraints(_exact_point(nlp))
    assert np.max(np.abs(c[: nlp.m_E])) <= 1e-10
    assert nlp.objective(_exact_point(nlp)) == pytest.approx(7.0, abs=1e-14)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("diagnostic", [False, True])
def test_jacobian_matches_finite_differences(method, diagnostic):
    nlp = _nlp(method, diagnostic=diagnostic)
    rng = np.random.default_rng(7)
    for _ in range(2):
        z = _in_bounds_point(nlp, rng)
        J = nlp.jacobian(z)
        Jfd = fd_derivatives(nlp.constraints, z)
        assert np.max(np.abs(J - Jfd)) <= 1e-6 * max(1.0, np.max(np.abs(Jfd)))
        np.testing.assert_allclose(nlp.gradient(z), fd_derivatives(nlp.objective, z), atol=1e-7)


@pytest.mark.parametrize("method", METHODS)
def test_exact_hessian_matches_finite_differences(method):
    nlp = _nlp(method, problem=lqr_problem(), mesh=Mesh((0.1,)))
    rng = np.random.default_rng(3)
    z = _in_bounds_point(nlp, rng)
    lam = rng.standard_normal(nlp.m_E + nlp.m_I)
    H = nlp.hessian(z, 0.7, lam)
    Hfd = fd_derivatives(lambda q: 0.7 * nlp.gradient(q) + nlp.jacobian(q).T @ lam, z)
    np.testing.assert_allclose(H, 0.5 * (Hfd + Hfd.T), atol=1e-6)


def test_exact_hessian_with_free_mesh_and_time():
    nlp = _nlp("mlg")
    rng = np.random.default_rng(5)
    z = _in_bounds_point(nlp, rng)
    lam = rng.standard_normal(nlp.m_E)
    H = nlp.hessian(z, 1.0, lam)
    Hfd = fd_derivatives(lambda q: nlp.gradient(q) + nlp.jacobian(q).T @ lam, z)
    np.testing.assert_allclose(H, 0.5 * (Hfd + Hfd.T), atol=1e-6)


def test_free_mesh_point_touches_adjacent_intervals_only():
    nlp = _nlp("mlg")
    z = _in_bounds_point(nlp, np.random.default_rng(11))
    J = nlp.jacobian(z)
    N, ns = nlp.scheme.n, nlp.problem.n_state
    defects = nlp.cons.blocks["defects"].start
    per = N * ns
    first, second = nlp.vars.mesh_index
    # the first free point separates intervals 1 and 2; interval 3's rows ignore it
    assert np.all(J[defects + 2 * per : defects + 3 * per, first] == 0.0)
    assert np.all(J[defects + 0 * per : defects + 1 * per, second] == 0.0)
    assert np.any(J[defects : defects + per, first] != 0.0)
    assert np.any(J[defects + per : defects + 2 * per, first] != 0.0)


def test_diagnostic_mode_adds_mesh_sum_row():
    nlp = _nlp("mlg", diagnostic=True)
    assert nlp.vars.alpha_index is not None and "mesh_sum" in nlp.cons.blocks
    z = initial_guess(nlp)
    np.testing.assert_allclose(nlp.alphas(z).sum(), 1.0, atol=1e-15)
    assert abs(nlp.constraints(z)[nlp.cons.blocks["mesh_sum"]][0]) <= 1e-15


# -- solved instances -----------------------------------------------------------


def test_extracted_controls_bracket_first_switch(mlg_run):
    sol = mlg_run.solution
    N = mlg_run.nlp.scheme.n
    assert sol.intervals[0].U[N + 1, 0] == pytest.approx(0.5, abs=1e-4)
    assert sol.intervals[1].U[0, 0] == pytest.approx(-0.5, abs=1e-4)
    assert sol.switch_times[0] == pytest.approx(-5 / 7, abs=1e-4)
    assert sol.tf == pytest.approx(7.0, abs=1e-6)


def test_state_continuity_is_exact(mlg_run):
    iv = mlg_run.solution.intervals
    for a, b in zip(iv, iv[1:]):
        np.testing.assert_array_equal(a.X[-1], b.X[0])
        np.testing.assert_array_equal(a.V[-1], b.V[0])


def test_closure_row_agrees_with_interpolant(lg_run):
    # X' is degree N-1, so Gauss quadrature of the interpolant is exact
    sol = lg_run.solution
    sc = lg_run.nlp.scheme
    for iv in sol.intervals:
        Y = np.hstack([iv.X, iv.V])
        end = lagrange_eval_matrix(sc.support, [1.0]) @ Y[: sc.n + 1]
        np.testing.assert_allclose(end[0], Y[-1], atol=1e-7)


def test_extract_refuses_failed_status(mlg_run):
    failed = dataclasses.replace(mlg_run.result, status="max_iter")
    with pytest.raises(SolutionError):
        extract_solution(mlg_run.nlp, failed)
    assert extract_solution(mlg_run.nlp, failed, allow_failed=True).status == "max_iter"


def _dense_control(run):
    tau = np.linspace(-1, 1, 401)
    return np.concatenate([approximate_control(run.solution, k, tau)[:, 0] for k in (1, 2, 3)])


def test_standard_lg_reconstruction_violates_bounds(lg_run):
    assert np.max(np.abs(_dense_control(lg_run))) > 0.5 + 1e-2


def test_modified_lg_reconstruction_within_bounds(mlg_run):
    assert np.max(np.abs(_dense_control(mlg_run))) <= 0.5 + 1e-4


@pytest.mark.parametrize("fixture", ["lg_run", "mlg_run"])
def test_reconstruction_matches_discrete_control_at_nodes(fixture, request):
    run = request.getfixturevalue(fixture)
    sc = run.nlp.scheme
    for k, iv in enumerate(run.solution.intervals, start=1):
        u = approximate_control(run.solution, k, sc.nodes)[:, 0]
        np.testing.assert_allclose(u, iv.U[sc.colloc, 0], atol=1e-6)


def test_reconstruction_rejects_non_invertible_dynamics(mlg_run):
    sol = mlg_run.solution
    p = dataclasses.replace(sol.nlp.problem, fv=lambda x, v, u: np.array([0.0 * u[0]]))
    nlp = dataclasses.replace(sol, nlp=_nlp("mlg", problem=p))
    with pytest.raises(UnsupportedProblemError):
        approximate_control(nlp, 1, [0.0])
