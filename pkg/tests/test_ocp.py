import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gausscol.bench.problems import lqr_problem, triple_integrator_problem
from gausscol.ocp import BolzaProblem, InvalidMeshError, Mesh, alpha_from_mesh, map_T_to_tau, map_tau_to_T, validate


@pytest.mark.parametrize(
    "points, alpha",
    [([-1, 1], [1.0]), ([-1, -5 / 7, -1 / 7, 1], [1 / 7, 2 / 7, 4 / 7]), ([-1, 0, 1], [0.5, 0.5])],
)
def test_alpha_examples(points, alpha):
    np.testing.assert_allclose(alpha_from_mesh(points), alpha, atol=1e-15)


@pytest.mark.parametrize("points", [[-1, 0.2, 0.1, 1], [-1, 0.5, 0.5, 1], [-0.9, 1], [-1, 0.9], [1]])
def test_alpha_rejects_bad_meshes(points):
    with pytest.raises(InvalidMeshError):
        alpha_from_mesh(points)


@given(st.lists(st.floats(-0.999, 0.999), min_size=0, max_size=100, unique=True))
def test_alpha_sums_to_one(interior):
    pts = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    if np.any(np.diff(pts) / 2 <= 0):
        with pytest.raises(InvalidMeshError):
            alpha_from_mesh(pts)
        return
    a = alpha_from_mesh(pts)
    assert np.all(a > 0)
    assert abs(a.sum() - 1.0) <= 1e-13


def test_map_examples():
    assert map_tau_to_T(1, -1.0, [-1, 0, 1]) == -1.0
    assert map_tau_to_T(2, 0.0, [-1, -5 / 7, -1 / 7, 1]) == pytest.approx(-3 / 7, abs=1e-15)
    pts = [-1, -0.3, 0.4, 1]
    for k in (1, 2, 3):
        assert map_tau_to_T(k, -1.0, pts) == pytest.approx(pts[k - 1])
        assert map_tau_to_T(k, 1.0, pts) == pytest.approx(pts[k])


@given(st.floats(-1, 1), st.integers(1, 3))
def test_map_round_trip_and_order(tau, k):
    pts = [-1.0, -0.31, 0.27, 1.0]
    T = map_tau_to_T(k, tau, pts)
    assert map_T_to_tau(k, T, pts) == pytest.approx(tau, abs=1e-15)
    assert map_tau_to_T(k, min(tau + 0.01, 1.0), pts) >= T


def test_mesh_helpers():
    m = Mesh.uniform(4)
    assert m.K == 4 and m.free == []
    np.testing.assert_allclose(m.guess_points(), [-1, -0.5, 0, 0.5, 1])
    free = Mesh(((-0.9, -0.5), 0.1))
    assert free.free == [0]
    np.testing.assert_allclose(free.guess_points(), [-1, -0.7, 0.1, 1])
    with pytest.raises(InvalidMeshError):
        Mesh.uniform(0)


@pytest.mark.parametrize("factory", [triple_integrator_problem, lqr_problem])
def test_builtin_problems_validate(factory):
    rep = validate(factory())
    assert rep.ok, rep.failures()


def test_validate_flags_wrong_dimension():
    bad = dataclasses.replace(triple_integrator_problem(), fv=lambda x, v, u: np.array([u[0], 0.0]))
    rep = validate(bad)
    assert not rep.dimensions_ok
    assert any("fv" in f for f in rep.failures())


def test_validate_flags_wrong_jacobian():
    p = triple_integrator_problem()
    bad = dataclasses.replace(p, fx_jac=lambda x, v: 2 * p.fx_jac(x, v))
    rep = validate(bad)
    assert rep.dimensions_ok
    assert [f for f in rep.failures() if f.startswith("jac:fx")]


def test_validate_reports_exceptions():
    def broken(x, v, u):
        raise RuntimeError("boom")

    rep = validate(dataclasses.replace(triple_integrator_problem(), fv=broken))
    assert not rep.ok


def test_problem_dimension_rules():
    with pytest.raises(ValueError):
        BolzaProblem(n_x=0, n_v=0, n_u=1, fx=None, fv=lambda x, v, u: u)
    with pytest.raises(ValueError):
        BolzaProblem(n_x=1, n_v=1, n_u=1, fx=None, fv=lambda x, v, u: u)


def test_dynamics_split_of_triple_integrator():
    p = triple_integrator_problem()
    y = np.array([1.0, 2.0, 3.0, -0.25])
    np.testing.assert_array_equal(p.dynamics(y), [2.0, 3.0, -0.25])
    assert (p.n_x, p.n_v, p.n_u, p.n_b) == (2, 1, 1, 6)
    lo, hi = p.control_bounds()
    assert lo[0] == -0.5 and hi[0] == 0.5
