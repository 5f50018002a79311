import csv
import json
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from gausscol.bench import records
from gausscol.bench.cli import UsageError, cli_main, parse_grid, parse_range
from gausscol.bench.oracles import analytic_solution, lqr_oracle
from gausscol.bench.problems import OPTIMAL_SWITCH_TIMES, TARGET_STATE, LqrParameters, triple_integrator_problem
from gausscol.bench.study import (
    ERROR_COLUMNS,
    RunConfig,
    error_metrics,
    objective_table,
    run,
    sweep_fixed_switch,
    sweep_N,
)


def _data_lines(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def _csv_rows(path):
    return list(csv.DictReader(_data_lines(path)))


# -- problem and oracles --------------------------------------------------------


def test_triple_integrator_definition():
    p = triple_integrator_problem()
    assert p.fx(np.array([1.0, 2.0]), np.array([3.0])).tolist() == [2.0, 3.0]
    assert p.fv(None, None, np.array([0.25])).tolist() == [0.25]
    np.testing.assert_array_equal(TARGET_STATE, [13 / 4, 9 / 4, 3 / 2])
    assert p.control_bounds()[1][0] == 0.5
    assert p.t0 == 0.0 and p.tf == (1.0, 20.0)


def test_oracle_self_check():
    assert max(analytic_solution().self_check().values()) <= 1e-12


def test_oracle_reference_values():
    sol = analytic_solution()
    assert sol.tf == 7.0
    assert sol.switch_times == (-5 / 7, -1 / 7)
    assert sol.state(1.0)[0, 2] == pytest.approx(1.5, abs=1e-14)
    np.testing.assert_allclose(sol.costate(np.array(OPTIMAL_SWITCH_TIMES))[:, 2], 0.0, atol=1e-13)
    np.testing.assert_allclose(sol.hamiltonian(np.linspace(-1, 1, 50)), -1.0, atol=1e-13)


def test_oracle_costate_matches_backward_integration():
    # independent route: integrate the adjoint ODE backward from the terminal costate
    sol = analytic_solution()
    rhs = lambda t, lam: [0.0, -lam[0], -lam[1]]
    back = solve_ivp(rhs, (7.0, 0.0), sol.costate(1.0)[0], method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True)
    t = np.linspace(0.0, 7.0, 57)
    np.testing.assert_allclose(back.sol(t).T, sol.costate(2 * t / 7 - 1), atol=1e-10)
    # and the closed form worked by hand
    np.testing.assert_allclose(sol.costate(2 * t / 7 - 1)[:, 2], -2 / 3 * (t - 1) * (t - 3), atol=1e-12)


def test_lqr_oracle_matches_hamiltonian_matrix_exponential():
    prm = LqrParameters()
    M = np.array([[prm.a, -prm.b**2 / prm.r], [-prm.q, -prm.a]])
    orc = lqr_oracle(prm)
    for t in (0.0, 0.37, 1.1, 2.0):
        x, lam = expm(M * (t - prm.tf)) @ [1.0, prm.s_f]
        assert orc.gain(t)[0] == pytest.approx(lam / x, rel=1e-10)
    # state starts at x0 and the cost equals P(0) x0^2 / 2
    assert orc.state(0.0)[0] == pytest.approx(prm.x0)
    assert orc.cost() == pytest.approx(0.5 * orc.gain(0.0)[0] * prm.x0**2)


# -- error metrics --------------------------------------------------------------


def _exact_solution_namespace(oracle, n_per=5):
    intervals, lam = [], []
    bounds = [-1.0, *OPTIMAL_SWITCH_TIMES, 1.0]
    for a, b in zip(bounds, bounds[1:]):
        T = np.linspace(a, b, n_per)
        Y = oracle.state(T)
        intervals.append(SimpleNamespace(T=T, t=oracle.to_time(T), X=Y[:, :2], V=Y[:, 2:]))
        lam.append(oracle.costate(T))
    sol = SimpleNamespace(status="solved", objective=7.0, tf=7.0, switch_times=np.array(OPTIMAL_SWITCH_TIMES),
                          intervals=intervals)
    return sol, SimpleNamespace(stacked=lambda k: lam[k])


def test_error_metrics_self_comparison_is_zero():
    oracle = analytic_solution()
    sol, co = _exact_solution_namespace(oracle)
    m = error_metrics(sol, oracle, co)
    assert m["state_error"] <= 1e-12 and m["costate_error"] <= 1e-12


def test_error_metrics_scale_definition():
    oracle = analytic_solution()
    sol, _ = _exact_solution_namespace(oracle)
    sol.intervals[1].X = sol.intervals[1].X + np.array([0.1, 0.0])
    # x1 peaks at 13/4, so the denominator is 1 + 13/4
    assert error_metrics(sol, oracle)["state_error"] == pytest.approx(0.1 / (1 + 13 / 4), rel=1e-12)


def test_modified_and_standard_error_magnitudes(mlg_run, lg_run):
    assert mlg_run.metrics["state_error"] <= 1e-6
    assert 1e-3 <= lg_run.metrics["state_error"] <= 0.5


def test_alpha_sums_to_one_regardless_of_status(mlg_run):
    assert abs(mlg_run.solution.alpha.sum() - 1.0) <= 1e-12
    stopped = run(RunConfig(method="mlg", nodes=3, max_iter=3))
    assert stopped.result.status != "solved"
    assert abs(stopped.solution.alpha.sum() - 1.0) <= 1e-12


# -- sweeps ---------------------------------------------------------------------


def test_sweep_rows_are_cartesian_product():
    rows = sweep_N(("mlg", "mlgr"), range(3, 5))
    assert [(r["method"], r["N"]) for r in rows] == [("mlg", 3), ("mlg", 4), ("mlgr", 3), ("mlgr", 4)]
    assert all(set(r) == set(ERROR_COLUMNS) for r in rows)
    for r in rows:
        if r["method"] == "mlg":
            assert r["tf"] == pytest.approx(7.0, abs=1e-5)
    cols, table = objective_table(rows)
    assert cols == ["N", "mlg", "mlgr"] and len(table) == 2


def test_sweep_records_failures_and_continues():
    rows = sweep_N(("mlg",), [3, 4], RunConfig(problem="unknown"))
    assert len(rows) == 2
    assert all(r["status"].startswith("error:") for r in rows)


def test_standard_sweep_shows_gap():
    rows = sweep_N(("lg",), [3, 4])
    assert all(r["status"] == "solved" and r["tf"] < 7.0 for r in rows)


def test_fixed_switch_examples():
    t1 = OPTIMAL_SWITCH_TIMES[0]
    lg = {r["value"]: r for r in sweep_fixed_switch("T1", [-0.6, t1], method="lg")}
    assert lg[-0.6]["objective"] < 7.0
    assert lg[t1]["objective"] == pytest.approx(7.0, abs=1e-5)
    mlg = {r["value"]: r for r in sweep_fixed_switch("T1", [-0.66, t1], method="mlg")}
    assert mlg[-0.66]["objective"] > 7.0
    assert mlg[t1]["objective"] == pytest.approx(7.0, abs=1e-5)


def test_fixed_switch_invalid_points_are_recorded():
    rows = sweep_fixed_switch("T1", [0.0])
    assert rows[0]["status"] == "invalid mesh ordering"
    with pytest.raises(ValueError):
        sweep_fixed_switch("T3", [0.0])


# -- records --------------------------------------------------------------------


def test_write_rows_format(tmp_path):
    p = records.write_rows(tmp_path / "r.csv", ["a", "b"], [{"a": 1.5, "b": float("nan")}, [np.int64(2), "x"]],
                           timestamp=False, header={"note": "n"})
    assert p.read_text() == "# format_version=1\n# note=n\na,b\n1.5,\n2,x\n"
    stamped = records.write_rows(tmp_path / "s.csv", ["a"], [], timestamp=True)
    assert stamped.read_text().splitlines()[1].startswith("# generated=")


def test_summary_round_trip(tmp_path, mlg_run):
    path = records.write_summary(mlg_run, tmp_path / "summary.json", timestamp=False)
    data = records.load_summary(tmp_path)
    assert data["format_version"] == records.FORMAT_VERSION and "generated" not in data
    assert records.config_from_summary(data) == mlg_run.config
    res = records.result_from_summary(data)
    np.testing.assert_array_equal(res.z, mlg_run.result.z)
    np.testing.assert_array_equal(res.lambda_E, mlg_run.result.lambda_E)
    data["format_version"] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError):
        records.load_summary(path)


def test_solution_csv_columns(tmp_path, mlg_run):
    p = records.write_solution_csv(mlg_run, tmp_path / "solution.csv", timestamp=False)
    rows = _csv_rows(p)
    assert list(rows[0]) == ["interval", "node_index", "tau", "T", "x1", "x2", "v1", "u1",
                             "lambda_x1", "lambda_x2", "lambda_v1", "hamiltonian"]
    assert len(rows) == 3 * 5
    # endpoints carry no Hamiltonian value
    assert rows[0]["hamiltonian"] == "" and float(rows[1]["hamiltonian"]) == pytest.approx(-1.0, abs=1e-6)


def test_sweep_writer_header(tmp_path):
    rows = [{"method": "mlg", "N": 3, "objective": 7.0}]
    errors, objective = records.write_sweep(rows, tmp_path, timestamp=False)
    assert "# relative_error=" in errors.read_text()
    assert _csv_rows(objective) == [{"N": "3", "mlg": "7"}]


# -- CLI ------------------------------------------------------------------------


def test_parse_helpers():
    assert parse_range("3..6") == [3, 4, 5, 6]
    assert parse_range("3,5") == [3, 5]
    assert parse_range(4) == [4]
    assert parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    for bad in ("6..3", "a..b"):
        with pytest.raises(UsageError):
            parse_range(bad)
    with pytest.raises(UsageError):
        parse_grid("0:1")


def test_cli_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli_main(["solve", "--problem", "triple-integrator", "--method", "mlg", "--segments", "3",
                     "--nodes", "3", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["objective"] == pytest.approx(7.0, abs=1e-5)
    assert "generated" in summary
    assert (out / "solution.csv").read_text().splitlines()[1].startswith("# generated=")
    assert "status=solved" in capsys.readouterr().out


def test_cli_outputs_are_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli_main(["solve", "--method", "lg", "--nodes", "3", "--no-timestamp", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    assert cli_main(["solve", "--method", "bogus"]) == 2
    assert cli_main(["solve", "--unknown-flag"]) == 2
    assert cli_main(["solve", "--switch-bounds=-0.9", "--out", str(tmp_path)]) == 2
    assert cli_main(["solve", "--max-iter", "2", "--out", str(tmp_path)]) == 1
    capsys.readouterr()


def test_cli_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "lg", "nodes": 4, "max_iter": 2, "no_timestamp": True}))
    assert cli_main(["solve", "--config", str(cfg), "--max-iter", "500", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["method"] == "lg" and summary["config"]["nodes"] == 4
    assert summary["config"]["max_iter"] == 500 and "generated" not in summary
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli_main(["solve", "--config", str(bad)]) == 2


def test_cli_check_on_saved_solve(tmp_path, capsys):
    assert cli_main(["solve", "--method", "mlg", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert cli_main(["check", "--from", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "oracle self-check" in text and "residual state_adjoint" in text and "mesh point 2" in text
    assert cli_main(["check", "--from", str(tmp_path / "missing")]) == 2


def test_cli_identities(capsys):
    assert cli_main(["identities", "--nodes", "2..20"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 20 and lines[-1].startswith("max residual=")


def test_cli_sweeps(tmp_path, capsys):
    assert cli_main(["sweep-n", "--methods", "mlg,lg", "--nodes", "3..4", "--out", str(tmp_path), "--no-timestamp"]) == 0
    rows = _csv_rows(tmp_path / "errors.csv")
    assert len(rows) == 4 and rows[0]["method"] == "mlg"
    assert cli_main(["sweep-n", "--methods", "mlg,nope", "--out", str(tmp_path)]) == 2
    assert cli_main(["sweep-switch", "--which", "T2", "--grid=-0.2,-0.1", "--out", str(tmp_path)]) == 0
    curve = _csv_rows(tmp_path / "curve.csv")
    assert [float(r["value"]) for r in curve] == [-0.2, -0.1]
    capsys.readouterr()
