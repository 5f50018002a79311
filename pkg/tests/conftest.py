import pytest

from gausscol.bench.problems import OPTIMAL_SWITCH_TIMES
from gausscol.bench.study import RunConfig, run

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mlg_run():
    return run(RunConfig(method="mlg", nodes=3))


@pytest.fixture(scope="session")
def lg_run():
    return run(RunConfig(method="lg", nodes=3))


@pytest.fixture(scope="session")
def lg_fixed_run():
    return run(RunConfig(method="lg", nodes=3, fixed_switch=list(OPTIMAL_SWITCH_TIMES)))


@pytest.fixture(scope="session")
def lqr_run():
    return run(RunConfig(problem="lqr", method="mlg", segments=2, nodes=12))
