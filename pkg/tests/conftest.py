import pytest

from finfuel.model import CostFn, ModelParams
from finfuel.stopping import tabulate_beta
from finfuel.value import tabulate_gamma

REFL_P = ModelParams(1.0, 2.0, 1.0, 0.5)
REFL_F = CostFn.quadratic(1.0)
REPL_P = ModelParams(1.0, 1.0, 1.0, 0.5)
REPL_F = CostFn.linear_quadratic(4.0)

_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report(capsys):
    """Print one acceptance line immediately and repeat it in the summary."""

    def emit(line):
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)

    return emit


@pytest.fixture(scope="session")
def refl():
    return REFL_P, REFL_F


@pytest.fixture(scope="session")
def repl():
    return REPL_P, REPL_F


@pytest.fixture(scope="session")
def beta_tab():
    return tabulate_beta(REFL_P, REFL_F)


@pytest.fixture(scope="session")
def gamma_tab():
    return tabulate_gamma(REPL_P, REPL_F)
