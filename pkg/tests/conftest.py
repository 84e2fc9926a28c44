import numpy as np
import pytest

from dmra.model import LinearCost, SystemParams
from dmra.simulator import UniformInt
from dmra.solver import SlotProblem


def random_slot_problem(rng: np.random.Generator) -> SlotProblem:
    """Linear-cost slot problem drawn from the ranges used by the oracle checks.

    k in [1, 100], R+M in [0.5, 5], backlog in [0, 1000), V in [1, 5],
    m in [0.05, 2], epsilon in [0.1, 0.9], u_max in [1, 300].
    """
    k = rng.uniform(1.0, 100.0)
    reward = rng.uniform(0.5, 5.0)
    backlog = int(rng.integers(0, 1000))
    block_size = int(rng.integers(1, 6))
    return SlotProblem(
        gain=k * reward + backlog * block_size,
        k=k,
        u_max=rng.uniform(1.0, 300.0),
        cost_model=LinearCost(rng.uniform(0.05, 2.0)),
        epsilon=rng.uniform(0.1, 0.9),
    )


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def arrival():
    return UniformInt(50, 200)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Collects one status line per acceptance criterion for the terminal summary."""
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
