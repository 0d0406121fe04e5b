import pytest

from wavepackets.index_space import SystemParams, enumerate_indices

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_params():
    return SystemParams()


@pytest.fixture(scope="session")
def ref_indices(ref_params):
    return enumerate_indices(ref_params)


@pytest.fixture(scope="session")
def small_params():
    return SystemParams(j_max=1, k_radius=1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
