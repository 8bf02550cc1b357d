import pytest

from emdenlab.geometry import DomainSpec, build_grid
from emdenlab.lane_emden import SolveParams, continue_in_p
from emdenlab.radial import oracle_sweep

SWEEP = (20.0, 50.0, 100.0, 200.0, 500.0, 1000.0)


@pytest.fixture(scope="session")
def disk64():
    return build_grid(DomainSpec.disk(1.0), 1 / 64)


@pytest.fixture(scope="session")
def disk128():
    return build_grid(DomainSpec.disk(1.0), 1 / 128)


@pytest.fixture(scope="session")
def square64():
    return build_grid(DomainSpec.rectangle(1.0, 1.0), 1 / 64)


@pytest.fixture(scope="session")
def disk64_records(disk64):
    """Grid continuation on the disk at h = 1/64 through p = 3, 5, 8, 10."""
    return continue_in_p(disk64, SolveParams(p_start=3.0, p_targets=(3.0, 5.0, 8.0, 10.0)))


@pytest.fixture(scope="session")
def oracle_runs():
    return {s.p: s for s in oracle_sweep(SWEEP + (2000.0,))}


@pytest.fixture(scope="session")
def annulus64():
    return build_grid(DomainSpec.annulus(0.5, 1.0), 1 / 64)


@pytest.fixture(scope="session")
def green_disk64(disk64):
    from emdenlab.greenfn import GreenSolver
    return GreenSolver(seed=0).fit(disk64)


@pytest.fixture(scope="session")
def green_square64(square64):
    from emdenlab.greenfn import GreenSolver
    return GreenSolver(seed=0).fit(square64)


@pytest.fixture(scope="session")
def green_annulus64(annulus64):
    from emdenlab.greenfn import GreenSolver
    return GreenSolver(seed=0).fit(annulus64)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
