import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from monovol.estimate import EnergyDensityTable
from monovol.mesh import MeshDatabase
from monovol.shapes import cube, icosphere, torus

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixtures():
    return {"cube": cube(), "icosphere": icosphere(3), "torus": torus()}


@pytest.fixture(scope="session")
def fixture_db(fixtures):
    return MeshDatabase.from_meshes(fixtures)


@pytest.fixture(scope="session")
def unit_densities(fixtures):
    return EnergyDensityTable({k: 1.0 for k in fixtures})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
