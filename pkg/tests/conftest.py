import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qcbench.device import build_crystal_topology, garnet_median, ideal_device, uniform_device
from qcbench.execution import LocalBackend
from qcbench.sim import NoiseConfig

settings.register_profile("qcbench", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qcbench")


@pytest.fixture(scope="session")
def garnet():
    return garnet_median()


@pytest.fixture(scope="session")
def ideal_backend():
    return LocalBackend(ideal_device(), noise=NoiseConfig.ideal())


@pytest.fixture(scope="session")
def twin():
    return LocalBackend(garnet_median())


@pytest.fixture(scope="session")
def spark_backend():
    return LocalBackend(uniform_device(build_crystal_topology("spark-5"), name="spark"))


def unitary_distance(a, b):
    """Frobenius distance after removing the global phase of b relative to a."""
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 1e-15 else 1.0
    return float(np.linalg.norm(a - phase * b))


# criterion number -> one-line outcome, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
