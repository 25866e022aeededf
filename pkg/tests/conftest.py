import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from confound_bounds.core import Dataset, SensitivityConfig, make_rng
from confound_bounds.simulation import DgpConfig, generate

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sim_data():
    """n=600 draw from the binary-confounder design."""
    data, _ = generate(DgpConfig(0.05, 600, 11), make_rng(11, 3, 0))
    return data


@pytest.fixture
def small_cfg():
    return SensitivityConfig(eps_grid=np.linspace(0, 0.2, 11), bootstrap_reps=200)


def toy_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    a = np.tile([0.0, 1.0], n // 2)
    y = rng.uniform(size=n)
    return Dataset(x, a, y, 0.0, 1.0)
