import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfrca.dcbn import fit_cpts, fit_discretizer
from cfrca.simulator import Dataset, SimConfig, generate_dataset, generate_instance, generate_nominal_instance, ground_truth_graph

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def config():
    return SimConfig()


@pytest.fixture(scope="session")
def dataset(config):
    return generate_dataset(config, 100)


@pytest.fixture(scope="session")
def train_split(dataset):
    return Dataset(dataset.config, dataset.instances[:80])


@pytest.fixture(scope="session")
def model(train_split):
    disc = fit_discretizer(train_split, 3)
    return fit_cpts(ground_truth_graph(), train_split, disc)


@pytest.fixture(scope="session")
def fault_instances(config):
    # index space above the training dataset
    return [generate_instance(config, k) for k in range(1000, 1100)]


@pytest.fixture(scope="session")
def nominal_instances(config):
    return [generate_nominal_instance(config, k) for k in range(50)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
