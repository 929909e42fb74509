import pytest

from .coefficient import AffineCoefficient, ThetaDescriptor, analytic_periodic_field
from .grid import build_mesh
from .harness.config import ExperimentConfig
from .harness.runner import run_offline

# A small version of the periodic preset, quick enough to build in well under a second.
SMALL_CONFIG = {
    "problem": "periodic",
    "nx": 20,
    "ny": 20,
    "Nx": 2,
    "Ny": 2,
    "n_samples": 12,
    "degree": 2,
    "n_basis": 3,
    "mu_online": [[0.6]],
}


def pytest_addoption(parser):
    """An option to run the desk-scale acceptance tests. (Skipped by default).

    Example
    -------
    $ pytest randomized_gmsfem --run-slow
    """
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run tests marked slow (full 100x100 problems).",
    )


def pytest_collection_modifyitems(session, config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small_mesh():
    return build_mesh(20, 20, 2, 2)


@pytest.fixture
def periodic_coefficient(small_mesh):
    return AffineCoefficient([(ThetaDescriptor(), analytic_periodic_field(small_mesh))])


@pytest.fixture(scope="session")
def small_config():
    return ExperimentConfig.from_dict(dict(SMALL_CONFIG))


@pytest.fixture(scope="session")
def small_bundle(small_config):
    "Offline bundle of the small problem, built once per test session."
    return run_offline(small_config)
