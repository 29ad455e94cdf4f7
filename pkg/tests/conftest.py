import numpy as np
import pytest

from equihol.scenario import bundled_names, load_scenario


@pytest.fixture(scope="session")
def scenarios():
    return {name: load_scenario(name) for name in bundled_names()}


@pytest.fixture(scope="session")
def models(scenarios):
    """Built models for every bundled chart scenario."""
    return {
        name: sc.build_model() for name, sc in scenarios.items() if sc.kind == "chart"
    }


@pytest.fixture(scope="session")
def lattice_models(scenarios):
    return {
        name: sc.build_lattice_model()
        for name, sc in scenarios.items()
        if sc.kind == "lattice"
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
