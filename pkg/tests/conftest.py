import numpy as np
import pytest

from blsmo.descriptor import PlantModel, build_descriptor
from blsmo.nonlinearities import make_f
from blsmo.scenarios import build_plant, example_config, run_pipeline, run_synthesis


@pytest.fixture(scope="session")
def ex1_config():
    return example_config("example1")


@pytest.fixture(scope="session")
def ex2_config():
    return example_config("example2")


@pytest.fixture(scope="session")
def ex1_plant(ex1_config):
    return build_plant(ex1_config)


@pytest.fixture(scope="session")
def ex2_plant(ex2_config):
    return build_plant(ex2_config)


@pytest.fixture(scope="session")
def ex1_synth(ex1_config):
    return run_synthesis(ex1_config)


@pytest.fixture(scope="session")
def ex2_synth(ex2_config):
    return run_synthesis(ex2_config)


@pytest.fixture(scope="session")
def ex1_run(ex1_config, ex1_synth):
    return run_pipeline(ex1_config, ex1_synth)


@pytest.fixture(scope="session")
def ex2_run(ex2_config, ex2_synth):
    return run_pipeline(ex2_config, ex2_synth)


def scalar_plant(**kw):
    """One state, one output, one sensor disturbance."""
    args = dict(A=[[-1.0]], Bf=[[0.0]], Bg=[[0.0]], G=[[1.0]], C=[[1.0]], D=[[1.0]], Cq=[[1.0]],
                f=make_f("zero"))
    args.update(kw)
    return PlantModel(**args)


def random_plant(rng, n_x=None, n_y=None, m_y=None, m_x=None):
    n_x = n_x or int(rng.integers(1, 9))
    n_y = n_y or int(rng.integers(1, n_x + 1))
    m_y = m_y or int(rng.integers(1, n_y + 1))
    m_x = m_x or int(rng.integers(1, n_x + 1))
    return PlantModel(
        A=rng.normal(size=(n_x, n_x)), Bf=rng.normal(size=(n_x, 1)), Bg=np.zeros((n_x, 1)),
        G=rng.normal(size=(n_x, m_x)), C=rng.normal(size=(n_y, n_x)), D=rng.normal(size=(n_y, m_y)),
        Cq=rng.normal(size=(1, n_x)), f=make_f("sin_of_q"), rho_x=1.0)
