import pytest

import sweeping_control
import sweeping_control.log_config
from sweeping_control.config import load_problem_config
from sweeping_control.crowd import CrowdConfig
from sweeping_control.geometry import Polyhedron
from tests import utils

sweeping_control.log_config.load_config()


@pytest.fixture()
def chain3() -> Polyhedron:
    return Polyhedron.chain(3)


@pytest.fixture()
def orthant2() -> Polyhedron:
    return Polyhedron.orthant(2)


@pytest.fixture()
def ex41():
    return load_problem_config(utils.config_path('ex41.json'))


@pytest.fixture()
def ex41_fixed():
    return load_problem_config(utils.config_path('ex41_fixed.json'))


@pytest.fixture()
def ex42_r1():
    return load_problem_config(utils.config_path('ex42_r1.json'))


@pytest.fixture()
def ex42_r2():
    return load_problem_config(utils.config_path('ex42_r2.json'))


@pytest.fixture()
def ex43():
    return load_problem_config(utils.config_path('ex43.json'))


@pytest.fixture()
def interior():
    return load_problem_config(utils.config_path('interior.json'))


@pytest.fixture()
def crowd51() -> CrowdConfig:
    return CrowdConfig(n=2, R=3.0, T=6.0, speeds=(6.0, 3.0), x0=(-60.0, -48.0))


@pytest.fixture()
def crowd52() -> CrowdConfig:
    return CrowdConfig(n=3, R=3.0, T=6.0, speeds=(6.0, 3.0, 2.0), x0=(-60.0, -48.0, -42.0))
