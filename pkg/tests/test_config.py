import copy
import json

import numpy as np
import pytest

from sweeping_control import errors
from sweeping_control.config import load_problem_config, parse_problem_config, validate_document
from tests import utils


@pytest.fixture()
def ex43_document() -> dict:
    return json.loads(utils.config_path('ex43.json').read_text(encoding='utf-8'))


@pytest.mark.parametrize('name', ['ex41.json', 'ex41_fixed.json', 'ex42_r1.json', 'ex42_r2.json',
                                  'ex43.json', 'interior.json', 'crowd_ex51.json',
                                  'crowd_ex52.json'])
def test_shipped_configs_load(name):
    config = load_problem_config(utils.config_path(name))
    assert config.name == name[:-len('.json')]
    assert config.path == utils.config_path(name)


def test_sweeping_config_builds_problem(ex43):
    problem = ex43.problem
    assert ex43.kind == 'sweeping'
    assert problem.n == 2
    assert problem.m == 2
    assert problem.terminal_boundary
    assert not problem.u_is_decision
    assert ex43.grid == 200
    assert ex43.tol == 1e-6


def test_decision_u_config(ex41):
    problem = ex41.problem
    assert problem.u_is_decision
    assert problem.r == 0.5
    assert problem.tau == 0.25
    assert problem.u_seed.tolist() == [1.0]
    assert ex41.with_tau(0.1).tau == pytest.approx(0.1)
    assert ex41.with_tau(None) is problem


def test_solve_options_take_overrides(ex41):
    opts = ex41.solve_options(multistart=3, seed=None)
    assert opts.multistart == 3
    assert opts.seed == 0


def test_crowd_config(crowd51):
    config = load_problem_config(utils.config_path('crowd_ex51.json'))
    assert config.kind == 'crowd'
    assert config.problem is None
    assert config.crowd.speeds == crowd51.speeds
    assert config.crowd.reference_gamma_tail == (-1.56, 3.76)


def test_candidate_is_simulated(ex43):
    traj = ex43.candidate(200)
    assert traj.x[-1].tolist() == pytest.approx([1.0, -1.0], abs=1e-9)
    assert np.allclose(traj.a[:, 0], -1.0)
    assert traj.eta.shape == (200, 2)


def test_candidate_needs_u_when_u_is_a_decision(ex41):
    document = copy.deepcopy(ex41.document)
    del document['candidate']['u']
    config = parse_problem_config(document)
    with pytest.raises(errors.ConfigError) as info:
        config.candidate(10)
    assert info.value.key == 'candidate.u'


def test_unknown_key_is_named(ex43_document):
    ex43_document['colour'] = 'red'
    with pytest.raises(errors.ConfigError) as info:
        validate_document(ex43_document)
    assert info.value.key == 'colour'


def test_missing_key_is_named(ex43_document):
    del ex43_document['polyhedron']
    with pytest.raises(errors.ConfigError) as info:
        parse_problem_config(ex43_document)
    assert info.value.key == 'polyhedron'


def test_nested_type_error_is_located(ex43_document):
    ex43_document['terminal_cost']['weight'] = 'heavy'
    with pytest.raises(errors.ConfigError) as info:
        validate_document(ex43_document)
    assert info.value.key == 'terminal_cost.weight'


def test_unknown_kind():
    with pytest.raises(errors.ConfigError) as info:
        validate_document({'kind': 'queue'})
    assert info.value.key == 'kind'


def test_infeasible_start_surfaces(ex43_document):
    ex43_document['x0'] = [2.0, -1.0]
    with pytest.raises(errors.InfeasibleStart):
        parse_problem_config(ex43_document)


def test_unreadable_files(tmp_path):
    with pytest.raises(errors.ConfigError):
        load_problem_config(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"kind": ', encoding='utf-8')
    with pytest.raises(errors.ConfigError):
        load_problem_config(broken)
