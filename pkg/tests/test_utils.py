import csv
import json

import numpy as np
import pytest

from sweeping_control import errors, utils
from sweeping_control.dynamics import catching_up


def test_trajectory_header():
    assert utils.trajectory_header(2, 1, 1) == ['t', 'x_1', 'x_2', 'u_1', 'u_2', 'a_1', 'eta_1']


def test_trajectory_csv_keeps_full_precision(tmp_path, ex43):
    problem = ex43.problem
    traj = catching_up(problem, problem.u_fixed, [-1.0 / 3.0, 0.0], k=12)
    path = utils.write_trajectory_csv(tmp_path / 'traj.csv', traj)
    loaded = utils.read_trajectory_csv(path, problem.n, problem.d)
    assert np.array_equal(loaded.x, traj.x)
    assert np.array_equal(loaded.a, traj.a)
    assert np.array_equal(loaded.eta, traj.eta)
    assert loaded.mesh.k == 12
    with path.open(newline='', encoding='utf-8') as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 14
    # the final row repeats the multipliers of the last interval
    assert rows[-1][-2:] == rows[-2][-2:]


def test_trajectory_csv_without_multipliers(tmp_path, ex43):
    traj = ex43.candidate(4).with_eta(None)
    path = utils.write_trajectory_csv(tmp_path / 'plain.csv', traj, m=2)
    loaded = utils.read_trajectory_csv(path, 2, 2)
    assert not loaded.eta.any()


@pytest.mark.parametrize('content', [
    't,x_1\n0,1\n',
    't,x_1,u_1,a_1\n0,0,0,0\n0.5,0,0,zero\n',
    't,x_1,u_1,a_1\n0,0,0,0\n0.5,0,0\n1,0,0,0\n',
    't,x_1,u_1,a_1\n0,0,0,0\n0.2,0,0,0\n1,0,0,0\n',
    't,y_1,u_1,a_1\n0,0,0,0\n0.5,0,0,0\n1,0,0,0\n',
])
def test_bad_trajectory_files(tmp_path, content):
    path = tmp_path / 'bad.csv'
    path.write_text(content, encoding='utf-8')
    with pytest.raises(errors.ConfigError) as info:
        utils.read_trajectory_csv(path, 1, 1)
    assert info.value.key == 'solution'


def test_long_csv(tmp_path):
    path = utils.write_long_csv(tmp_path / 'plot.csv',
                                {'x': np.array([[1.0, 2.0], [3.0, 4.0]]), 'a': [5.0, 6.0]},
                                t=[0.0, 0.5])
    with path.open(newline='', encoding='utf-8') as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ['series', 'index', 't', 'value']
    assert rows[1] == ['a', '0', '0', '5']
    assert ['x_2', '1', '0.5', '4'] in rows
    assert len(rows) == 1 + 2 + 4


def test_json_sanitizes_numpy(tmp_path):
    payload = {'b': np.float64(np.inf), 'a': np.array([1, 2]), 'flag': np.bool_(True),
               'n': np.int64(3)}
    path = utils.write_json(tmp_path / 'out.json', payload)
    text = path.read_text(encoding='utf-8')
    assert json.loads(text) == {'a': [1, 2], 'b': None, 'flag': True, 'n': 3}
    assert text.index('"a"') < text.index('"b"')


def test_trajectory_csv_on_a_shorter_horizon(tmp_path, ex43):
    path = utils.write_trajectory_csv(tmp_path / 'cand.csv', ex43.candidate(40))
    lines = path.read_text(encoding='utf-8').splitlines()
    short = tmp_path / 'short.csv'
    short.write_text('\n'.join(lines[:21]) + '\n', encoding='utf-8')
    loaded = utils.read_trajectory_csv(short, 2, 2)
    assert loaded.mesh.T == pytest.approx(0.475)
    with pytest.raises(errors.ConfigError) as info:
        utils.read_trajectory_csv(short, 2, 2, T=ex43.problem.T)
    assert info.value.key == 'solution'
    assert utils.read_trajectory_csv(path, 2, 2, T=ex43.problem.T).mesh.k == 40
