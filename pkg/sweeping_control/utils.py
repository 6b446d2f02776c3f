import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Union

import numpy as np

from sweeping_control import errors
from sweeping_control.dynamics import DiscreteTrajectory, Mesh

log = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'

PathLike = Union[str, Path]


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % float(value)


def trajectory_header(n: int, d: int, m: int) -> List[str]:
    """Column names t, x_1..x_n, u_1..u_n, a_1..a_d, eta_1..eta_m"""
    return (['t'] + [f'x_{i}' for i in range(1, n + 1)] + [f'u_{i}' for i in range(1, n + 1)]
            + [f'a_{i}' for i in range(1, d + 1)] + [f'eta_{i}' for i in range(1, m + 1)])


def write_trajectory_csv(path: PathLike, traj: DiscreteTrajectory, m: int = None) -> Path:
    """Writes one row per node
    Args:
        path: output file
        traj(DiscreteTrajectory): node sequences; eta of interval j goes to row j and the
            last row repeats the final interval
        m(int): number of eta columns when the trajectory carries no eta
    Returns(Path): the written file
    """
    path = Path(path)
    k = traj.mesh.k
    n, d = traj.x.shape[1], traj.a.shape[1]
    eta = traj.eta
    if eta is None:
        eta = np.zeros((k, m or 0))
    eta = eta.reshape(k, -1)
    node_eta = np.vstack([eta, eta[-1:]]) if k else eta
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(trajectory_header(n, d, eta.shape[1]))
        for j in range(k + 1):
            row = [traj.t[j], *traj.x[j], *traj.u[j], *traj.a[j], *node_eta[j]]
            writer.writerow([_fmt(val) for val in row])
    log.debug(f"[CSV] Wrote {k + 1} rows to {path}")
    return path


def read_trajectory_csv(path: PathLike, n: int, d: int, T: float = None) -> DiscreteTrajectory:
    """Reads a trajectory CSV on a uniform mesh
    Args:
        path: input file
        n(int): state dimension
        d(int): control dimension
        T(float): expected horizon; the last row must sit at T when given
    Returns(DiscreteTrajectory): the node sequences with the stored eta
    """
    path = Path(path)
    try:
        with path.open(newline='', encoding='utf-8') as handle:
            rows = list(csv.reader(handle))
    except OSError as ex:
        raise errors.ConfigError(f"Cannot read trajectory {path}: {ex}", key='solution')
    if len(rows) < 3:
        raise errors.ConfigError(f"Trajectory {path} needs a header and two rows",
                                 key='solution')
    header = rows[0]
    m = len(header) - 1 - 2 * n - d
    if m < 0 or header != trajectory_header(n, d, m):
        raise errors.ConfigError(f"Trajectory {path} header {header} does not match n={n}, d={d}",
                                 key='solution')
    try:
        data = np.array([[float(val) for val in row] for row in rows[1:]])
    except ValueError as ex:
        raise errors.ConfigError(f"Trajectory {path} has a bad value: {ex}", key='solution')
    if data.ndim != 2 or data.shape[1] != len(header):
        raise errors.ConfigError(f"Trajectory {path} has ragged rows", key='solution')
    t = data[:, 0]
    if T is not None and abs(t[-1] - T) > 1e-9 * (1.0 + abs(T)):
        raise errors.ConfigError(f"Trajectory {path} ends at t={t[-1]:.10g}, the horizon is {T:.10g}",
                                 key='solution')
    k = len(t) - 1
    mesh = Mesh(k, float(t[-1]))
    if t[0] != 0.0 or not np.allclose(t, mesh.nodes, rtol=0.0, atol=1e-9 * (1.0 + t[-1])):
        raise errors.ConfigError(f"Trajectory {path} is not on a uniform mesh from 0",
                                 key='solution')
    x = data[:, 1:1 + n]
    u = data[:, 1 + n:1 + 2 * n]
    a = data[:, 1 + 2 * n:1 + 2 * n + d]
    eta = data[:-1, 1 + 2 * n + d:] if m else None
    return DiscreteTrajectory(mesh, x, u, a, eta=eta)


def write_long_csv(path: PathLike, series: Dict[str, Iterable], t=None) -> Path:
    """Plot data in long form: series,index,t,value

    Every series is a vector or a matrix (one row per time); matrix columns are
    written as ``name_1``, ``name_2``, ...
    """
    path = Path(path)
    times = None if t is None else np.asarray(t, dtype=float)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['series', 'index', 't', 'value'])
        for name in sorted(series):
            values = np.asarray(series[name], dtype=float)
            columns = values.reshape(len(values), -1)
            for col in range(columns.shape[1]):
                label = name if columns.shape[1] == 1 else f'{name}_{col + 1}'
                for idx, value in enumerate(columns[:, col]):
                    stamp = '' if times is None or idx >= len(times) else _fmt(times[idx])
                    writer.writerow([label, idx, stamp, _fmt(value)])
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(key): _plain(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else None
    return obj


def write_json(path: PathLike, payload: dict) -> Path:
    """Writes JSON with sorted keys; non-finite floats become null"""
    path = Path(path)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + '\n', encoding='utf-8')
    log.debug(f"[JSON] Wrote {path}")
    return path
