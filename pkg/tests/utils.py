import itertools
import logging
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from sweeping_control.geometry import Polyhedron

log = logging.getLogger(__name__)

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'


def config_path(name: str) -> Path:
    return CONFIGS / name


def brute_force_projection(z, C: Polyhedron, shift=None) -> np.ndarray:
    """Projection by enumerating candidate faces: the closest feasible face projection wins"""
    z = np.asarray(z, dtype=float)
    shift = np.zeros_like(z) if shift is None else np.asarray(shift, dtype=float)
    y = z - shift
    if C.contains(y, tol=0.0):
        return z.copy()
    best, best_dist = None, np.inf
    for size in range(1, C.m + 1):
        for face in itertools.combinations(range(C.m), size):
            gens = C.generators[list(face)]
            coef = np.linalg.lstsq(gens.T, y, rcond=None)[0]
            candidate = y - gens.T @ coef
            if np.any(coef < -1e-12) or not C.contains(candidate, tol=1e-9):
                continue
            dist = np.linalg.norm(y - candidate)
            if dist < best_dist:
                best, best_dist = candidate, dist
    log.debug(f"[ORACLE] projection distance {best_dist:.3e}")
    return shift + best


def brute_force_cone_fit(v, gens: np.ndarray) -> float:
    """Residual of the best nonnegative fit of v by the rows of gens"""
    if len(gens) == 0:
        return float(np.linalg.norm(v))
    _, residual = nnls(np.asarray(gens, dtype=float).T, np.asarray(v, dtype=float))
    return float(residual)


def finite_difference(fun, x, step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += step
        down[idx] -= step
        grad[idx] = (fun(up) - fun(down)) / (2.0 * step)
    return grad


def brute_force_cone_residual(v, gens: np.ndarray) -> float:
    """Distance from v to the cone of the rows of gens, by enumerating supports"""
    v = np.asarray(v, dtype=float)
    gens = np.asarray(gens, dtype=float).reshape(-1, len(v))
    best = float(np.linalg.norm(v))
    for size in range(1, len(gens) + 1):
        for support in itertools.combinations(range(len(gens)), size):
            sub = gens[list(support)]
            coef = np.linalg.lstsq(sub.T, v, rcond=None)[0]
            if np.any(coef < -1e-12):
                continue
            best = min(best, float(np.linalg.norm(v - sub.T @ coef)))
    return best


def random_polyhedron(rng: np.random.Generator, n: int, m: int) -> Polyhedron:
    return Polyhedron(rng.normal(size=(m, n)))
