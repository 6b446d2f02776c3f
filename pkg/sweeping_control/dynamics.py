"""
Forward simulation of the controlled sweeping inclusion

    -x'(t) in N(x(t) - u(t); C) + f(x(t), a(t)),   x(0) = x0

by the catching-up scheme x_{j+1} = P_{C + u_{j+1}}(x_j - h f(x_j, a_j)).
The normal-cone weights of each projection divided by h are the multipliers
eta_j, so the scheme reads -(x_{j+1} - x_j)/h = sum_i eta_ji x*_i + f(x_j, a_j)
with the normal cone taken at x_{j+1} - u_{j+1}.
"""
import logging
import math
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from sweeping_control import errors, geometry
from sweeping_control.costs import Perturbation, RunningCost, TerminalCost
from sweeping_control.geometry import Polyhedron

log = logging.getLogger(__name__)

# index guard for the window computation, t_j = jT/k is exact only up to roundoff
_WINDOW_EPS = 1e-9


class ConstantPath:
    """Constant function of time"""

    def __init__(self, value):
        self._value = np.atleast_1d(np.asarray(value, dtype=float))

    def __call__(self, t: float) -> np.ndarray:
        return self._value.copy()

    def derivative(self, t: float) -> np.ndarray:
        return np.zeros_like(self._value)

    def total_variation(self, T: float) -> float:
        return 0.0


class PiecewiseLinearPath:
    """Piecewise-linear interpolation of node values; constant beyond the nodes"""

    def __init__(self, nodes, values):
        self._nodes = np.asarray(nodes, dtype=float)
        self._values = np.asarray(values, dtype=float).reshape(len(self._nodes), -1)
        if len(self._nodes) < 2:
            raise errors.DimensionMismatch("A piecewise-linear path needs at least two nodes")

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self._nodes, col) for col in self._values.T])

    def derivative(self, t: float) -> np.ndarray:
        idx = int(np.clip(np.searchsorted(self._nodes, t, side='right') - 1,
                          0, len(self._nodes) - 2))
        span = self._nodes[idx + 1] - self._nodes[idx]
        return (self._values[idx + 1] - self._values[idx]) / span

    def total_variation(self, T: float) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self._values, axis=0), axis=1)))


PathLike = Union[ConstantPath, PiecewiseLinearPath, Callable[[float], np.ndarray]]


def as_path(value) -> PathLike:
    """Wraps a constant vector into a path; callables pass through"""
    if callable(value):
        return value
    return ConstantPath(value)


class Mesh:
    """Uniform mesh t_j = jT/k, j = 0..k"""
    __slots__ = ('_k', '_T')

    def __init__(self, k: int, T: float):
        if int(k) < 1:
            raise errors.DimensionMismatch(f"Mesh needs at least one interval, got k={k}")
        if T <= 0:
            raise errors.ConfigError(f"Horizon must be positive, got T={T}", key='T')
        self._k = int(k)
        self._T = float(T)

    @property
    def k(self) -> int:
        return self._k

    @property
    def T(self) -> float:
        return self._T

    @property
    def h(self) -> float:
        return self._T / self._k

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self._k + 1) * self.h

    def window(self, tau: float) -> Tuple[int, int]:
        """Inner window (j_tau, j^tau): smallest j with t_j >= tau, largest j with t_j <= T - tau"""
        lo = int(math.ceil(self._k * tau / self._T - _WINDOW_EPS))
        hi = int(math.floor(self._k * (self._T - tau) / self._T + _WINDOW_EPS))
        return max(lo, 0), min(hi, self._k)

    def refine(self, factor: int) -> 'Mesh':
        return Mesh(self._k * factor, self._T)

    def __eq__(self, other) -> bool:
        return isinstance(other, Mesh) and other.k == self._k and other.T == self._T

    def __repr__(self) -> str:
        return f"Mesh(k={self._k}, T={self._T})"


class SweepingProblem:
    """Data of the controlled sweeping problem

    The moving set is C + u(t). When ``u_fixed`` is given the u-path is data
    and only a is a decision; otherwise u is a decision with ||u(t)|| = r on
    [tau, T - tau] and ||u(t)|| in [r - tau, r + tau] near the endpoints.
    """

    def __init__(self, x0, C: Polyhedron, f: Perturbation, T: float,
                 phi: TerminalCost = None, running: RunningCost = None,
                 r: float = None, tau: float = 0.0, u_fixed=None, u_seed=None,
                 M: float = None, K: float = None, terminal_boundary: bool = False,
                 a_bounds: Optional[Tuple[float, float]] = None, name: str = 'problem'):
        self._x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self._C = C
        self._f = f
        self._T = float(T)
        self._phi = phi or TerminalCost('zero')
        self._running = running or RunningCost()
        self._u_fixed = None if u_fixed is None else as_path(u_fixed)
        self._u_seed = None if u_seed is None else np.atleast_1d(np.asarray(u_seed, dtype=float))
        self._tau = float(tau)
        self._terminal_boundary = bool(terminal_boundary)
        self._a_bounds = None if a_bounds is None else (float(a_bounds[0]), float(a_bounds[1]))
        self._name = name
        if r is None and self._u_fixed is not None:
            r = float(np.linalg.norm(self._u_fixed(0.0)))
        self._r = None if r is None else float(r)
        a_bound = 1.0
        if self._a_bounds is not None:
            a_bound = max(abs(self._a_bounds[0]), abs(self._a_bounds[1])) * math.sqrt(f.d)
        self._M = f.growth_constant(a_bound) if M is None else float(M)
        self._K = f.lipschitz_constant() if K is None else float(K)
        self._validate()

    def _validate(self):
        n = self.n
        if self._C.dim != n or self._f.n != n:
            raise errors.DimensionMismatch(
                f"State dimension {n} disagrees with C ({self._C.dim}) or f ({self._f.n})")
        if self._T <= 0:
            raise errors.ConfigError(f"Horizon must be positive, got T={self._T}", key='T')
        if self.u_is_decision:
            if self._r is None or self._r <= 0:
                raise errors.ConfigError(f"Radius must be positive, got r={self._r}", key='radius')
            if not 0.0 <= self._tau <= min(self._r, self._T):
                raise errors.ConfigError(
                    f"tau={self._tau} must lie in [0, min(r, T)]", key='tau')
            if self._u_seed is not None and self._u_seed.shape != (n,):
                raise errors.DimensionMismatch(f"u seed has shape {self._u_seed.shape}")
        else:
            u0 = np.atleast_1d(np.asarray(self._u_fixed(0.0), dtype=float))
            if u0.shape != (n,):
                raise errors.DimensionMismatch(f"Fixed u has shape {u0.shape}, expected ({n},)")
            if not self._C.contains(self._x0 - u0):
                raise errors.InfeasibleStart(
                    f"x0 - u(0) = {self._x0 - u0} is not in C", point=(self._x0 - u0).tolist())

    @property
    def name(self) -> str:
        return self._name

    @property
    def n(self) -> int:
        return len(self._x0)

    @property
    def d(self) -> int:
        return self._f.d

    @property
    def m(self) -> int:
        return self._C.m

    @property
    def T(self) -> float:
        return self._T

    @property
    def x0(self) -> np.ndarray:
        return self._x0.copy()

    @property
    def C(self) -> Polyhedron:
        return self._C

    @property
    def f(self) -> Perturbation:
        return self._f

    @property
    def phi(self) -> TerminalCost:
        return self._phi

    @property
    def running(self) -> RunningCost:
        return self._running

    @property
    def r(self) -> Optional[float]:
        return self._r

    @property
    def tau(self) -> float:
        return self._tau

    @property
    def M(self) -> float:
        return self._M

    @property
    def K(self) -> float:
        return self._K

    @property
    def u_fixed(self) -> Optional[PathLike]:
        return self._u_fixed

    @property
    def u_seed(self) -> Optional[np.ndarray]:
        return self._u_seed

    @property
    def u_is_decision(self) -> bool:
        return self._u_fixed is None

    @property
    def terminal_boundary(self) -> bool:
        return self._terminal_boundary

    @property
    def a_bounds(self) -> Optional[Tuple[float, float]]:
        return self._a_bounds

    def to_dict(self) -> dict:
        return {
            'name': self._name, 'n': self.n, 'd': self.d, 'T': self._T,
            'x0': self._x0.tolist(), 'C': self._C.to_dict(), 'f': self._f.to_dict(),
            'phi': self._phi.to_dict(), 'running': self._running.to_dict(),
            'r': self._r, 'tau': self._tau, 'M': self._M, 'K': self._K,
            'u_decision': self.u_is_decision, 'terminal_boundary': self._terminal_boundary,
        }

    def __repr__(self) -> str:
        return f"SweepingProblem(name={self._name!r}, n={self.n}, d={self.d}, T={self._T})"


class DiscreteTrajectory:
    """Node sequences (x_j, u_j, a_j), j = 0..k, on a uniform mesh

    ``eta`` holds the k x m multipliers recovered by the simulation, when known.
    """

    def __init__(self, mesh: Mesh, x, u, a, eta=None):
        self._mesh = mesh
        self._x = np.asarray(x, dtype=float).reshape(mesh.k + 1, -1)
        self._u = np.asarray(u, dtype=float).reshape(mesh.k + 1, -1)
        self._a = np.asarray(a, dtype=float).reshape(mesh.k + 1, -1)
        if self._x.shape != self._u.shape:
            raise errors.DimensionMismatch(
                f"x has shape {self._x.shape} but u has shape {self._u.shape}")
        self._eta = None if eta is None else np.asarray(eta, dtype=float)

    @property
    def mesh(self) -> Mesh:
        return self._mesh

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def u(self) -> np.ndarray:
        return self._u

    @property
    def a(self) -> np.ndarray:
        return self._a

    @property
    def eta(self) -> Optional[np.ndarray]:
        return self._eta

    @property
    def t(self) -> np.ndarray:
        return self._mesh.nodes

    @property
    def xdot(self) -> np.ndarray:
        return np.diff(self._x, axis=0) / self._mesh.h

    @property
    def udot(self) -> np.ndarray:
        return np.diff(self._u, axis=0) / self._mesh.h

    @property
    def adot(self) -> np.ndarray:
        return np.diff(self._a, axis=0) / self._mesh.h

    def with_eta(self, eta) -> 'DiscreteTrajectory':
        return DiscreteTrajectory(self._mesh, self._x, self._u, self._a, eta=eta)

    def __repr__(self) -> str:
        return f"DiscreteTrajectory(k={self._mesh.k}, n={self._x.shape[1]}, d={self._a.shape[1]})"


def sample_path(path: PathLike, mesh: Mesh) -> np.ndarray:
    return np.array([np.atleast_1d(path(t)) for t in mesh.nodes], dtype=float)


def simulate_nodes(problem: SweepingProblem, mesh: Mesh, U: np.ndarray,
                   A: np.ndarray, check_start: bool = True) -> DiscreteTrajectory:
    """Catching-up scheme on sampled controls
    Args:
        problem(SweepingProblem): problem data
        mesh(Mesh): mesh
        U(np.ndarray): u at the nodes, (k+1) x n
        A(np.ndarray): a at the nodes, (k+1) x d
        check_start(bool): raise InfeasibleStart when x0 - u_0 is outside C
    Returns(DiscreteTrajectory): the trajectory with its multipliers eta
    """
    C, f, h = problem.C, problem.f, mesh.h
    U = np.asarray(U, dtype=float).reshape(mesh.k + 1, problem.n)
    A = np.asarray(A, dtype=float).reshape(mesh.k + 1, problem.d)
    start = problem.x0 - U[0]
    if check_start and not C.contains(start):
        raise errors.InfeasibleStart(f"x0 - u(0) = {start} is not in C", point=start.tolist())
    X = np.empty((mesh.k + 1, problem.n))
    eta = np.zeros((mesh.k, C.m))
    X[0] = problem.x0
    for j in range(mesh.k):
        drifted = X[j] - h * f.value(X[j], A[j])
        X[j + 1], lam = geometry.project_with_multipliers(drifted, C, U[j + 1])
        eta[j] = lam / h
    log.trace(f"[SIM] {problem.name}: k={mesh.k}, x(T)={X[-1]}")
    return DiscreteTrajectory(mesh, X, U, A, eta=eta)


def catching_up(problem: SweepingProblem, u_path: PathLike, a_path: PathLike,
                k: int) -> DiscreteTrajectory:
    """Simulates the sweeping inclusion with controls sampled at the nodes
    Args:
        problem(SweepingProblem): problem data
        u_path: t -> n-vector (or a constant vector)
        a_path: t -> d-vector (or a constant vector)
        k(int): number of mesh intervals
    Returns(DiscreteTrajectory): feasible trajectory
    """
    mesh = Mesh(k, problem.T)
    U = sample_path(as_path(u_path), mesh)
    A = sample_path(as_path(a_path), mesh)
    traj = simulate_nodes(problem, mesh, U, A)
    log.debug(f"[SIM] {problem.name}: simulated k={k}, x(T)={traj.x[-1]}")
    return traj


def apriori_bounds(problem: SweepingProblem, u_path: PathLike,
                   samples: int = 2000) -> Tuple[float, Callable[[float], float]]:
    """State and velocity bounds l and vbound(t) implied by the growth condition
    Args:
        problem(SweepingProblem): problem data (uses M, T and x0)
        u_path: the moving-set path
        samples(int): resolution used when the path does not know its own variation
    Returns(Tuple[float, Callable]): l and t -> 2 (1 + l) M + ||u'(t)||
    """
    u_path = as_path(u_path)
    M, T = problem.M, problem.T
    norm_x0 = float(np.linalg.norm(problem.x0))
    if hasattr(u_path, 'total_variation'):
        variation = u_path.total_variation(T)
    else:
        grid = np.linspace(0.0, T, samples + 1)
        vals = np.array([np.atleast_1d(u_path(t)) for t in grid])
        variation = float(np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1)))
    growth = math.exp(2.0 * M * T)
    bound = norm_x0 + growth * (2.0 * M * T * (1.0 + norm_x0) + variation)

    def speed(t: float) -> float:
        if hasattr(u_path, 'derivative'):
            return float(np.linalg.norm(u_path.derivative(t)))
        step = 1e-6
        lo, hi = max(t - step, 0.0), min(t + step, T)
        return float(np.linalg.norm((np.atleast_1d(u_path(hi)) - np.atleast_1d(u_path(lo))) / (hi - lo)))

    def vbound(t: float) -> float:
        return 2.0 * (1.0 + bound) * M + speed(t)

    log.debug(f"[SIM] a-priori bound l={bound:.6g} (variation of u {variation:.6g})")
    return bound, vbound


def _inclusion_vectors(traj: DiscreteTrajectory, problem: SweepingProblem) -> np.ndarray:
    """-(x_{j+1} - x_j)/h - f(x_j, a_j) per interval"""
    drift = np.array([problem.f.value(traj.x[j], traj.a[j]) for j in range(traj.mesh.k)])
    return -traj.xdot - drift


def eta_from_trajectory(traj: DiscreteTrajectory, problem: SweepingProblem,
                        tol: float = None, convention: str = 'implicit') -> np.ndarray:
    """Recovers the multipliers eta (k x m) of the representation -x' = sum eta_i x*_i + f
    Args:
        traj(DiscreteTrajectory): feasible trajectory
        problem(SweepingProblem): problem data
        tol(float): residual tolerance per interval, scale-aware by default
        convention(str): 'implicit' decomposes at x_{j+1} - u_{j+1} (the catching-up form),
            'explicit' at x_j - u_j
    Returns(np.ndarray): nonnegative k x m matrix, zero outside the active sets
    """
    if convention not in ('implicit', 'explicit'):
        raise errors.ConfigError(f"Unknown convention '{convention}'", key='convention')
    shift = 1 if convention == 'implicit' else 0
    C = problem.C
    vecs = _inclusion_vectors(traj, problem)
    eta = np.zeros((traj.mesh.k, C.m))
    for j, vec in enumerate(vecs):
        point = traj.x[j + shift] - traj.u[j + shift]
        try:
            decomposition = geometry.decompose_normal(vec, point, C, tol=tol)
        except errors.NotInCone as ex:
            raise errors.NotInCone(
                f"Dynamics violated on interval {j} (t={traj.t[j]:.6g}): {ex.message}",
                residual=ex.residual, interval=j)
        support = [i for i, lam in decomposition.multipliers.items()
                   if lam > geometry.STRICT_COMPLEMENTARITY]
        if len(support) > 1:
            geometry.check_independent(C, support)
        eta[j] = decomposition.dense(C.m)
    log.debug(f"[ETA] {problem.name}: max eta {eta.max(initial=0.0):.6g} on k={traj.mesh.k}")
    return eta


def explicit_residuals(traj: DiscreteTrajectory, problem: SweepingProblem) -> np.ndarray:
    """Per-interval residual of the inclusion with the normal cone taken at x_j - u_j"""
    C = problem.C
    vecs = _inclusion_vectors(traj, problem)
    out = np.zeros(traj.mesh.k)
    for j, vec in enumerate(vecs):
        point = geometry.project(traj.x[j] - traj.u[j], C)
        out[j] = geometry.decompose_normal(vec, point, C, strict=False).residual
    return out


def endpoint_derivative_flags(traj: DiscreteTrajectory, problem: SweepingProblem,
                              tol: float = None) -> Dict[str, object]:
    """One-sided difference quotients at t=0 and t=T tested against the inclusion

    Failures are flagged and logged, never raised.
    """
    C, k = problem.C, traj.mesh.k
    vecs = _inclusion_vectors(traj, problem)
    out = {}
    for side, vec, node in (('left', vecs[0], 0), ('right', vecs[-1], k)):
        point = geometry.project(traj.x[node] - traj.u[node], C)
        residual = geometry.decompose_normal(vec, point, C, strict=False).residual
        limit = geometry.default_tol(vec) if tol is None else tol
        out[f'{side}_residual'] = residual
        out[f'{side}_ok'] = bool(residual <= limit)
        if residual > limit:
            log.warning(f"[SIM] one-sided derivative at the {side} endpoint violates the "
                        f"inclusion by {residual:.3e}")
    return out


def step_jacobians(traj: DiscreteTrajectory, problem: SweepingProblem):
    """Derivatives of the catching-up step on the face with positive multipliers
    Returns(Tuple[np.ndarray, np.ndarray, np.ndarray]): per step
        d x_{j+1}/d x_j (k x n x n), d x_{j+1}/d a_j (k x n x d), d x_{j+1}/d u_{j+1} (k x n x n)
    """
    C, f, h, k = problem.C, problem.f, traj.mesh.h, traj.mesh.k
    eta = traj.eta if traj.eta is not None else eta_from_trajectory(traj, problem)
    n, d = problem.n, problem.d
    eye = np.eye(n)
    dx = np.empty((k, n, n))
    da = np.empty((k, n, d))
    du = np.empty((k, n, n))
    for j in range(k):
        support = np.flatnonzero(eta[j] * h > geometry.STRICT_COMPLEMENTARITY)
        proj = geometry.tangent_projector(C, support) if support.size else eye
        dx[j] = proj @ (eye - h * f.jac_x(traj.x[j], traj.a[j]))
        da[j] = -h * proj @ f.jac_a(traj.x[j], traj.a[j])
        du[j] = eye - proj
    return dx, da, du
