"""
Discrete approximation of the sweeping control problem

A ``DiscreteProblem`` fixes a mesh, an optional reference trajectory with its
trust region, and the localization constants (mu_tilde, eps_k). It evaluates
the discrete cost with its gradient, reports the constraint residuals per
family and produces a feasible starting point.
"""
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from sweeping_control import errors, geometry
from sweeping_control.costs import interval_fields
from sweeping_control.dynamics import (DiscreteTrajectory, Mesh, SweepingProblem,
                                       sample_path, simulate_nodes)

log = logging.getLogger(__name__)


def default_eps_k(k: int) -> float:
    """Endpoint band relaxation, nonincreasing in k"""
    return 1.0 / math.sqrt(k)


class DecisionVector:
    """Node arrays x (k+1 x n), u (k+1 x n), a (k+1 x d)

    x_0 is never free; u_0 and a_0 are pinned when the problem has a
    reference, and every u node is pinned when u is data.
    """
    __slots__ = ('_x', '_u', '_a')

    def __init__(self, x, u, a):
        self._x = np.array(x, dtype=float)
        self._u = np.array(u, dtype=float)
        self._a = np.array(a, dtype=float)

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def u(self) -> np.ndarray:
        return self._u

    @property
    def a(self) -> np.ndarray:
        return self._a

    @classmethod
    def from_trajectory(cls, traj: DiscreteTrajectory) -> 'DecisionVector':
        return cls(traj.x, traj.u, traj.a)

    def trajectory(self, mesh: Mesh) -> DiscreteTrajectory:
        return DiscreteTrajectory(mesh, self._x, self._u, self._a)

    def copy(self) -> 'DecisionVector':
        return DecisionVector(self._x, self._u, self._a)

    def flat(self, dp: 'DiscreteProblem') -> np.ndarray:
        u_rows, a_rows = dp.free_rows()
        return np.concatenate([self._x[1:].ravel(), self._u[u_rows].ravel(),
                               self._a[a_rows].ravel()])

    @classmethod
    def from_flat(cls, dp: 'DiscreteProblem', vec, template: 'DecisionVector') -> 'DecisionVector':
        vec = np.asarray(vec, dtype=float)
        if vec.size != dp.decision_size:
            raise errors.DimensionMismatch(
                f"Decision vector has {vec.size} entries, expected {dp.decision_size}")
        out = template.copy()
        u_rows, a_rows = dp.free_rows()
        n, d = dp.problem.n, dp.problem.d
        split_x = dp.mesh.k * n
        split_u = split_x + len(u_rows) * n
        out._x[1:] = vec[:split_x].reshape(-1, n)
        out._u[u_rows] = vec[split_x:split_u].reshape(-1, n)
        out._a[a_rows] = vec[split_u:].reshape(-1, d)
        return out


class FamilyResidual(NamedTuple):
    value: float
    location: Optional[int]


class ResidualReport:
    """Max violation per constraint family"""

    def __init__(self, families: Dict[str, FamilyResidual]):
        self._families = families

    @property
    def families(self) -> Dict[str, FamilyResidual]:
        return self._families

    def __getitem__(self, item: str) -> float:
        return self._families[item].value

    @property
    def max_violation(self) -> float:
        return max((fam.value for fam in self._families.values()), default=0.0)

    @property
    def worst(self) -> Tuple[str, float]:
        if not self._families:
            return '', 0.0
        name = max(self._families, key=lambda key: self._families[key].value)
        return name, self._families[name].value

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol

    def to_dict(self) -> dict:
        return {name: {'value': fam.value, 'location': fam.location}
                for name, fam in sorted(self._families.items())}


def _max_with_location(values: np.ndarray) -> FamilyResidual:
    if values.size == 0:
        return FamilyResidual(0.0, None)
    idx = int(np.argmax(values))
    return FamilyResidual(float(max(values[idx], 0.0)), idx)


class DiscreteProblem:
    def __init__(self, problem: SweepingProblem, k: int,
                 reference: Optional[DiscreteTrajectory] = None, epsilon: float = None,
                 mu_tilde: float = None, eps_k: float = None, proximity_on: bool = None):
        """Creates the discrete problem
        Args:
            problem(SweepingProblem): continuous problem data
            k(int): number of mesh intervals
            reference(DiscreteTrajectory): trajectory to localize around, on the same mesh
                or on a mesh refining it
            epsilon(float): trust-region radius, 1.0 by default when a reference is given
            mu_tilde(float): budget for the u-difference penalties
            eps_k(float): endpoint band relaxation, 1/sqrt(k) by default
            proximity_on(bool): include proximity and budget penalties in the cost,
                defaults to whether a reference is given
        """
        self._problem = problem
        self._mesh = Mesh(k, problem.T)
        self._reference = reference
        self._ratio = 1
        if reference is not None:
            ref_k = reference.mesh.k
            if ref_k % k != 0 or reference.mesh.T != problem.T:
                raise errors.DimensionMismatch(
                    f"Reference mesh k={ref_k} does not refine k={k}")
            self._ratio = ref_k // k
        self._epsilon = (1.0 if epsilon is None else float(epsilon)) if reference is not None \
            else (float('inf') if epsilon is None else float(epsilon))
        if reference is not None and self._epsilon <= 0:
            raise errors.ConfigError("Trust-region radius must be positive", key='epsilon')
        self._eps_k = default_eps_k(k) if eps_k is None else float(eps_k)
        self._proximity_on = (reference is not None) if proximity_on is None else bool(proximity_on)
        if self._proximity_on and reference is None:
            raise errors.ConfigError("Proximity terms need a reference trajectory",
                                     key='proximity_on')
        if mu_tilde is None:
            speed = 0.0
            if reference is not None:
                speed = float(np.max(np.linalg.norm(reference.udot, axis=1), initial=0.0))
            mu_tilde = 10.0 * (1.0 + speed)
        self._mu_tilde = float(mu_tilde)

    @property
    def problem(self) -> SweepingProblem:
        return self._problem

    @property
    def mesh(self) -> Mesh:
        return self._mesh

    @property
    def k(self) -> int:
        return self._mesh.k

    @property
    def reference(self) -> Optional[DiscreteTrajectory]:
        return self._reference

    @property
    def epsilon(self) -> float:
        return self._epsilon

    @property
    def mu_tilde(self) -> float:
        return self._mu_tilde

    @property
    def eps_k(self) -> float:
        return self._eps_k

    @property
    def proximity_on(self) -> bool:
        return self._proximity_on

    @property
    def ratio(self) -> int:
        """Reference intervals per mesh interval"""
        return self._ratio

    @property
    def window(self) -> Tuple[int, int]:
        return self._mesh.window(self._problem.tau)

    @property
    def band(self) -> Tuple[float, float]:
        """Admissible ||u_j|| outside the inner window"""
        r, tau = self._problem.r, self._problem.tau
        return max(r - tau - self._eps_k, 0.0), r + tau + self._eps_k

    def free_rows(self) -> Tuple[List[int], List[int]]:
        k = self._mesh.k
        first = 1 if self._reference is not None else 0
        u_rows = list(range(first, k + 1)) if self._problem.u_is_decision else []
        return u_rows, list(range(first, k + 1))

    @property
    def decision_size(self) -> int:
        u_rows, a_rows = self.free_rows()
        return self._mesh.k * self._problem.n + len(u_rows) * self._problem.n \
            + len(a_rows) * self._problem.d

    def reference_nodes(self) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Reference (x, u, a) at the coarse nodes"""
        if self._reference is None:
            return None
        q = self._ratio
        return self._reference.x[::q], self._reference.u[::q], self._reference.a[::q]

    def reference_rates(self) -> Optional[Dict[str, np.ndarray]]:
        """Reference difference quotients grouped per coarse interval, shape (k, q, dim)"""
        if self._reference is None:
            return None
        k, q = self._mesh.k, self._ratio
        ref = self._reference
        return {'x': ref.xdot.reshape(k, q, -1), 'u': ref.udot.reshape(k, q, -1),
                'a': ref.adot.reshape(k, q, -1)}

    def u_parameterization(self, base_u: np.ndarray) -> 'UParameterization':
        return UParameterization(self, base_u)

    def __repr__(self) -> str:
        return f"DiscreteProblem({self._problem.name!r}, k={self._mesh.k}, " \
            f"proximity_on={self._proximity_on})"


class UParameterization:
    """Free parameters -> u nodes honoring the norm constraints

    Inner-window nodes keep ||u_j|| = r exactly; outer nodes carry a magnitude
    bounded to the relaxed band. Directions are the fixed sign for n = 1, a
    polar angle for n = 2 and a normalized vector for n >= 3.
    """

    def __init__(self, dp: DiscreteProblem, base_u: np.ndarray):
        self._base = np.array(base_u, dtype=float)
        self._n = dp.problem.n
        self._r = dp.problem.r
        self._band = dp.band if dp.problem.u_is_decision else (0.0, 0.0)
        u_rows, _ = dp.free_rows()
        lo, hi = dp.window
        self._entries = []
        offset = 0
        for j in u_rows:
            inner = lo <= j <= hi
            width = self._direction_width() + (0 if inner else 1)
            self._entries.append((j, inner, offset))
            offset += width
        self._size = offset
        self._signs = np.where(self._base[:, 0] < 0.0, -1.0, 1.0) if self._n == 1 else None

    def _direction_width(self) -> int:
        return {1: 0, 2: 1}.get(self._n, self._n)

    @property
    def size(self) -> int:
        return self._size

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        out = []
        for _, inner, _ in self._entries:
            out.extend([(None, None)] * self._direction_width())
            if not inner:
                out.append(self._band)
        return out

    def initial(self, U: np.ndarray) -> np.ndarray:
        params = np.zeros(self._size)
        width = self._direction_width()
        for j, inner, off in self._entries:
            vec = U[j]
            norm = float(np.linalg.norm(vec))
            if self._n == 2:
                params[off] = math.atan2(vec[1], vec[0])
            elif self._n >= 3:
                params[off:off + width] = vec / norm if norm > 0 else np.eye(self._n)[0]
            if not inner:
                params[off + width] = min(max(norm, self._band[0]), self._band[1])
        return params

    def jitter(self, params: np.ndarray, rng: np.random.Generator, spread: float = 0.25) -> np.ndarray:
        """Independent draw per node: directions turned by at most ``spread``,
        outer magnitudes uniform in the band
        Args:
            params(np.ndarray): parameters to start from
            rng(np.random.Generator): random source
            spread(float): half-width of the direction perturbation
        Returns(np.ndarray): new parameters inside the bounds
        """
        out = np.array(params, dtype=float)
        width = self._direction_width()
        for _, inner, off in self._entries:
            if width:
                out[off:off + width] += rng.uniform(-spread, spread, size=width)
                if self._n >= 3 and not np.linalg.norm(out[off:off + width]):
                    out[off] = 1.0
            if not inner:
                out[off + width] = rng.uniform(*self._band)
        return out

    def _direction(self, j: int, params: np.ndarray, off: int):
        """Unit direction at node j and its derivative w.r.t. the direction parameters"""
        if self._n == 1:
            return np.array([self._signs[j]]), np.zeros((1, 0))
        if self._n == 2:
            theta = params[off]
            unit = np.array([math.cos(theta), math.sin(theta)])
            return unit, np.array([[-math.sin(theta)], [math.cos(theta)]])
        w = params[off:off + self._n]
        norm = float(np.linalg.norm(w))
        unit = w / norm
        return unit, (np.eye(self._n) - np.outer(unit, unit)) / norm

    def nodes(self, params: np.ndarray) -> np.ndarray:
        U = self._base.copy()
        width = self._direction_width()
        for j, inner, off in self._entries:
            unit, _ = self._direction(j, params, off)
            rho = self._r if inner else params[off + width]
            U[j] = rho * unit
        return U

    def pullback(self, params: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
        """Chain rule from d/dU (k+1 x n) to d/dparams"""
        out = np.zeros(self._size)
        width = self._direction_width()
        for j, inner, off in self._entries:
            unit, jac = self._direction(j, params, off)
            rho = self._r if inner else params[off + width]
            if width:
                out[off:off + width] = rho * jac.T @ grad_u[j]
            if not inner:
                out[off + width] = unit @ grad_u[j]
        return out


def rate_penalty(d_rates: np.ndarray, ref_rates: np.ndarray, hf: float) -> Tuple[float, np.ndarray]:
    """sum_j sum_i hf ||d_j - r_ji||^2 and its gradient w.r.t. d_j"""
    diff = d_rates[:, None, :] - ref_rates
    value = hf * float(np.sum(diff ** 2))
    return value, 2.0 * hf * np.sum(diff, axis=1)


def budget_terms(U: np.ndarray, h: float) -> Tuple[float, np.ndarray, float, np.ndarray]:
    """First-step speed ||(u_1 - u_0)/h|| and summed second differences with gradients"""
    first = (U[1] - U[0]) / h
    norm_first = float(np.linalg.norm(first))
    g_first = np.zeros_like(U)
    if norm_first > 0:
        g_first[1] += first / (norm_first * h)
        g_first[0] -= first / (norm_first * h)
    second = (U[2:] - 2.0 * U[1:-1] + U[:-2]) / h
    norms = np.linalg.norm(second, axis=1)
    total = float(np.sum(norms))
    g_second = np.zeros_like(U)
    safe = np.where(norms > 0, norms, 1.0)[:, None]
    unit = np.where(norms[:, None] > 0, second / safe, 0.0) / h
    g_second[2:] += unit
    g_second[1:-1] -= 2.0 * unit
    g_second[:-2] += unit
    return norm_first, g_first, total, g_second


def assemble_cost(dp: DiscreteProblem, z: DecisionVector) -> Tuple[float, DecisionVector]:
    """Discrete cost and its gradient w.r.t. every node array
    Args:
        dp(DiscreteProblem): the discrete problem
        z(DecisionVector): point of evaluation
    Returns(Tuple[float, DecisionVector]): cost and gradient (same layout as z)
    """
    problem, mesh = dp.problem, dp.mesh
    h, k = mesh.h, mesh.k
    x, u, a = z.x, z.u, z.a
    if x.shape != (k + 1, problem.n) or u.shape != (k + 1, problem.n) \
            or a.shape != (k + 1, problem.d):
        raise errors.DimensionMismatch(
            f"Decision arrays {x.shape}, {u.shape}, {a.shape} do not match k={k}")
    gx, gu, ga = np.zeros_like(x), np.zeros_like(u), np.zeros_like(a)
    fields = interval_fields(x, u, a, h)
    values, grads = problem.running.evaluate(mesh.nodes[:-1], fields)
    cost = problem.phi.value(x[-1]) + h * float(np.sum(values))
    gx[-1] += problem.phi.gradient(x[-1])
    for name, node_grad in (('x', gx), ('u', gu), ('a', ga)):
        node_grad[:-1] += h * grads[name]
        rate = grads[name + 'dot']
        node_grad[1:] += rate
        node_grad[:-1] -= rate
    if dp.proximity_on:
        ref_rates = dp.reference_rates()
        hf = h / dp.ratio
        for name, node_grad in (('x', gx), ('u', gu), ('a', ga)):
            value, grad_rate = rate_penalty(fields[name + 'dot'], ref_rates[name], hf)
            cost += value
            node_grad[1:] += grad_rate / h
            node_grad[:-1] -= grad_rate / h
        first, g_first, second, g_second = budget_terms(u, h)
        for size, grad in ((first, g_first), (second, g_second)):
            excess = max(size - dp.mu_tilde, 0.0)
            cost += excess ** 2
            gu += 2.0 * excess * grad
    return float(cost), DecisionVector(gx, gu, ga)


def constraint_residuals(dp: DiscreteProblem, z: DecisionVector) -> ResidualReport:
    """Max violation per constraint family, with the offending node or interval"""
    problem, mesh = dp.problem, dp.mesh
    C, h, k = problem.C, mesh.h, mesh.k
    x, u, a = z.x, z.u, z.a
    families = {}

    dyn = np.zeros(k)
    for j in range(k):
        vec = -(x[j + 1] - x[j]) / h - problem.f.value(x[j], a[j])
        point = geometry.project(x[j + 1] - u[j + 1], C)
        dyn[j] = geometry.decompose_normal(vec, point, C, strict=False).residual
    families['dynamics'] = _max_with_location(dyn)

    values = (x - u) @ C.generators.T if C.m else np.zeros((k + 1, 1))
    families['state'] = _max_with_location(np.max(values, axis=1))
    families['endpoint'] = FamilyResidual(float(max(np.max(values[-1], initial=0.0), 0.0)), k)
    if problem.terminal_boundary:
        families['terminal_boundary'] = FamilyResidual(
            float(abs(np.max(values[-1]))), k)

    if problem.u_is_decision:
        norms = np.linalg.norm(u, axis=1)
        lo, hi = dp.window
        band_lo, band_hi = dp.band
        viol = np.maximum(band_lo - norms, 0.0) + np.maximum(norms - band_hi, 0.0)
        inner = np.arange(k + 1)
        inner = (inner >= lo) & (inner <= hi)
        viol[inner] = np.abs(norms[inner] - problem.r)
        families['u_norm'] = _max_with_location(viol)

    first, _, second, _ = budget_terms(u, h)
    families['mu_first'] = FamilyResidual(max(first - (dp.mu_tilde + 1.0), 0.0), 0)
    families['mu_second'] = FamilyResidual(max(second - (dp.mu_tilde + 1.0), 0.0), None)

    if dp.reference is not None:
        rx, ru, ra = dp.reference_nodes()
        dist = np.linalg.norm(np.hstack([x - rx, u - ru, a - ra]), axis=1)
        families['trust_sup'] = _max_with_location(dist - dp.epsilon / 2.0)
        ref_rates = dp.reference_rates()
        fields = interval_fields(x, u, a, h)
        energy = sum(rate_penalty(fields[name + 'dot'], ref_rates[name], h / dp.ratio)[0]
                     for name in ('x', 'u', 'a'))
        families['trust_w12'] = FamilyResidual(max(energy - dp.epsilon / 2.0, 0.0), None)
    return ResidualReport(families)


def _seed_direction(problem: SweepingProblem) -> np.ndarray:
    """u(0) of norm r keeping x0 - u(0) in C"""
    n, r, C = problem.n, problem.r, problem.C
    candidates = []
    if problem.u_seed is not None:
        candidates.append(problem.u_seed)
    if np.linalg.norm(problem.x0) > 0:
        candidates.append(problem.x0)
    if C.m:
        candidates.append(np.sum(C.generators, axis=0))
    for i in range(n):
        candidates.extend([np.eye(n)[i], -np.eye(n)[i]])
    for cand in candidates:
        norm = float(np.linalg.norm(cand))
        if norm == 0:
            continue
        u0 = r * np.asarray(cand, dtype=float) / norm
        if C.contains(problem.x0 - u0):
            return u0
    raise errors.InfeasibleStart(
        f"No constant u of norm {r} keeps x0 - u(0) in C", point=problem.x0.tolist())


def feasible_seed(dp: DiscreteProblem) -> DecisionVector:
    """Feasible start: constant u of norm r (or the given u), a = 0, x by catching-up"""
    problem, mesh = dp.problem, dp.mesh
    k = mesh.k
    if not problem.u_is_decision:
        U = sample_path(problem.u_fixed, mesh)
    elif dp.reference is not None:
        U = np.tile(dp.reference_nodes()[1][0], (k + 1, 1))
    else:
        U = np.tile(_seed_direction(problem), (k + 1, 1))
    A = np.zeros((k + 1, problem.d))
    if problem.a_bounds is not None:
        A[:] = min(max(0.0, problem.a_bounds[0]), problem.a_bounds[1])
    if dp.reference is not None:
        A[0] = dp.reference_nodes()[2][0]
    traj = simulate_nodes(problem, mesh, U, A)
    log.debug(f"[SEED] {problem.name}: u0={U[0]}, x(T)={traj.x[-1]}")
    return DecisionVector.from_trajectory(traj)
