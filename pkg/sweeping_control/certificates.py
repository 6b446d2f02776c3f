"""
Dual certificates for the discrete and continuous optimality systems

A certificate is the tuple (lambda, p, q, eta, gamma, xi, w, v) witnessing the
necessary optimality conditions along one trajectory. The builders write every
dual quantity as an affine function of a few unknowns: the terminal adjoint,
the terminal atom of gamma, the gamma weights on active constraints, the band
multipliers of u and the selections at kinks of the running cost. For each
trial lambda the stacked conditions are solved in least squares. The checkers
recompute every condition from the stored arrays.

Layout of p, q, w and v rows: x block (n), u block (n), a block (d).
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import lsq_linear

from sweeping_control import errors, geometry
from sweeping_control.costs import interval_fields
from sweeping_control.dynamics import (DiscreteTrajectory, Mesh, SweepingProblem,
                                       endpoint_derivative_flags, eta_from_trajectory)
from sweeping_control.transcription import DiscreteProblem

log = logging.getLogger(__name__)

LAMBDA_GRID = tuple(2.0 ** -i for i in range(9))
RIDGE = 1e-10
# premises of implications must hold by this multiple of tol
MARGIN_FACTOR = 10.0
ATOM_RATIO = 10.0
DIVERGENCE_RATIO = 10.0

CONDITIONS = (
    'primal_representation', 'adjoint_equation', 'q_representation',
    'velocity_multiplier_u', 'velocity_multiplier_a', 'complementarity_inactive',
    'complementarity_active', 'gamma_sign_structure', 'gamma_inactive', 'xi_normal_cone',
    'transversality_x', 'transversality_u', 'transversality_a', 'endpoint_cone',
    'left_endpoint', 'measure_nonatomicity', 'nontriviality', 'enhanced_nontriviality',
)


def _blocks(n: int, d: int) -> Tuple[slice, slice, slice]:
    return slice(0, n), slice(n, 2 * n), slice(2 * n, 2 * n + d)


def _reverse_cumsum(values: np.ndarray) -> np.ndarray:
    return np.cumsum(values[::-1], axis=0)[::-1]


def _activity(C: geometry.Polyhedron, traj: DiscreteTrajectory, margin: float) -> np.ndarray:
    """(k+1) x m mask of constraints active at each node within margin * (1 + ||x - u||)"""
    diff = traj.x - traj.u
    gap = diff @ C.generators.T
    scale = 1.0 + np.linalg.norm(diff, axis=1)
    return gap >= -margin * scale[:, None]


def _band_bounds(norm: float, node: int, window: Tuple[int, int], band: Tuple[float, float],
                 margin: float) -> Optional[Tuple[float, float]]:
    """Bounds of the normal cone N(||u||; band) at a node, None when it is {0}"""
    lo, hi = window
    if lo <= node <= hi:
        return -np.inf, np.inf
    band_lo, band_hi = band
    edge = margin * (1.0 + band_hi)
    at_hi = norm >= band_hi - edge
    at_lo = norm <= band_lo + edge
    if at_hi and at_lo:
        return -np.inf, np.inf
    if at_hi:
        return 0.0, np.inf
    if at_lo:
        return -np.inf, 0.0
    return None


class Measure:
    """Vector measure on a mesh: a mass per interval plus point atoms"""

    def __init__(self, mesh: Mesh, interval_mass, atoms: Sequence[Tuple[float, np.ndarray]] = ()):
        self._mesh = mesh
        self._interval_mass = np.asarray(interval_mass, dtype=float).reshape(mesh.k, -1)
        self._atoms = [(float(t), np.atleast_1d(np.asarray(vec, dtype=float))) for t, vec in atoms]

    @property
    def dim(self) -> int:
        return self._interval_mass.shape[1]

    @property
    def interval_mass(self) -> np.ndarray:
        return self._interval_mass

    @property
    def density(self) -> np.ndarray:
        return self._interval_mass / self._mesh.h

    @property
    def atoms(self) -> List[Tuple[float, np.ndarray]]:
        return list(self._atoms)

    def _selection(self, lo: float, hi: float):
        eps = 1e-12 * self._mesh.T
        nodes = self._mesh.nodes
        inside = (nodes[:-1] >= lo - eps) & (nodes[1:] <= hi + eps)
        atoms = [vec for t, vec in self._atoms if lo - eps <= t <= hi + eps]
        return inside, atoms

    def mass(self, lo: float, hi: float) -> np.ndarray:
        """Measure of [lo, hi]; intervals count when they lie inside it"""
        inside, atoms = self._selection(lo, hi)
        return np.sum(self._interval_mass[inside], axis=0) + sum(atoms, np.zeros(self.dim))

    def variation(self, lo: float, hi: float) -> float:
        inside, atoms = self._selection(lo, hi)
        total = float(np.sum(np.linalg.norm(self._interval_mass[inside], axis=1)))
        return total + sum(float(np.linalg.norm(vec)) for vec in atoms)

    def tail(self, t: float) -> np.ndarray:
        """Measure of [t, T]"""
        return self.mass(t, self._mesh.T)

    def to_dict(self) -> dict:
        return {
            'interval_mass': self._interval_mass.tolist(),
            'atoms': [{'t': t, 'mass': vec.tolist()} for t, vec in self._atoms],
        }


@dataclass
class ConditionResult:
    name: str
    passed: bool
    residual: float
    tol: float
    location: Optional[int] = None
    t: Optional[float] = None
    note: str = ''

    def to_dict(self) -> dict:
        return {'passed': self.passed, 'residual': self.residual, 'tol': self.tol,
                'location': self.location, 't': self.t, 'note': self.note}


class CheckReport:
    """Per-condition residuals with the overall verdict"""

    def __init__(self, mode: str, conditions: Dict[str, ConditionResult],
                 degeneracy: Dict[str, bool], lam: float, scale: float, notes: List[str] = None):
        self._mode = mode
        self._conditions = conditions
        self._degeneracy = degeneracy
        self._lam = lam
        self._scale = scale
        self._notes = notes or []

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def conditions(self) -> Dict[str, ConditionResult]:
        return self._conditions

    @property
    def degeneracy(self) -> Dict[str, bool]:
        return self._degeneracy

    @property
    def notes(self) -> List[str]:
        return self._notes

    @property
    def passed(self) -> bool:
        return all(cond.passed for cond in self._conditions.values())

    @property
    def verdict(self) -> str:
        return 'pass' if self.passed else 'fail'

    @property
    def failing(self) -> List[str]:
        return [name for name, cond in self._conditions.items() if not cond.passed]

    def __getitem__(self, item: str) -> ConditionResult:
        return self._conditions[item]

    def to_dict(self) -> dict:
        return {
            'mode': self._mode, 'verdict': self.verdict, 'failing': self.failing,
            'lambda': self._lam, 'nontriviality_sum': self._scale,
            'conditions': {name: cond.to_dict() for name, cond in self._conditions.items()},
            'degeneracy': dict(self._degeneracy), 'notes': list(self._notes),
        }

    def __repr__(self) -> str:
        return f"CheckReport(mode={self._mode!r}, verdict={self.verdict!r}, failing={self.failing})"


@dataclass
class _Certificate:
    lam: float
    p: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    gamma_T: np.ndarray
    xi: np.ndarray
    nu_T: float
    s: np.ndarray
    w: np.ndarray
    v: np.ndarray
    kink_width: np.ndarray
    generators: np.ndarray
    trajectory: DiscreteTrajectory
    residual: float = 0.0
    lambda_trial: float = 0.0
    consistent: bool = True

    @property
    def mesh(self) -> Mesh:
        return self.trajectory.mesh

    @property
    def k(self) -> int:
        return self.trajectory.mesh.k

    @property
    def v_effective(self) -> np.ndarray:
        return self.v

    def gamma_measure(self) -> Measure:
        """gamma as a measure in R^n: interval masses plus the terminal atom"""
        return Measure(self.mesh, self.gamma @ self.generators, [(self.mesh.T, self.gamma_T)])

    def xi_measure(self) -> Measure:
        atoms = [(t, np.array([val])) for t, val in zip(self.mesh.nodes, self.xi) if val != 0.0]
        return Measure(self.mesh, np.zeros((self.k, 1)), atoms)

    def scaled(self, factor: float):
        """Same certificate with every dual multiplied by factor"""
        return dataclasses.replace(
            self, lam=self.lam * factor, p=self.p * factor, q=self.q * factor,
            gamma=self.gamma * factor, gamma_T=self.gamma_T * factor, xi=self.xi * factor,
            nu_T=self.nu_T * factor, s=self.s * factor)

    def to_dict(self) -> dict:
        return {
            'k': self.k, 'T': self.mesh.T, 'lambda': self.lam, 'residual': self.residual,
            'lambda_trial': self.lambda_trial, 'consistent': self.consistent,
            'p': self.p.tolist(), 'q': self.q.tolist(), 'eta': self.eta.tolist(),
            'gamma': self.gamma.tolist(), 'gamma_T': self.gamma_T.tolist(),
            'xi': self.xi.tolist(), 'nu_T': self.nu_T, 's': self.s.tolist(),
        }


@dataclass
class DiscreteCertificate(_Certificate):
    theta: Optional[np.ndarray] = None

    @property
    def v_effective(self) -> np.ndarray:
        if self.theta is None:
            return self.v
        return self.v + self.theta / self.mesh.h

    def to_dict(self) -> dict:
        out = super().to_dict()
        out['kind'] = 'discrete'
        if self.theta is not None:
            out['theta'] = self.theta.tolist()
        return out


@dataclass
class ContinuousCertificate(_Certificate):
    # interior atoms of gamma detected across refinements, reported only
    atoms: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    levels: List[int] = field(default_factory=list)

    def gamma_measure(self) -> Measure:
        interval = self.gamma @ self.generators
        atoms = []
        nodes = self.mesh.nodes
        for t, vec in self.atoms:
            j = int(np.argmin(np.abs(nodes[:-1] - t)))
            interval[j] = interval[j] - vec
            atoms.append((t, vec))
        atoms.append((self.mesh.T, self.gamma_T))
        return Measure(self.mesh, interval, atoms)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update(kind='continuous', levels=list(self.levels),
                   gamma_measure=self.gamma_measure().to_dict(),
                   xi_measure=self.xi_measure().to_dict())
        return out


class _Trial(NamedTuple):
    lam: float
    omega: np.ndarray
    worst: float
    scale: float

    @property
    def normalized(self) -> float:
        if self.scale > 0:
            return self.worst / self.scale
        return 0.0 if self.worst == 0.0 else float('inf')


class _DualSystem:
    """Affine model of the duals along a trajectory

    p (k+1 x D) and q (k x D) are stored as coefficient arrays with a trailing
    axis of length N+1: the first N entries multiply the unknowns, the last one
    multiplies lambda.
    """

    def __init__(self, problem: SweepingProblem, traj: DiscreteTrajectory, mode: str, tol: float,
                 band: Optional[Tuple[float, float]] = None, window: Tuple[int, int] = (0, 0),
                 theta: Optional[np.ndarray] = None):
        self.problem = problem
        self.traj = traj
        self.mode = mode
        self.tol = tol
        self.band = band
        self.window = window
        self.margin = MARGIN_FACTOR * tol
        mesh = traj.mesh
        self.k, self.h = mesh.k, mesh.h
        self.n, self.d, self.m = problem.n, problem.d, problem.m
        self.D = 2 * self.n + self.d
        fields = interval_fields(traj.x, traj.u, traj.a, self.h)
        sub = problem.running.subgradients(mesh.nodes[:-1], fields)
        self.w = np.hstack([sub.w['x'], sub.w['u'], sub.w['a']])
        self.v = np.hstack([sub.v['x'], sub.v['u'], sub.v['a']])
        self.theta = theta
        self.v_eff = self.v if theta is None else self.v + theta / self.h
        self.kink_width = np.where(sub.kink_mask, sub.kink_width, 0.0)
        self.eta = eta_from_trajectory(traj, problem)
        self.active = _activity(problem.C, traj, self.margin)
        self._layout()
        self._propagate()
        self._assemble_rows()
        log.debug(f"[CERT] {problem.name}: {self.N} unknowns, {self.A.shape[0]} conditions "
                  f"({mode}, k={self.k})")

    def _add(self, lower: float = -np.inf, upper: float = np.inf) -> int:
        self._lower.append(lower)
        self._upper.append(upper)
        return len(self._lower) - 1

    def _layout(self):
        n, d, k = self.n, self.d, self.k
        self._lower, self._upper = [], []
        components = list(range(n))
        if self.problem.u_is_decision:
            components += list(range(n, 2 * n))
        components += list(range(2 * n, self.D))
        self.p_end = {comp: self._add() for comp in components}
        self.gamma_T_cols = [self._add() for _ in range(n)]
        self.gamma_cols = {}
        for j in range(k - 1):
            for i in np.flatnonzero(self.active[j + 1]):
                self.gamma_cols[(j, int(i))] = self._add()
        self.xi_cols = {}
        self.nu_col = None
        if self.problem.u_is_decision:
            norms = np.linalg.norm(self.traj.u, axis=1)
            for node in range(k + 1):
                bounds = _band_bounds(norms[node], node, self.window, self.band, self.margin)
                if bounds is not None:
                    self.xi_cols[node] = self._add(*bounds)
            if self.mode == 'discrete':
                self.nu_col = self.xi_cols.get(k)
            else:
                bounds = _band_bounds(norms[k], k, self.window, self.band, self.margin)
                if bounds is not None:
                    self.nu_col = self._add(*bounds)
        self.s_cols = {}
        for j, c in zip(*np.nonzero(self.kink_width > 0.0)):
            self.s_cols[(int(j), int(c))] = self._add()
        self.N = len(self._lower)

    def _propagate(self):
        problem, traj = self.problem, self.traj
        n, k, h, N, D = self.n, self.k, self.h, self.N, self.D
        gens = problem.C.generators
        x_, u_, a_ = _blocks(n, self.d)
        P = np.zeros((k + 1, D, N + 1))
        Q = np.zeros((k, D, N + 1))
        Y = np.zeros((k, n, N + 1))
        for comp, col in self.p_end.items():
            P[k, comp, col] = 1.0
        gamma = np.zeros((n, N + 1))
        for i, col in enumerate(self.gamma_T_cols):
            gamma[i, col] = 1.0
        xi = np.zeros((n, N + 1))
        if k in self.xi_cols:
            xi[:, self.xi_cols[k]] += 2.0 * traj.u[k]
        for j in range(k - 1, -1, -1):
            for i in range(self.m):
                col = self.gamma_cols.get((j, i))
                if col is not None:
                    gamma[:, col] += gens[i]
            if j in self.xi_cols:
                xi[:, self.xi_cols[j]] += 2.0 * traj.u[j]
            Q[j, x_] = P[j + 1, x_] - gamma
            Q[j, u_] = P[j + 1, u_] - xi + gamma
            Q[j, a_] = P[j + 1, a_]
            y = -Q[j, x_]
            y[:, N] += self.v_eff[j, x_]
            Y[j] = y
            jac_x = problem.f.jac_x(traj.x[j], traj.a[j])
            jac_a = problem.f.jac_a(traj.x[j], traj.a[j])
            P[j, x_] = P[j + 1, x_] - h * (jac_x.T @ y)
            P[j, x_, N] -= h * self.w[j, x_]
            P[j, u_] = P[j + 1, u_]
            P[j, u_, N] -= h * self.w[j, u_]
            P[j, a_] = P[j + 1, a_] - h * (jac_a.T @ y)
            P[j, a_, N] -= h * self.w[j, a_]
        self.P, self.Q, self.Y = P, Q, Y

    def _assemble_rows(self):
        problem, traj = self.problem, self.traj
        n, d, k, N = self.n, self.d, self.k, self.N
        gens = problem.C.generators
        x_, u_, a_ = _blocks(n, d)
        blocks, names = [], []

        def emit(name: str, rows: np.ndarray):
            rows = rows.reshape(-1, N + 1)
            blocks.append(rows)
            names.extend([name] * rows.shape[0])

        rows = self.Q[:, a_].copy()
        rows[:, :, N] -= self.v_eff[:, a_]
        for (j, c), col in self.s_cols.items():
            rows[j, c, col] -= 1.0
        emit('velocity_multiplier_a', rows)
        if problem.u_is_decision:
            rows = self.Q[:, u_].copy()
            rows[:, :, N] -= self.v_eff[:, u_]
            emit('velocity_multiplier_u', rows)
        for j, i in zip(*np.nonzero(self.eta > self.margin)):
            emit('complementarity_active', gens[i] @ self.Y[j])
        eta_T = gens.T @ self.eta[k - 1]
        rows = -self.P[k, x_].copy()
        rows[:, N] -= eta_T + problem.phi.gradient(traj.x[k])
        emit('transversality_x', rows)
        if problem.u_is_decision:
            rows = self.P[k, u_].copy()
            rows[:, N] -= eta_T
            if self.nu_col is not None:
                sign = 1.0 if self.mode == 'continuous' else -1.0
                rows[:, self.nu_col] -= sign * 2.0 * traj.u[k]
            emit('transversality_u', rows)
        emit('transversality_a', self.P[k, a_].copy())
        stacked = np.vstack(blocks)
        self.A, self.b = stacked[:, :N], stacked[:, N]
        self.row_names = names

    def scale(self, full: np.ndarray) -> float:
        """Nontriviality sum of a coefficient vector (unknowns followed by lambda)"""
        x_, u_, a_ = _blocks(self.n, self.d)
        lam = float(full[-1])
        decision = self.problem.u_is_decision
        if self.mode == 'continuous':
            total = lam + float(np.linalg.norm(self.P[self.k] @ full))
            if decision:
                total += float(np.linalg.norm(self.Q[0, u_] @ full))
            return total
        total = lam + float(sum(abs(full[col]) for col in self.xi_cols.values()))
        total += float(np.linalg.norm(self.P[0, a_] @ full))
        if decision:
            total += float(np.linalg.norm(self.P[0, u_] @ full))
        return total

    def _scale_rows(self) -> np.ndarray:
        x_, u_, a_ = _blocks(self.n, self.d)
        if self.mode == 'continuous':
            rows = [self.P[self.k]]
            if self.problem.u_is_decision:
                rows.append(self.Q[0, u_])
        else:
            rows = [self.P[0, a_]]
            if self.problem.u_is_decision:
                rows.append(self.P[0, u_])
            unit = np.zeros((len(self.xi_cols), self.N + 1))
            for row, col in enumerate(self.xi_cols.values()):
                unit[row, col] = 1.0
            rows.append(unit)
        return np.vstack(rows)[:, :self.N]

    def trial(self, omega: np.ndarray, lam: float) -> _Trial:
        residual = self.A @ omega + lam * self.b
        worst = float(np.max(np.abs(residual), initial=0.0))
        return _Trial(lam=lam, omega=omega, worst=worst, scale=self.scale(np.append(omega, lam)))

    def zero(self) -> _Trial:
        return self.trial(np.zeros(self.N), 0.0)

    def solve(self, lam: float) -> _Trial:
        """Least-squares duals for a fixed lambda > 0"""
        N = self.N
        if N == 0:
            return self.trial(np.zeros(0), lam)
        lower = np.array(self._lower)
        upper = np.array(self._upper)
        for (j, c), col in self.s_cols.items():
            lower[col] = -lam * self.kink_width[j, c]
            upper[col] = lam * self.kink_width[j, c]
        matrix = np.vstack([self.A, math.sqrt(RIDGE) * np.eye(N)])
        rhs = np.concatenate([-lam * self.b, np.zeros(N)])
        try:
            if np.all(np.isinf(lower)) and np.all(np.isinf(upper)):
                omega = np.linalg.lstsq(matrix, rhs, rcond=None)[0]
            else:
                omega = lsq_linear(matrix, rhs, bounds=(lower, upper), method='bvls').x
        except (ValueError, np.linalg.LinAlgError) as ex:
            raise errors.NoConsistentDuals(f"Dual least-squares solve failed: {ex}", lam=lam)
        if not np.all(np.isfinite(omega)):
            raise errors.NoConsistentDuals("Dual least-squares solve returned non-finite values",
                                           lam=lam)
        return self.trial(omega, lam)

    def solve_abnormal(self) -> Optional[_Trial]:
        """lambda = 0: a null vector of the homogeneous system with the largest nontriviality part"""
        keep = [col for col in range(self.N) if col not in set(self.s_cols.values())]
        if not keep:
            return None
        basis = null_space(self.A[:, keep], rcond=1e-10)
        if basis.shape[1] == 0:
            return None
        weights = self._scale_rows()[:, keep] @ basis
        if weights.size == 0:
            return None
        _, sv, vt = np.linalg.svd(weights)
        if sv.size == 0 or sv[0] <= 1e-12:
            return None
        vec = basis @ vt[0]
        lower = np.array(self._lower)[keep]
        upper = np.array(self._upper)[keep]
        slack = 1e-9 * float(np.max(np.abs(vec)))
        for sign in (1.0, -1.0):
            cand = sign * vec
            if np.all(cand >= lower - slack) and np.all(cand <= upper + slack):
                omega = np.zeros(self.N)
                omega[keep] = np.clip(cand, lower, upper)
                return self.trial(omega, 0.0)
        return None

    def worst_row(self, trial: _Trial) -> str:
        residual = np.abs(self.A @ trial.omega + trial.lam * self.b)
        if residual.size == 0:
            return ''
        return self.row_names[int(np.argmax(residual))]

    def unpack(self, trial: _Trial) -> dict:
        """Normalized arrays of a trial"""
        full = np.append(trial.omega, trial.lam)
        if trial.scale > 0:
            full = full / trial.scale
        gamma = np.zeros((self.k, self.m))
        for (j, i), col in self.gamma_cols.items():
            gamma[j, i] = full[col]
        xi = np.zeros(self.k + 1)
        for node, col in self.xi_cols.items():
            xi[node] = full[col]
        s = np.zeros((self.k, self.d))
        for (j, c), col in self.s_cols.items():
            s[j, c] = full[col]
        return dict(
            lam=float(full[-1]), p=self.P @ full, q=self.Q @ full, eta=self.eta.copy(),
            gamma=gamma, gamma_T=full[self.gamma_T_cols].copy(), xi=xi,
            nu_T=float(full[self.nu_col]) if self.nu_col is not None else 0.0, s=s,
            w=self.w.copy(), v=self.v.copy(), kink_width=self.kink_width.copy(),
            generators=self.problem.C.generators.copy(), trajectory=self.traj,
            residual=trial.normalized, lambda_trial=trial.lam)


def _select(system: _DualSystem, tol: float) -> Tuple[_Trial, bool]:
    """Smallest normalized residual over the lambda grid, then the lambda = 0 branch"""
    best = None
    for lam in LAMBDA_GRID:
        trial = system.solve(lam)
        log.trace(f"[CERT] lambda={lam:.4g}: normalized residual {trial.normalized:.3e}")
        if best is None or trial.normalized < best.normalized:
            best = trial
    if best.normalized <= tol:
        log.debug(f"[CERT] consistent at lambda={best.lam:.4g}, residual {best.normalized:.3e}")
        return best, True
    log.info(f"[CERT] no consistent multipliers with lambda > 0 (best {best.normalized:.3e} "
             f"at lambda={best.lam:.4g}, worst condition {system.worst_row(best)})")
    abnormal = system.solve_abnormal()
    if abnormal is not None and abnormal.scale > tol and abnormal.normalized <= tol:
        log.info(f"[CERT] abnormal certificate found, residual {abnormal.normalized:.3e}")
        return abnormal, True
    log.warning("[CERT] only the zero certificate remains; it cannot satisfy nontriviality")
    zero = system.zero()
    return _Trial(lam=0.0, omega=zero.omega, worst=best.normalized, scale=0.0), False


def _theta(dp: DiscreteProblem, traj: DiscreteTrajectory) -> Optional[np.ndarray]:
    """Proximity contributions 2h (d_j - mean reference rate) per interval, k x D"""
    if not dp.proximity_on:
        return None
    rates = dp.reference_rates()
    fields = interval_fields(traj.x, traj.u, traj.a, dp.mesh.h)
    parts = [2.0 * dp.mesh.h * (fields[name + 'dot'] - rates[name].mean(axis=1))
             for name in ('x', 'u', 'a')]
    return np.hstack(parts)


def _solution_trajectory(dp: DiscreteProblem, sol) -> DiscreteTrajectory:
    if sol.trajectory is not None:
        return sol.trajectory
    return sol.z.trajectory(dp.mesh)


def _continuous_band(problem: SweepingProblem) -> Optional[Tuple[float, float]]:
    if not problem.u_is_decision:
        return None
    return problem.r - problem.tau, problem.r + problem.tau


def build_discrete_certificate(dp: DiscreteProblem, sol, tol: float = 1e-6) -> DiscreteCertificate:
    """Dual certificate of the discrete optimality system at a solver output
    Args:
        dp(DiscreteProblem): the discrete problem
        sol(DiscreteSolution): feasible solution
        tol(float): consistency tolerance on the normalized residual
    Returns(DiscreteCertificate): certificate normalized to a unit nontriviality sum,
        or the zero certificate (``consistent`` False) when no multipliers fit
    """
    if sol.violation > max(tol, 1e-6):
        log.warning(f"[CERT] {dp.problem.name}: solution violates constraints by "
                    f"{sol.violation:.3e}")
    traj = _solution_trajectory(dp, sol)
    theta = _theta(dp, traj)
    band = dp.band if dp.problem.u_is_decision else None
    system = _DualSystem(dp.problem, traj, 'discrete', tol, band=band, window=dp.window,
                         theta=theta)
    trial, consistent = _select(system, tol)
    cert = DiscreteCertificate(**system.unpack(trial), consistent=consistent, theta=theta)
    log.info(f"[CERT] {dp.problem.name}: discrete certificate lambda={cert.lam:.6g}, "
             f"residual {cert.residual:.3e}, consistent={consistent}")
    return cert


def build_continuous_certificate(problem: SweepingProblem, traj: DiscreteTrajectory,
                                 tol: float = 1e-6) -> ContinuousCertificate:
    """Continuous-time certificate of a candidate sampled on a mesh"""
    system = _DualSystem(problem, traj, 'continuous', tol, band=_continuous_band(problem),
                         window=traj.mesh.window(problem.tau))
    trial, consistent = _select(system, tol)
    cert = ContinuousCertificate(**system.unpack(trial), consistent=consistent,
                                 levels=[traj.mesh.k])
    log.info(f"[CERT] {problem.name}: continuous certificate lambda={cert.lam:.6g}, "
             f"residual {cert.residual:.3e}, consistent={consistent}")
    return cert


def limit_certificate(seq: Sequence[_Certificate], tol: float = 1e-6) -> ContinuousCertificate:
    """Continuous certificate from certificates over mesh refinements

    The finest level supplies the duals. Intervals whose gamma mass exceeds
    ATOM_RATIO times the mean of their neighbors are reported as atoms.
    """
    if len(seq) < 2:
        raise errors.InconsistentSequence(
            f"A limit needs at least two refinement levels, got {len(seq)}")
    ordered = sorted(seq, key=lambda cert: cert.k)
    for coarse, fine in zip(ordered, ordered[1:]):
        if fine.k == coarse.k or fine.mesh.T != coarse.mesh.T:
            raise errors.DimensionMismatch(
                f"Levels k={coarse.k} and k={fine.k} do not form a refinement sequence")
        size_coarse = float(np.max(np.abs(coarse.p), initial=0.0))
        size_fine = float(np.max(np.abs(fine.p), initial=0.0))
        if size_fine > DIVERGENCE_RATIO * max(size_coarse, tol):
            raise errors.InconsistentSequence(
                f"Adjoint norms diverge: {size_coarse:.3e} at k={coarse.k}, "
                f"{size_fine:.3e} at k={fine.k}", levels=[coarse.k, fine.k])
    finest = ordered[-1]
    interval = finest.gamma @ finest.generators
    masses = np.linalg.norm(interval, axis=1)
    atoms = []
    nodes = finest.mesh.nodes
    for j, mass in enumerate(masses):
        neighbors = [masses[i] for i in (j - 1, j + 1) if 0 <= i < len(masses)]
        reference = float(np.mean(neighbors)) if neighbors else 0.0
        if mass > tol and mass > ATOM_RATIO * reference:
            atoms.append((float(nodes[j]), interval[j].copy()))
    if atoms:
        log.info(f"[CERT] atom(s) of gamma detected at t={[round(t, 6) for t, _ in atoms]}")
    fields_ = {f.name: getattr(finest, f.name) for f in dataclasses.fields(_Certificate)}
    fields_['v'] = finest.v_effective
    return ContinuousCertificate(**fields_, atoms=atoms, levels=[cert.k for cert in ordered])


def _sup(values: np.ndarray) -> Tuple[float, Optional[int]]:
    """Largest absolute entry per leading index, with that index"""
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0.0, None
    per = values.reshape(values.shape[0], -1).max(axis=1)
    idx = int(np.argmax(per))
    return float(per[idx]), idx


class _Checker:
    """Evaluates every condition of a certificate along a trajectory"""

    def __init__(self, problem: SweepingProblem, traj: DiscreteTrajectory, cert: _Certificate,
                 mode: str, tol: float, band: Optional[Tuple[float, float]],
                 window: Tuple[int, int]):
        self.problem, self.traj, self.cert = problem, traj, cert
        self.mode, self.tol, self.band, self.window = mode, tol, band, window
        self.margin = MARGIN_FACTOR * tol
        mesh = traj.mesh
        self.k, self.h = mesh.k, mesh.h
        n, d = problem.n, problem.d
        self.D = 2 * n + d
        if cert.p.shape != (self.k + 1, self.D) or cert.q.shape != (self.k, self.D) \
                or cert.gamma.shape != (self.k, problem.m):
            raise errors.DimensionMismatch(
                f"Certificate with p {cert.p.shape} does not match k={self.k}, D={self.D}")
        self.blocks = _blocks(n, d)
        self.gens = problem.C.generators
        self.lam = float(cert.lam)
        self.v = cert.v_effective
        self.active = _activity(problem.C, traj, self.margin)
        x_, u_, a_ = self.blocks
        p = cert.p
        interval = cert.gamma @ self.gens
        self.Gamma = cert.gamma_T[None, :] + _reverse_cumsum(interval)
        self.Xi = _reverse_cumsum(2.0 * traj.u * cert.xi[:, None])[:self.k]
        q = np.empty((self.k, self.D))
        q[:, x_] = p[1:, x_] - self.Gamma
        q[:, u_] = p[1:, u_] - self.Xi + self.Gamma
        q[:, a_] = p[1:, a_]
        self.q = q
        self.y = self.lam * self.v[:, x_] - q[:, x_]
        self.scale = self._nontriviality_sum()
        self.norm = self.scale if self.scale > 0 else 1.0
        self.results: Dict[str, ConditionResult] = {}

    def _nontriviality_sum(self) -> float:
        x_, u_, a_ = self.blocks
        cert = self.cert
        if self.mode == 'continuous':
            total = self.lam + float(np.linalg.norm(cert.p[self.k]))
            if self.problem.u_is_decision:
                total += float(np.linalg.norm(self.q[0, u_]))
            return total
        total = self.lam + float(np.sum(np.abs(cert.xi))) + float(np.linalg.norm(cert.p[0, a_]))
        if self.problem.u_is_decision:
            total += float(np.linalg.norm(cert.p[0, u_]))
        return total

    def record(self, name: str, residual: float, location: Optional[int] = None,
               note: str = '', passed: bool = None):
        if passed is None:
            passed = bool(residual <= self.tol)
        t = None
        if location is not None:
            t = float(self.traj.t[location])
        self.results[name] = ConditionResult(name=name, passed=passed, residual=float(residual),
                                             tol=self.tol, location=location, t=t, note=note)
        if not passed:
            log.debug(f"[CHECK] {name} fails: residual {residual:.3e} at index {location}")

    def scaled(self, name: str, values: np.ndarray, note: str = ''):
        value, idx = _sup(values)
        self.record(name, value / self.norm, idx, note)

    def run(self) -> CheckReport:
        for check in (self.primal, self.adjoint, self.velocity, self.complementarity,
                      self.gamma_structure, self.xi_cone, self.transversality,
                      self.endpoint_cone, self.left_endpoint, self.nonatomicity,
                      self.nontriviality):
            check()
        degeneracy = self.degeneracy()
        notes = []
        flags = endpoint_derivative_flags(self.traj, self.problem)
        for side in ('left', 'right'):
            if not flags[f'{side}_ok']:
                notes.append(f"one-sided derivative at the {side} endpoint violates the "
                             f"inclusion by {flags[f'{side}_residual']:.3e}")
        report = CheckReport(self.mode, {name: self.results[name] for name in CONDITIONS},
                             degeneracy, self.lam, self.scale, notes)
        log.info(f"[CHECK] {self.problem.name}: {self.mode} verdict {report.verdict}"
                 + (f", failing {report.failing}" if report.failing else ''))
        return report

    def primal(self):
        traj, f = self.traj, self.problem.f
        drift = np.array([f.value(traj.x[j], traj.a[j]) for j in range(self.k)])
        residual = -traj.xdot - drift - self.cert.eta @ self.gens
        scale = 1.0 + np.linalg.norm(traj.xdot, axis=1) + np.linalg.norm(drift, axis=1)
        relative = np.linalg.norm(residual, axis=1) / scale
        value, idx = _sup(relative)
        negative = float(max(-np.min(self.cert.eta, initial=0.0), 0.0))
        if negative > value:
            self.record('primal_representation', negative, None, 'negative eta')
        else:
            self.record('primal_representation', value, idx)

    def adjoint(self):
        x_, u_, a_ = self.blocks
        traj, f, cert, h, lam = self.traj, self.problem.f, self.cert, self.h, self.lam
        p = cert.p
        expected = np.empty((self.k, self.D))
        for j in range(self.k):
            jac_x = f.jac_x(traj.x[j], traj.a[j])
            jac_a = f.jac_a(traj.x[j], traj.a[j])
            expected[j, x_] = p[j + 1, x_] - h * (lam * cert.w[j, x_] + jac_x.T @ self.y[j])
            expected[j, u_] = p[j + 1, u_] - h * lam * cert.w[j, u_]
            expected[j, a_] = p[j + 1, a_] - h * (lam * cert.w[j, a_] + jac_a.T @ self.y[j])
        self.scaled('adjoint_equation', p[:-1] - expected)
        self.scaled('q_representation', cert.q - self.q)

    def velocity(self):
        x_, u_, a_ = self.blocks
        if self.problem.u_is_decision:
            self.scaled('velocity_multiplier_u', self.q[:, u_] - self.lam * self.v[:, u_])
        else:
            self.record('velocity_multiplier_u', 0.0, note='u is data')
        gap = np.abs(self.q[:, a_] - self.lam * self.v[:, a_])
        excess = np.maximum(gap - self.lam * self.cert.kink_width, 0.0)
        self.scaled('velocity_multiplier_a', excess)

    def complementarity(self):
        eta = self.cert.eta
        inactive = ~self.active[1:]
        value, idx = _sup(np.where(inactive, eta, 0.0))
        self.record('complementarity_inactive', value, idx)
        products = self.y @ self.gens.T
        self.scaled('complementarity_active', np.where(eta > self.margin, products, 0.0))

    def gamma_structure(self):
        gamma = self.cert.gamma
        products = self.y @ self.gens.T
        zero_tol = self.margin * (1.0 + np.linalg.norm(self.y, axis=1))[:, None]
        active = self.active[1:]
        positive = products > zero_tol
        negative = products < -zero_tol
        violation = np.where(active & positive, np.maximum(-gamma, 0.0), 0.0)
        violation = np.where(active & negative, np.abs(gamma), violation)
        self.scaled('gamma_sign_structure', violation)
        self.scaled('gamma_inactive', np.where(active, 0.0, gamma))

    def xi_cone(self):
        if not self.problem.u_is_decision:
            self.record('xi_normal_cone', 0.0, note='u is data')
            return
        norms = np.linalg.norm(self.traj.u, axis=1)
        values = list(self.cert.xi)
        nodes = list(range(self.k + 1))
        if self.mode == 'continuous':
            values.append(self.cert.nu_T)
            nodes.append(self.k)
        violation = np.zeros(len(values))
        for idx, (node, val) in enumerate(zip(nodes, values)):
            bounds = _band_bounds(norms[node], node, self.window, self.band, self.margin)
            if bounds is None:
                violation[idx] = abs(val)
            else:
                violation[idx] = max(bounds[0] - val, val - bounds[1], 0.0)
        value, idx = _sup(violation)
        self.record('xi_normal_cone', value / self.norm, None if idx is None else nodes[idx])

    def transversality(self):
        x_, u_, a_ = self.blocks
        cert, traj, k, lam = self.cert, self.traj, self.k, self.lam
        eta_T = self.gens.T @ cert.eta[k - 1]
        grad = self.problem.phi.gradient(traj.x[k])
        self.scaled('transversality_x', -cert.p[k, x_] - lam * (eta_T + grad))
        if self.problem.u_is_decision:
            if self.mode == 'continuous':
                band_term = -2.0 * traj.u[k] * cert.nu_T
            else:
                band_term = 2.0 * traj.u[k] * cert.xi[k]
            self.scaled('transversality_u', cert.p[k, u_] - lam * eta_T + band_term)
        else:
            self.scaled('transversality_u', cert.p[k, u_], note='u is data')
        self.scaled('transversality_a', cert.p[k, a_])

    def endpoint_cone(self):
        x_, _, _ = self.blocks
        C, traj, k = self.problem.C, self.traj, self.k
        vec = -self.cert.p[k, x_] - self.lam * self.problem.phi.gradient(traj.x[k])
        point = geometry.project(traj.x[k] - traj.u[k], C)
        tol = self.margin * (1.0 + float(np.linalg.norm(point)))
        residual = geometry.decompose_normal(vec, point, C, tol=tol, strict=False).residual
        self.record('endpoint_cone', residual / self.norm, k)

    def left_endpoint(self):
        x_, u_, a_ = self.blocks
        if not self.problem.u_is_decision:
            gap = np.abs(self.q[0, a_] - self.lam * self.v[0, a_])
            excess = np.maximum(gap - self.lam * self.cert.kink_width[0], 0.0)
            self.record('left_endpoint', float(np.max(excess, initial=0.0)) / self.norm, 0)
            return
        self.record('left_endpoint', self._coderivative_endpoint() / self.norm, 0)

    def _coderivative_endpoint(self) -> float:
        """Distance from q^u(0) - lam v^u(0) to -2u(0) N(||u(0)||; band) + D*N(...)(y_0)"""
        x_, u_, _ = self.blocks
        C, traj, f = self.problem.C, self.traj, self.problem.f
        vec = self.q[0, u_] - self.lam * self.v[0, u_]
        point = geometry.project(traj.x[0] - traj.u[0], C)
        tol = self.margin * (1.0 + float(np.linalg.norm(point)))
        normal = -traj.xdot[0] - f.value(traj.x[0], traj.a[0])
        normal = geometry.decompose_normal(normal, point, C, tol=tol, strict=False).vector(C)
        try:
            span, cone = geometry.coderivative_generators(point, normal, self.y[0], C, tol=tol)
        except errors.SweepingError as ex:
            log.debug(f"[CHECK] left endpoint coderivative unavailable: {ex.message}")
            return float('inf')
        columns = [C.generators[i] for i in list(span) + list(cone)]
        lower = [-np.inf] * len(span) + [0.0] * len(cone)
        upper = [np.inf] * (len(span) + len(cone))
        norm_u0 = float(np.linalg.norm(traj.u[0]))
        bounds = _band_bounds(norm_u0, 0, self.window, self.band, self.margin)
        if bounds is not None:
            columns.append(-2.0 * traj.u[0])
            lower.append(bounds[0])
            upper.append(bounds[1])
        if not columns:
            return float(np.linalg.norm(vec))
        matrix = np.column_stack(columns)
        fit = lsq_linear(matrix, vec, bounds=(np.array(lower), np.array(upper)))
        return float(np.linalg.norm(matrix @ fit.x - vec))

    def nonatomicity(self):
        if self.mode != 'continuous':
            self.record('measure_nonatomicity', 0.0, note='continuous condition')
            return
        traj, k = self.traj, self.k
        diff = traj.x - traj.u
        gap = diff @ self.gens.T
        scale = 1.0 + np.linalg.norm(diff, axis=1)
        strict = np.all(gap < -self.margin * scale[:, None], axis=1)
        interior = strict[:-1] & strict[1:]
        masses = np.linalg.norm(self.cert.gamma @ self.gens, axis=1)
        worst, where, run, start = 0.0, None, 0.0, None
        for j in range(k):
            if interior[j]:
                if start is None:
                    start, run = j, 0.0
                run += masses[j]
                if run > worst:
                    worst, where = run, start
            else:
                start = None
        self.record('measure_nonatomicity', worst / self.norm, where)

    def nontriviality(self):
        self.record('nontriviality', self.scale, passed=bool(self.scale > self.tol),
                    note='nontriviality sum')
        if self.mode != 'continuous':
            self.record('enhanced_nontriviality', 0.0, note='continuous condition')
            return
        x_, u_, _ = self.blocks
        problem, traj = self.problem, self.traj
        terminal = self.lam + float(np.linalg.norm(self.cert.p[self.k]))
        initial = self.lam + float(np.linalg.norm(self.q[0, u_]))
        demands = []
        if problem.u_is_decision:
            if 0.0 < problem.tau < problem.r:
                if self._interior_at(0):
                    demands.append(('left endpoint interior', terminal))
                if self._interior_at(self.k):
                    demands.append(('right endpoint interior', initial))
        else:
            if self._interior_at(0):
                demands.append(('initial point interior', terminal))
            if self._product_premise():
                demands.append(('<x, u> != |u|^2 on [0, T)', terminal))
        if not demands:
            self.record('enhanced_nontriviality', 0.0, note='premise not met')
            return
        premise, value = min(demands, key=lambda item: item[1])
        self.record('enhanced_nontriviality', value, passed=bool(value > self.tol),
                    note=f'premise: {premise}')

    def _interior_at(self, node: int) -> bool:
        diff = self.traj.x[node] - self.traj.u[node]
        scale = 1.0 + float(np.linalg.norm(diff))
        inside = bool(np.all(self.gens @ diff < -self.margin * scale))
        if self.problem.u_is_decision:
            norm = float(np.linalg.norm(self.traj.u[node]))
            band_lo, band_hi = self.band
            inside = inside and band_lo + self.margin < norm < band_hi - self.margin
        return inside

    def _product_premise(self) -> bool:
        x, u = self.traj.x[:-1], self.traj.u[:-1]
        squares = np.sum(u * u, axis=1)
        return bool(np.all(np.abs(np.sum(x * u, axis=1) - squares) > self.margin * (1.0 + squares)))

    def degeneracy(self) -> Dict[str, bool]:
        interior = float(np.sum(np.linalg.norm(self.cert.gamma @ self.gens, axis=1)))
        return {
            'zero_certificate': bool(self.scale <= self.tol),
            'endpoint_atoms_only': bool(self.lam <= self.tol and interior <= self.tol
                                        and float(np.linalg.norm(self.cert.gamma_T)) > self.tol),
        }


def check_discrete(dp: DiscreteProblem, sol, cert: DiscreteCertificate,
                   tol: float = 1e-6) -> CheckReport:
    """Evaluates the discrete optimality system at a solver output; never raises on failure"""
    traj = _solution_trajectory(dp, sol)
    band = dp.band if dp.problem.u_is_decision else None
    return _Checker(dp.problem, traj, cert, 'discrete', tol, band, dp.window).run()


def check_continuous(problem: SweepingProblem, traj: DiscreteTrajectory, cert: _Certificate,
                     tol: float = 1e-6) -> CheckReport:
    """Evaluates the continuous-time conditions of a candidate on its mesh
    Args:
        problem(SweepingProblem): problem data
        traj(DiscreteTrajectory): candidate trajectory
        cert: certificate on the same mesh
        tol(float): tolerance for every normalized residual
    Returns(CheckReport): per-condition results and the verdict
    """
    return _Checker(problem, traj, cert, 'continuous', tol, _continuous_band(problem),
                    traj.mesh.window(problem.tau)).run()
