"""
Reduced-space solver for the discrete problem

The catching-up map makes x a function of (u, a), so only the controls are
optimized. Gradients come from a reverse sweep through the step Jacobians of
the projection; the remaining constraints (terminal boundary, u(0)
admissibility, u-difference budgets, trust region) enter an augmented
Lagrangian whose inner problems are solved by L-BFGS-B.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from sweeping_control import errors
from sweeping_control.costs import interval_fields
from sweeping_control.dynamics import DiscreteTrajectory, simulate_nodes, step_jacobians
from sweeping_control.transcription import (DecisionVector, DiscreteProblem, UParameterization,
                                            assemble_cost, budget_terms, constraint_residuals,
                                            feasible_seed, rate_penalty)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    multistart: int = 8
    seed: int = 0
    max_iter: int = 30
    inner_max_iter: int = 1000
    tol_stat: float = 1e-4
    feas_tol: float = 1e-6
    init_scale: float = 1.0
    mu0: float = 10.0
    mu_max: float = 1e8
    workers: int = 1
    raise_on_max_iter: bool = False


@dataclass
class DiscreteSolution:
    z: DecisionVector
    cost: float
    kkt_multipliers: Dict[str, float]
    status: str
    iterations: int = 0
    stationarity: float = float('inf')
    violation: float = 0.0
    starts: List[dict] = field(default_factory=list)
    trajectory: Optional[DiscreteTrajectory] = None

    @property
    def converged(self) -> bool:
        return self.status == 'converged'

    def to_dict(self) -> dict:
        return {
            'cost': self.cost, 'status': self.status, 'iterations': self.iterations,
            'stationarity': self.stationarity, 'violation': self.violation,
            'kkt_multipliers': dict(sorted(self.kkt_multipliers.items())),
            'starts': self.starts,
        }


class _Constraint:
    """Scalar constraint c(z) (= 0 or <= 0) with node gradients"""
    __slots__ = ('name', 'equality', 'value', 'gx', 'gu', 'ga')

    def __init__(self, name: str, equality: bool, value: float, shape_x, shape_u, shape_a):
        self.name = name
        self.equality = equality
        self.value = float(value)
        self.gx = np.zeros(shape_x)
        self.gu = np.zeros(shape_u)
        self.ga = np.zeros(shape_a)

    def violation(self) -> float:
        return abs(self.value) if self.equality else max(self.value, 0.0)


def _constraints(dp: DiscreteProblem, z: DecisionVector) -> List[_Constraint]:
    problem = dp.problem
    C, h = problem.C, dp.mesh.h
    x, u, a = z.x, z.u, z.a
    out = []

    def new(name, equality, value):
        con = _Constraint(name, equality, value, x.shape, u.shape, a.shape)
        out.append(con)
        return con

    if problem.terminal_boundary and C.m:
        vals = C.values(x[-1] - u[-1])
        idx = int(np.argmax(vals))
        con = new('terminal_boundary', True, vals[idx])
        con.gx[-1] = C.generators[idx]
        con.gu[-1] = -C.generators[idx]
    if problem.u_is_decision and dp.reference is None and C.m:
        vals = C.values(x[0] - u[0])
        idx = int(np.argmax(vals))
        con = new('initial_state', False, vals[idx])
        con.gu[0] = -C.generators[idx]
    if problem.u_is_decision:
        first, g_first, second, g_second = budget_terms(u, h)
        new('mu_first', False, first - (dp.mu_tilde + 1.0)).gu[:] = g_first
        new('mu_second', False, second - (dp.mu_tilde + 1.0)).gu[:] = g_second
    if dp.reference is not None:
        rx, ru, ra = dp.reference_nodes()
        diff = np.hstack([x - rx, u - ru, a - ra])
        dist = np.linalg.norm(diff, axis=1)
        j = int(np.argmax(dist))
        con = new('trust_sup', False, dist[j] - dp.epsilon / 2.0)
        if dist[j] > 0:
            unit = diff[j] / dist[j]
            n = problem.n
            con.gx[j], con.gu[j], con.ga[j] = unit[:n], unit[n:2 * n], unit[2 * n:]
        fields = interval_fields(x, u, a, h)
        rates = dp.reference_rates()
        con = new('trust_w12', False, -dp.epsilon / 2.0)
        for name, grad in (('x', con.gx), ('u', con.gu), ('a', con.ga)):
            value, g_rate = rate_penalty(fields[name + 'dot'], rates[name], h / dp.ratio)
            con.value += value
            grad[1:] += g_rate / h
            grad[:-1] -= g_rate / h
    return out


class _ReducedObjective:
    """Augmented Lagrangian of the discrete problem as a function of the controls"""

    def __init__(self, dp: DiscreteProblem, base: DecisionVector):
        self._dp = dp
        self._base = base
        self._u_rows, self._a_rows = dp.free_rows()
        self._param: Optional[UParameterization] = None
        if dp.problem.u_is_decision:
            self._param = dp.u_parameterization(base.u)
        self._n_u = self._param.size if self._param else 0
        self.multipliers: Dict[str, float] = {}
        self.penalty = 1.0

    @property
    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        bounds = self._param.bounds() if self._param else []
        a_bounds = self._dp.problem.a_bounds or (None, None)
        return bounds + [a_bounds] * (len(self._a_rows) * self._dp.problem.d)

    def pack(self, z: DecisionVector) -> np.ndarray:
        u_part = self._param.initial(z.u) if self._param else np.zeros(0)
        return np.concatenate([u_part, z.a[self._a_rows].ravel()])

    def random_start(self, theta: np.ndarray, rng: np.random.Generator,
                     scale: float) -> np.ndarray:
        """Per-node uniform controls: a in [-scale, scale] clipped to its bounds,
        u jittered inside its norm band"""
        out = np.array(theta, dtype=float)
        n_a = len(out) - self._n_u
        a_part = rng.uniform(-scale, scale, size=n_a)
        if self._dp.problem.a_bounds is not None:
            a_part = np.clip(a_part, *self._dp.problem.a_bounds)
        out[self._n_u:] = a_part
        if self._param:
            out[:self._n_u] = self._param.jitter(out[:self._n_u], rng)
        return out

    def unpack(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        U = self._param.nodes(theta[:self._n_u]) if self._param else self._base.u
        A = self._base.a.copy()
        A[self._a_rows] = theta[self._n_u:].reshape(len(self._a_rows), -1)
        return U, A

    def simulate(self, theta: np.ndarray) -> Tuple[DiscreteTrajectory, DecisionVector]:
        U, A = self.unpack(theta)
        traj = simulate_nodes(self._dp.problem, self._dp.mesh, U, A, check_start=False)
        return traj, DecisionVector(traj.x, U, A)

    def merit_terms(self, z: DecisionVector):
        cost, grad = assemble_cost(self._dp, z)
        merit = cost
        gx, gu, ga = grad.x, grad.u, grad.a
        mu = self.penalty
        for con in _constraints(self._dp, z):
            nu = self.multipliers.get(con.name, 0.0)
            if con.equality:
                merit += nu * con.value + 0.5 * mu * con.value ** 2
                weight = nu + mu * con.value
            else:
                shifted = max(nu + mu * con.value, 0.0)
                merit += (shifted ** 2 - nu ** 2) / (2.0 * mu)
                weight = shifted
            if weight:
                gx = gx + weight * con.gx
                gu = gu + weight * con.gu
                ga = ga + weight * con.ga
        return cost, merit, gx, gu, ga

    def __call__(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        traj, z = self.simulate(theta)
        _, merit, gx, gu, ga = self.merit_terms(z)
        dx, da, du = step_jacobians(traj, self._dp.problem)
        gu = gu.copy()
        ga = ga.copy()
        bar = gx[-1].copy()
        for j in range(self._dp.mesh.k - 1, -1, -1):
            ga[j] += da[j].T @ bar
            gu[j + 1] += du[j].T @ bar
            bar = gx[j] + dx[j].T @ bar
        grad_u = self._param.pullback(theta[:self._n_u], gu) if self._param else np.zeros(0)
        return merit, np.concatenate([grad_u, ga[self._a_rows].ravel()])

    def stationarity(self, theta: np.ndarray) -> float:
        """Projected gradient sup-norm, scaled to a rate per unit time"""
        _, grad = self(theta)
        projected = grad.copy()
        for idx, (lo, hi) in enumerate(self.bounds):
            if lo is not None and theta[idx] <= lo and grad[idx] > 0:
                projected[idx] = 0.0
            if hi is not None and theta[idx] >= hi and grad[idx] < 0:
                projected[idx] = 0.0
        return float(np.max(np.abs(projected), initial=0.0) / self._dp.mesh.h)


def _run_start(dp: DiscreteProblem, opts: SolveOptions, idx: int,
               start: DecisionVector) -> DiscreteSolution:
    objective = _ReducedObjective(dp, start)
    theta = objective.pack(start)
    if idx > 0:
        theta = objective.random_start(theta, np.random.default_rng(opts.seed + idx),
                                       opts.init_scale)
    objective.penalty = opts.mu0
    iterations = 0
    previous_violation = float('inf')
    status = 'max_iter'
    has_constraints = bool(_constraints(dp, start))
    for outer in range(opts.max_iter):
        merit_before, _ = objective(theta)
        result = minimize(objective, theta, jac=True, method='L-BFGS-B',
                          bounds=objective.bounds,
                          options={'maxiter': opts.inner_max_iter, 'ftol': 1e-15,
                                   'gtol': 1e-12, 'maxcor': 20})
        iterations += int(result.nit)
        if result.fun <= merit_before:
            theta = result.x
        else:
            log.debug(f"[AUGLAG] start {idx} outer {outer}: rejected step "
                      f"({result.fun:.6g} > {merit_before:.6g})")
        _, z = objective.simulate(theta)
        constraints = _constraints(dp, z)
        violation = max((con.violation() for con in constraints), default=0.0)
        stationarity = objective.stationarity(theta)
        log.debug(f"[AUGLAG] start {idx} outer {outer}: violation={violation:.3e} "
                  f"stationarity={stationarity:.3e} mu={objective.penalty:.1e}")
        if violation <= opts.feas_tol and (stationarity <= opts.tol_stat or not has_constraints):
            status = 'converged' if stationarity <= opts.tol_stat else 'stalled'
            break
        for con in constraints:
            nu = objective.multipliers.get(con.name, 0.0) + objective.penalty * con.value
            objective.multipliers[con.name] = nu if con.equality else max(nu, 0.0)
        if violation > 0.25 * previous_violation:
            objective.penalty = min(objective.penalty * 10.0, opts.mu_max)
        previous_violation = violation
    traj, z = objective.simulate(theta)
    cost, _ = assemble_cost(dp, z)
    report = constraint_residuals(dp, z)
    return DiscreteSolution(
        z=z, cost=cost, kkt_multipliers=dict(objective.multipliers), status=status,
        iterations=iterations, stationarity=objective.stationarity(theta),
        violation=report.max_violation, trajectory=traj)


def solve_discrete(dp: DiscreteProblem, opts: SolveOptions = None,
                   warm_start: DecisionVector = None) -> DiscreteSolution:
    """Best local solution over the multistart runs
    Args:
        dp(DiscreteProblem): the discrete problem
        opts(SolveOptions): solver options
        warm_start(DecisionVector): controls for start 0 instead of the feasible seed
    Returns(DiscreteSolution): lowest-cost feasible run, ties broken by start index
    """
    opts = opts or SolveOptions()
    seed = feasible_seed(dp)
    first = seed if warm_start is None else DecisionVector(seed.x, warm_start.u, warm_start.a)
    starts = [first] + [seed] * max(opts.multistart - 1, 0)
    log.info(f"[SOLVE] {dp.problem.name}: k={dp.k}, {len(starts)} start(s), "
             f"{opts.workers} worker(s)")
    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            runs = list(pool.map(lambda item: _run_start(dp, opts, *item), enumerate(starts)))
    else:
        runs = [_run_start(dp, opts, idx, start) for idx, start in enumerate(starts)]
    summary = [{'start': idx, 'cost': run.cost, 'status': run.status,
                'violation': run.violation, 'iterations': run.iterations}
               for idx, run in enumerate(runs)]
    ranked = sorted(range(len(runs)),
                    key=lambda idx: (runs[idx].violation > opts.feas_tol, runs[idx].cost, idx))
    best = runs[ranked[0]]
    best.starts = summary
    log.info(f"[SOLVE] {dp.problem.name}: best start {ranked[0]} cost={best.cost:.10g} "
             f"status={best.status} violation={best.violation:.3e}")
    if best.status == 'max_iter' and opts.raise_on_max_iter:
        raise errors.MaxIterExceeded(
            f"No start converged within {opts.max_iter} outer iterations", best=best)
    return best


def refine_grid(dp: DiscreteProblem, solution: DiscreteSolution,
                k_new: int) -> Tuple[DiscreteProblem, DecisionVector]:
    """Finer discrete problem plus the interpolated solution as warm start"""
    k = dp.k
    if k_new <= k or k_new % k:
        raise errors.DimensionMismatch(f"k_new={k_new} must be a multiple of k={k} above it")
    reference = dp.reference
    if reference is not None and reference.mesh.k % k_new:
        reference = None
    fine = DiscreteProblem(dp.problem, k_new, reference=reference,
                           epsilon=dp.epsilon if reference is not None else None,
                           mu_tilde=dp.mu_tilde)
    coarse_t, fine_t = dp.mesh.nodes, fine.mesh.nodes

    def interpolate(values: np.ndarray) -> np.ndarray:
        return np.column_stack([np.interp(fine_t, coarse_t, col) for col in values.T])

    x, u, a = (interpolate(arr) for arr in (solution.z.x, solution.z.u, solution.z.a))
    if dp.problem.u_is_decision:
        lo, hi = fine.window
        band_lo, band_hi = fine.band
        norms = np.linalg.norm(u, axis=1)
        for j, norm in enumerate(norms):
            if norm == 0:
                continue
            target = dp.problem.r if lo <= j <= hi else min(max(norm, band_lo), band_hi)
            u[j] *= target / norm
    log.info(f"[REFINE] {dp.problem.name}: k={k} -> k={k_new}")
    return fine, DecisionVector(x, u, a)
