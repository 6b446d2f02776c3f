import numpy as np
import pytest

from sweeping_control import dynamics, errors, geometry
from sweeping_control.costs import Perturbation
from sweeping_control.dynamics import (ConstantPath, Mesh, PiecewiseLinearPath, SweepingProblem,
                                       catching_up, simulate_nodes)
from sweeping_control.geometry import Polyhedron


def _line_problem(u=0.5, x0=0.0) -> SweepingProblem:
    return SweepingProblem([x0], Polyhedron([[1.0]]), Perturbation.identity(1), T=1.0,
                           u_fixed=[u], name='line')


def test_mesh_nodes_and_window():
    mesh = Mesh(8, 2.0)
    assert mesh.h == pytest.approx(0.25)
    assert mesh.nodes[-1] == pytest.approx(2.0)
    assert mesh.window(0.5) == (2, 6)
    assert mesh.window(0.0) == (0, 8)
    assert mesh.refine(2) == Mesh(16, 2.0)


def test_mesh_rejects_bad_input():
    with pytest.raises(errors.DimensionMismatch):
        Mesh(0, 1.0)
    with pytest.raises(errors.ConfigError):
        Mesh(4, 0.0)


def test_paths():
    path = PiecewiseLinearPath([0.0, 1.0, 2.0], [[0.0], [2.0], [2.0]])
    assert path(0.5).tolist() == pytest.approx([1.0])
    assert path(5.0).tolist() == pytest.approx([2.0])
    assert path.derivative(0.25).tolist() == pytest.approx([2.0])
    assert path.total_variation(2.0) == pytest.approx(2.0)
    const = ConstantPath([1.0, -1.0])
    assert const(3.0).tolist() == [1.0, -1.0]
    assert not const.derivative(3.0).any()


def test_catching_up_stops_at_the_moving_boundary():
    problem = _line_problem(u=0.5)
    traj = catching_up(problem, [0.5], [-1.0], k=100)
    assert traj.x[50, 0] == pytest.approx(0.5)
    assert traj.x[-1, 0] == pytest.approx(0.5)
    assert np.all(traj.x[:, 0] <= 0.5 + 1e-12)
    # the multiplier balances the drift once the boundary is reached
    assert traj.eta[-1, 0] == pytest.approx(1.0)
    assert traj.eta[10, 0] == pytest.approx(0.0)


def test_catching_up_reaches_boundary_exactly_at_horizon():
    traj = catching_up(_line_problem(u=0.5), [0.5], [-0.5], k=100)
    assert traj.x[-1, 0] == pytest.approx(0.5)
    assert traj.x[40, 0] == pytest.approx(0.2)
    assert np.allclose(traj.eta, 0.0, atol=1e-9)


def test_interior_start_without_perturbation_stays_constant(interior):
    problem = interior.problem
    traj = catching_up(problem, problem.u_fixed, [0.0, 0.0], k=20)
    assert np.allclose(traj.x, problem.x0)
    assert not traj.eta.any()


def test_infeasible_start_is_rejected():
    with pytest.raises(errors.InfeasibleStart):
        _line_problem(u=-1.0)
    problem = _line_problem(u=0.5)
    mesh = Mesh(4, 1.0)
    with pytest.raises(errors.InfeasibleStart):
        simulate_nodes(problem, mesh, np.full(5, -1.0), np.zeros(5))


def test_problem_validation():
    with pytest.raises(errors.DimensionMismatch):
        SweepingProblem([0.0, 0.0], Polyhedron([[1.0]]), Perturbation.identity(1), T=1.0,
                        u_fixed=[0.0])
    with pytest.raises(errors.ConfigError) as info:
        SweepingProblem([0.0], Polyhedron([[1.0]]), Perturbation.identity(1), T=1.0,
                        r=0.5, tau=0.75)
    assert info.value.key == 'tau'


def test_eta_recovery_matches_simulation(chain3):
    problem = SweepingProblem([0.0, 1.0, 2.0], chain3, Perturbation.diag_speeds([-2.0, 1.0, 1.0]),
                              T=1.0, u_fixed=[0.0, 0.0, 0.0])
    traj = catching_up(problem, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], k=50)
    recovered = dynamics.eta_from_trajectory(traj, problem)
    assert np.allclose(recovered, traj.eta, atol=1e-7)
    assert np.all(problem.C.values(traj.x[-1]) <= 1e-9)


def test_eta_recovery_flags_infeasible_dynamics():
    problem = _line_problem(u=0.5)
    mesh = Mesh(4, 1.0)
    x = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
    traj = dynamics.DiscreteTrajectory(mesh, x, np.full(5, 0.5), np.full(5, 1.0))
    with pytest.raises(errors.NotInCone) as info:
        dynamics.eta_from_trajectory(traj, problem)
    assert info.value.details['interval'] == 0


def test_apriori_bounds_grow_with_horizon():
    problem = _line_problem(u=0.5)
    bound, vbound = dynamics.apriori_bounds(problem, ConstantPath([0.5]))
    assert bound >= np.linalg.norm(problem.x0)
    assert vbound(0.3) == pytest.approx(2.0 * (1.0 + bound) * problem.M)


def test_endpoint_flags_for_simulated_trajectory():
    problem = _line_problem(u=0.5)
    traj = catching_up(problem, [0.5], [-0.5], k=40)
    flags = dynamics.endpoint_derivative_flags(traj, problem)
    assert flags['left_ok']
    assert flags['right_ok']


@pytest.mark.parametrize('seed', range(50))
def test_apriori_bound_holds_on_random_problems(seed):
    rng = np.random.default_rng(seed)
    n, d, k = 2, 2, 50
    C = Polyhedron(rng.normal(size=(1 + seed % 3, n)))
    f = Perturbation.affine(0.5 * rng.normal(size=(n, n)), rng.normal(size=(n, d)),
                            0.3 * rng.normal(size=n))
    times = np.linspace(0.0, 1.0, 5)
    u_path = PiecewiseLinearPath(times, rng.normal(size=(5, n)))
    x0 = u_path(0.0) + geometry.project(rng.normal(size=n), C)
    problem = SweepingProblem(x0, C, f, T=1.0, u_fixed=u_path, a_bounds=(-1.0, 1.0),
                              name=f'random-{seed}')
    a_path = PiecewiseLinearPath(Mesh(k, 1.0).nodes, rng.uniform(-1.0, 1.0, size=(k + 1, d)))
    traj = catching_up(problem, u_path, a_path, k=k)
    bound, vbound = dynamics.apriori_bounds(problem, u_path)
    assert np.max(np.linalg.norm(traj.x, axis=1)) <= bound
    assert np.all(np.linalg.norm(traj.xdot, axis=1) <= 2.0 * (1.0 + bound) * problem.M
                  + u_path.total_variation(1.0) / traj.mesh.h)
