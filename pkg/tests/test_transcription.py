import numpy as np
import pytest

from sweeping_control import errors
from sweeping_control.costs import Perturbation
from sweeping_control.dynamics import SweepingProblem, catching_up
from sweeping_control.geometry import Polyhedron
from sweeping_control.transcription import (DecisionVector, DiscreteProblem, assemble_cost,
                                            constraint_residuals, feasible_seed)
from tests import utils


def _random_point(dp: DiscreteProblem, seed: int = 1) -> DecisionVector:
    rng = np.random.default_rng(seed)
    k, n, d = dp.k, dp.problem.n, dp.problem.d
    return DecisionVector(rng.normal(size=(k + 1, n)), rng.normal(size=(k + 1, n)) * 0.1,
                          rng.normal(size=(k + 1, d)))


def _check_gradient(dp: DiscreteProblem, z: DecisionVector):
    _, grad = assemble_cost(dp, z)
    for name in ('x', 'u', 'a'):
        def partial(values, name=name):
            arrays = {'x': z.x, 'u': z.u, 'a': z.a}
            arrays[name] = values
            return assemble_cost(dp, DecisionVector(**arrays))[0]
        numeric = utils.finite_difference(partial, getattr(z, name))
        assert np.allclose(numeric, getattr(grad, name), atol=1e-5), name


def test_window_and_band(ex41):
    dp = DiscreteProblem(ex41.problem, 100)
    assert dp.window == (25, 75)
    assert dp.band == pytest.approx((0.15, 0.85))
    assert dp.eps_k == pytest.approx(0.1)
    assert not dp.proximity_on


def test_decision_size(ex41, ex41_fixed):
    assert DiscreteProblem(ex41.problem, 10).decision_size == 10 + 11 + 11
    assert DiscreteProblem(ex41_fixed.problem, 10).decision_size == 10 + 11


def test_feasible_seed_uses_seed_direction(ex41):
    dp = DiscreteProblem(ex41.problem, 20)
    seed = feasible_seed(dp)
    assert np.allclose(seed.u, 0.5)
    assert np.allclose(seed.a, 0.0)
    assert np.allclose(seed.x, 0.0)
    assert constraint_residuals(dp, seed).ok(1e-9)


def test_feasible_seed_without_admissible_direction():
    problem = SweepingProblem([1.0], Polyhedron([[1.0]]), Perturbation.identity(1), T=1.0,
                              r=0.5, tau=0.0, u_seed=[-1.0])
    with pytest.raises(errors.InfeasibleStart):
        feasible_seed(DiscreteProblem(problem, 4))


def test_cost_of_feasible_candidate(ex41_fixed):
    dp = DiscreteProblem(ex41_fixed.problem, 50)
    z = DecisionVector.from_trajectory(ex41_fixed.candidate(50))
    cost, _ = assemble_cost(dp, z)
    assert cost == pytest.approx(0.25, abs=1e-12)


def test_cost_gradient_matches_finite_differences(ex43):
    dp = DiscreteProblem(ex43.problem, 5)
    _check_gradient(dp, _random_point(dp))


def test_cost_gradient_with_proximity_terms(ex43):
    problem = ex43.problem
    reference = catching_up(problem, problem.u_fixed, [-1.0, 0.0], k=10)
    dp = DiscreteProblem(problem, 5, reference=reference)
    assert dp.proximity_on
    assert dp.ratio == 2
    _check_gradient(dp, _random_point(dp, seed=4))


def test_reference_must_refine_mesh(ex43):
    problem = ex43.problem
    reference = catching_up(problem, problem.u_fixed, [-1.0, 0.0], k=7)
    with pytest.raises(errors.DimensionMismatch):
        DiscreteProblem(problem, 5, reference=reference)
    with pytest.raises(errors.ConfigError):
        DiscreteProblem(problem, 5, proximity_on=True)


def test_constraint_residuals_locate_violations(ex41_fixed, ex43):
    dp = DiscreteProblem(ex41_fixed.problem, 4)
    z = DecisionVector(np.zeros((5, 1)), np.full((5, 1), 0.5), np.full((5, 1), -1.0))
    report = constraint_residuals(dp, z)
    assert report['dynamics'] == pytest.approx(1.0)
    assert report.families['dynamics'].location == 0
    assert report.worst[0] == 'dynamics'
    assert not report.ok(1e-6)

    dp43 = DiscreteProblem(ex43.problem, 4)
    report = constraint_residuals(dp43, feasible_seed(dp43))
    assert report['terminal_boundary'] == pytest.approx(1.0)
    assert report['dynamics'] == pytest.approx(0.0, abs=1e-12)
    assert set(report.to_dict()) >= {'dynamics', 'state', 'endpoint', 'terminal_boundary'}


def test_u_parameterization_keeps_norms_and_pulls_back():
    problem = SweepingProblem([-1.0, -1.0], Polyhedron.orthant(2), Perturbation.identity(2),
                              T=1.0, r=1.0, tau=0.25)
    dp = DiscreteProblem(problem, 8)
    U = np.tile([np.sqrt(0.5), np.sqrt(0.5)], (9, 1))
    param = dp.u_parameterization(U)
    theta = param.initial(U)
    assert np.allclose(param.nodes(theta), U)
    rng = np.random.default_rng(2)
    theta = theta + rng.normal(size=theta.size) * 0.1
    lo, hi = dp.window
    norms = np.linalg.norm(param.nodes(theta), axis=1)
    assert np.allclose(norms[lo:hi + 1], 1.0)
    weights = rng.normal(size=U.shape)
    numeric = utils.finite_difference(lambda p: float(np.sum(weights * param.nodes(p))), theta)
    assert np.allclose(param.pullback(theta, weights), numeric, atol=1e-6)
