import dataclasses

import numpy as np
import pytest

from sweeping_control import certificates, errors
from sweeping_control.certificates import (Measure, build_continuous_certificate,
                                           build_discrete_certificate, check_continuous,
                                           check_discrete, limit_certificate)
from sweeping_control.dynamics import Mesh
from sweeping_control.optimizer import SolveOptions, solve_discrete
from sweeping_control.transcription import DiscreteProblem


def _certify(config, k: int = None, tol: float = None):
    tol = config.tol if tol is None else tol
    traj = config.candidate(k or config.grid)
    cert = build_continuous_certificate(config.problem, traj, tol=tol)
    return traj, cert, check_continuous(config.problem, traj, cert, tol=tol)


def test_measure_mass_tail_and_variation():
    mesh = Mesh(4, 1.0)
    measure = Measure(mesh, [[1.0], [0.0], [-2.0], [0.5]], atoms=[(1.0, [3.0])])
    assert measure.dim == 1
    assert measure.tail(0.5).tolist() == pytest.approx([1.5])
    assert measure.mass(0.0, 0.5).tolist() == pytest.approx([1.0])
    assert measure.variation(0.0, 1.0) == pytest.approx(6.5)
    assert measure.density[:, 0].tolist() == pytest.approx([4.0, 0.0, -8.0, 2.0])
    assert measure.to_dict()['atoms'] == [{'t': 1.0, 'mass': [3.0]}]


def test_interior_candidate_passes(interior):
    traj, cert, report = _certify(interior)
    assert cert.consistent
    assert cert.lam > 0
    assert report.passed, report.failing
    assert report.verdict == 'pass'
    assert set(report.conditions) == set(certificates.CONDITIONS)
    assert report['enhanced_nontriviality'].passed
    assert not report.degeneracy['zero_certificate']


def test_report_is_invariant_under_positive_scaling(interior):
    traj, cert, _ = _certify(interior)
    report = check_continuous(interior.problem, traj, cert.scaled(3.0), tol=interior.tol)
    assert report.passed, report.failing


def test_zero_certificate_fails_nontriviality(interior):
    traj, cert, _ = _certify(interior)
    report = check_continuous(interior.problem, traj, cert.scaled(0.0), tol=interior.tol)
    assert not report.passed
    assert 'nontriviality' in report.failing
    assert report.degeneracy['zero_certificate']


def test_smooth_running_cost_candidate_passes(ex42_r1):
    traj, cert, report = _certify(ex42_r1, k=200)
    assert report.passed, report.failing
    assert cert.lam > 0
    # x_k = 1 - h stays off the boundary, so the terminal adjoint is -lambda phi'(x_k)
    assert cert.p[-1, 0] == pytest.approx(2.0 * cert.lam * traj.mesh.h, abs=1e-7)


def test_nonsmooth_running_cost_candidate_fails(ex42_r2):
    traj, cert, report = _certify(ex42_r2, k=200)
    assert not cert.consistent
    assert report.verdict == 'fail'
    assert 'nontriviality' in report.failing
    payload = report.to_dict()
    assert payload['verdict'] == 'fail'
    assert 'nontriviality' in payload['failing']


def test_certificate_must_match_mesh(interior):
    _, cert, _ = _certify(interior, k=20)
    other = interior.candidate(40)
    with pytest.raises(errors.DimensionMismatch):
        check_continuous(interior.problem, other, cert)


def test_discrete_certificate_of_solver_output(interior):
    dp = DiscreteProblem(interior.problem, 10)
    solution = solve_discrete(dp, SolveOptions(multistart=1))
    cert = build_discrete_certificate(dp, solution)
    report = check_discrete(dp, solution, cert)
    assert cert.consistent
    assert report.mode == 'discrete'
    assert report.passed, report.failing
    assert cert.to_dict()['kind'] == 'discrete'


def test_limit_certificate_over_refinements(interior):
    certs = []
    for k in (10, 20):
        dp = DiscreteProblem(interior.problem, k)
        solution = solve_discrete(dp, SolveOptions(multistart=1))
        certs.append(build_discrete_certificate(dp, solution))
    limit = limit_certificate(certs)
    assert limit.levels == [10, 20]
    assert limit.k == 20
    assert limit.atoms == []
    with pytest.raises(errors.InconsistentSequence):
        limit_certificate(certs[:1])


def test_terminal_boundary_candidate_passes(ex43):
    traj, cert, report = _certify(ex43, k=100)
    assert report.passed, report.failing
    assert cert.lam > 0


def test_perturbed_adjoint_fails_the_recursion(interior):
    dp = DiscreteProblem(interior.problem, 10)
    solution = solve_discrete(dp, SolveOptions(multistart=1))
    cert = build_discrete_certificate(dp, solution)
    assert check_discrete(dp, solution, cert).passed
    p = cert.p.copy()
    p[0, 2:4] += 0.5
    report = check_discrete(dp, solution, dataclasses.replace(cert, p=p))
    assert not report.passed
    assert 'adjoint_equation' in report.failing
    assert report['adjoint_equation'].location == 0


def test_terminal_boundary_solution_round_trip(ex43):
    dp = DiscreteProblem(ex43.problem, 20)
    solution = solve_discrete(dp, SolveOptions(multistart=1))
    cert = build_discrete_certificate(dp, solution, tol=1e-3)
    report = check_discrete(dp, solution, cert, tol=1e-3)
    assert cert.consistent
    assert report.passed, report.failing


def test_limit_puts_the_fixed_u_measure_at_the_horizon(ex41_fixed):
    certs = []
    for k in (50, 100):
        dp = DiscreteProblem(ex41_fixed.problem, k)
        solution = solve_discrete(dp, SolveOptions(multistart=1))
        certs.append(build_discrete_certificate(dp, solution))
    limit = limit_certificate(certs)
    measure = limit.gamma_measure()
    assert limit.atoms == []
    assert measure.variation(0.0, 0.99) <= 1e-8
    # x touches the boundary only at T: all of gamma sits in the terminal atom
    assert measure.tail(1.0)[0] == pytest.approx(limit.lam, rel=1e-3)
    assert limit.gamma_T[0] > 0
