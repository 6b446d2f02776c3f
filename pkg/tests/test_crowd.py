import numpy as np
import pytest

from sweeping_control import crowd, errors
from sweeping_control.certificates import check_continuous
from sweeping_control.crowd import CrowdConfig, simulate_crowd, solve_crowd


def test_config_rejects_overlap_and_bad_shapes():
    with pytest.raises(errors.InfeasibleStart):
        CrowdConfig(n=2, R=3.0, T=6.0, speeds=(6.0, 3.0), x0=(-60.0, -57.0))
    with pytest.raises(errors.DimensionMismatch):
        CrowdConfig(n=3, R=3.0, T=6.0, speeds=(6.0, 3.0), x0=(-60.0, -48.0))
    with pytest.raises(errors.ConfigError):
        CrowdConfig(n=2, R=3.0, T=6.0, speeds=(6.0, -3.0), x0=(-60.0, -48.0))


def test_touching_start_is_feasible(crowd52):
    assert crowd52.x0[2] - crowd52.x0[1] == pytest.approx(2.0 * crowd52.R)


def test_contact_time_and_velocity_match(crowd51):
    a_bar = np.array([-2.0, -1.0])
    assert crowd.contact_time(1, crowd51, a_bar) == pytest.approx(2.0 / 3.0)
    assert crowd.velocity_match(1, crowd51, a_bar, [0.0]) == pytest.approx(4.5)
    assert crowd.contact_time(1, crowd51, [-1.0, -2.0]) is None
    with pytest.raises(errors.DimensionMismatch):
        crowd.contact_time(0, crowd51, a_bar)


def test_proportionality_relations(crowd52):
    assert crowd.proportionality_relations(crowd52, [1, 2]) == {1: 2.0, 2: 1.5}


def test_simulated_collision_merges_into_a_block(crowd51):
    traj = simulate_crowd(crowd51, [-2.0, -1.0])
    assert traj.contact_times[1] == pytest.approx(2.0 / 3.0)
    assert traj.terminal.tolist() == pytest.approx([-12.0, -6.0])
    assert traj.segments[-1].slopes.tolist() == pytest.approx([7.5, 7.5])
    assert traj.segments[-1].eta.tolist() == pytest.approx([4.5])
    assert traj.realized_pattern == (1,)
    assert traj.min_gap() >= 2.0 * crowd51.R - 1e-9
    # force integral over the contact phase
    assert traj.eta_integral(0.0, 6.0)[0] == pytest.approx(4.5 * (6.0 - 2.0 / 3.0))
    assert traj.position(1.0 / 3.0).tolist() == pytest.approx([-56.0, -47.0])


def test_separating_participants_never_touch(crowd51):
    traj = simulate_crowd(crowd51, [0.0, -2.0])
    assert traj.contact_times == {}
    assert traj.realized_pattern == ()
    assert traj.eta_integral(0.0, 6.0)[0] == pytest.approx(0.0)


def test_branch_enumeration():
    assert len(crowd.enumerate_branches(1)) == 1
    assert len(crowd.enumerate_branches(2)) == 3
    branches = crowd.enumerate_branches(3)
    assert len(branches) == 9
    assert crowd.Branch((), ()).label() == 'no contact'
    assert {branch.pattern for branch in branches} == {(), (1,), (2,), (1, 2)}


def test_single_participant_closed_form():
    config = CrowdConfig(n=1, R=3.0, T=6.0, speeds=(2.0,), x0=(-10.0,))
    solution = solve_crowd(config)
    assert solution.a_bar[0] == pytest.approx(-0.8, abs=1e-6)
    assert solution.certificate_summary == {}
    assert solution.pattern == ()


def test_short_horizon_keeps_decoupled_optimum():
    config = CrowdConfig(n=2, R=3.0, T=0.5, speeds=(1.0, 1.0), x0=(-30.0, 20.0), a_bound=50.0)
    solution = solve_crowd(config)
    assert solution.pattern == ()
    assert np.allclose(solution.a_bar, crowd.decoupled_controls(config), atol=1e-5)
    assert solution.contact_times == {1: None}


def test_two_participants_golden_values(crowd51):
    solution = solve_crowd(crowd51)
    assert solution.a_bar.tolist() == pytest.approx([-2.382353, -1.191176], abs=1e-4)
    assert solution.a_bar[0] == pytest.approx(2.0 * solution.a_bar[1], rel=1e-9)
    assert solution.contact_times[1] == pytest.approx(0.559671, abs=1e-4)
    assert solution.trajectory.terminal.tolist() == pytest.approx([-3.39706, 2.60294], abs=1e-3)
    assert solution.cost == pytest.approx(30.441, abs=1e-2)
    assert solution.pattern == (1,)
    assert solution.branch.signs == {1: 'pos'}
    assert any(result.branch.signs == {1: 'zero'} for result in solution.pruned)


def test_two_participants_certificate_summary():
    config = CrowdConfig(n=2, R=3.0, T=6.0, speeds=(6.0, 3.0), x0=(-60.0, -48.0),
                         reference_gamma_tail=(-1.56, 3.76))
    summary = solve_crowd(config).certificate_summary
    assert summary['verdict'] == 'pass', summary['failing']
    assert summary['lambda'] == 1.0
    assert summary['gamma_support_start'] == pytest.approx(0.559671, abs=1e-4)
    assert summary['gamma_tail'] == pytest.approx([-1.566, 3.154], abs=5e-3)
    assert summary['gamma_mass_before_contact'] == pytest.approx(0.0, abs=1e-9)
    assert summary['gamma_atoms'] == []
    assert summary['levels'] == [300, 600]
    assert any('component 2' in note for note in summary['notes'])
    assert not any('component 1' in note for note in summary['notes'])


def test_three_participants_golden_values(crowd52):
    solution = solve_crowd(crowd52)
    assert solution.a_bar.tolist() == pytest.approx([-3.0303, -1.51515, -1.0101], abs=1e-2)
    assert solution.pattern == (1, 2)
    assert solution.contact_times[2] == pytest.approx(0.0)
    assert solution.contact_times[1] == pytest.approx(0.4027, abs=1e-3)
    first = solution.trajectory.segments[0]
    assert first.slopes[1] == pytest.approx(first.slopes[2])
    assert first.slopes.tolist() == pytest.approx([18.18, 3.28, 3.28], abs=0.01)
    assert solution.trajectory.segments[-1].slopes.tolist() == pytest.approx(
        [8.25, 8.25, 8.25], abs=0.05)
    assert any(result.branch.signs == {1: 'pos', 2: 'zero'} for result in solution.pruned)
    assert solution.certificate_summary['verdict'] == 'pass'


def test_threaded_branches_agree(crowd51):
    serial = solve_crowd(crowd51)
    threaded = solve_crowd(CrowdConfig(n=2, R=3.0, T=6.0, speeds=(6.0, 3.0),
                                       x0=(-60.0, -48.0), workers=3))
    assert np.allclose(serial.a_bar, threaded.a_bar)


def test_solution_beats_grid_search(crowd51):
    solution = solve_crowd(crowd51)
    _, cost = crowd.brute_force_crowd(crowd51)
    assert solution.cost <= cost + 1e-6


def test_exact_motion_agrees_with_catching_up(crowd51):
    error, bound = crowd.cross_validate(crowd51, [-2.0, -1.0], k=2000)
    assert error <= bound


def test_sampled_trajectory_carries_interval_forces(crowd51):
    traj = simulate_crowd(crowd51, [-2.0, -1.0])
    sampled = crowd.sampled_trajectory(crowd51, traj, 60)
    assert sampled.eta.shape == (60, 1)
    assert sampled.eta[0, 0] == pytest.approx(0.0)
    assert sampled.eta[-1, 0] == pytest.approx(4.5)
    assert np.allclose(sampled.x[-1], traj.terminal)
    problem = crowd.embed_problem(crowd51)
    assert problem.C.contains(sampled.x[0] - sampled.u[0])


def test_three_participants_agree_with_grid_search(crowd52):
    solution = solve_crowd(crowd52)
    a_bar, cost = crowd.brute_force_crowd(crowd52)
    assert abs(solution.cost - cost) <= 1e-3
    assert solution.cost <= cost + 1e-6
    assert np.allclose(a_bar, solution.a_bar, atol=1e-2)


def test_crowd_certificate_is_built_from_refined_duals(crowd51):
    solution = solve_crowd(crowd51)
    cert = crowd.crowd_certificate(crowd51, solution)
    assert cert.levels == [300, 600]
    assert cert.consistent
    assert cert.lam == 1.0
    assert cert.atoms == []
    t1 = solution.contact_times[1]
    measure = cert.gamma_measure()
    assert measure.variation(0.0, t1 - 0.01) <= 1e-8
    tail = measure.tail(t1)
    assert tail.tolist() == pytest.approx([-1.566, 3.154], abs=5e-3)
    assert tail[0] < 0.0 < tail[1]
    for t in (t1 + 0.01, 3.0, crowd51.T):
        assert np.allclose(measure.tail(t), tail, atol=1e-6)
    report = check_continuous(crowd.embed_problem(crowd51), cert.trajectory, cert)
    assert report.passed, report.failing


def test_crowd_certificate_with_contact_from_the_start(crowd52):
    solution = solve_crowd(crowd52)
    cert = crowd.crowd_certificate(crowd52, solution)
    assert cert.consistent
    assert cert.atoms == []
    measure = cert.gamma_measure()
    assert measure.tail(0.0).shape == (3,)
    assert np.allclose(measure.tail(solution.contact_times[1]), measure.tail(crowd52.T), atol=1e-6)
