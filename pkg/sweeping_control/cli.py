"""
Command-line front end

Exit codes: 0 success or passing check, 1 failing check, 2 usage or config
error, 3 numerical failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from sweeping_control import errors, log_config
from sweeping_control.certificates import build_continuous_certificate, check_continuous
from sweeping_control.config import ProblemConfig, load_problem_config
from sweeping_control.crowd import sampled_trajectory, solve_crowd
from sweeping_control.dynamics import DiscreteTrajectory, Mesh, simulate_nodes
from sweeping_control.optimizer import solve_discrete
from sweeping_control.transcription import DiscreteProblem, feasible_seed
from sweeping_control.utils import (read_trajectory_csv, write_json, write_long_csv,
                                    write_trajectory_csv)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _require(config: ProblemConfig, kind: str):
    if config.kind != kind:
        raise errors.ConfigError(f"Command needs a '{kind}' config, got '{config.kind}'",
                                 key='kind')


def _report_path(args, default_suffix: str) -> Path:
    if args.report:
        return Path(args.report)
    return Path(args.out).with_suffix(default_suffix)


def _trajectory_series(traj: DiscreteTrajectory) -> dict:
    series = {'x': traj.x, 'u': traj.u, 'a': traj.a}
    if traj.eta is not None and traj.eta.size:
        series['eta'] = traj.eta
    return series


def _default_trajectory(config: ProblemConfig, k: int) -> DiscreteTrajectory:
    """The candidate when the config has one, otherwise the feasible seed controls"""
    if 'candidate' in config.document:
        return config.candidate(k)
    dp = DiscreteProblem(config.problem, k)
    seed = feasible_seed(dp)
    return simulate_nodes(config.problem, dp.mesh, seed.u, seed.a)


def cmd_simulate(args) -> int:
    config = load_problem_config(args.config)
    _require(config, 'sweeping')
    k = args.grid or config.grid
    traj = _default_trajectory(config, k)
    write_trajectory_csv(args.out, traj, m=config.problem.m)
    if args.emit_plot_data:
        write_long_csv(args.emit_plot_data, _trajectory_series(traj), t=traj.t)
    log.info(f"[CLI] simulate {config.name}: k={k}, x(T)={np.round(traj.x[-1], 10).tolist()}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    config = load_problem_config(args.config)
    _require(config, 'sweeping')
    problem = config.with_tau(args.tau)
    k = args.grid or config.grid
    opts = config.solve_options(multistart=args.multistart, seed=args.seed)
    dp = DiscreteProblem(problem, k)
    solution = solve_discrete(dp, opts)
    traj = solution.trajectory or solution.z.trajectory(dp.mesh)
    write_trajectory_csv(args.out, traj, m=problem.m)
    summary = dict(solution.to_dict(), name=config.name, k=k, tau=problem.tau)
    write_json(_report_path(args, '.json'), summary)
    if args.emit_plot_data:
        write_long_csv(args.emit_plot_data, _trajectory_series(traj), t=traj.t)
    log.info(f"[CLI] optimize {config.name}: cost {solution.cost:.10g}, status {solution.status}")
    return EXIT_OK


def cmd_check(args) -> int:
    config = load_problem_config(args.config)
    _require(config, 'sweeping')
    problem = config.problem
    tol = args.tol if args.tol is not None else config.tol
    if args.solution:
        traj = read_trajectory_csv(args.solution, problem.n, problem.d, T=problem.T)
    else:
        traj = config.candidate(args.grid or config.grid)
    cert = build_continuous_certificate(problem, traj, tol=tol)
    report = check_continuous(problem, traj, cert, tol=tol)
    payload = {
        'name': config.name,
        'report': report.to_dict(),
        'certificate': {'lambda': cert.lam, 'residual': cert.residual,
                        'consistent': cert.consistent, 'gamma_T': cert.gamma_T.tolist(),
                        'p_T': cert.p[-1].tolist()},
    }
    write_json(args.report, payload)
    if args.emit_plot_data:
        series = {'p': cert.p, 'gamma_density': cert.gamma_measure().density}
        write_long_csv(args.emit_plot_data, series, t=traj.t)
    log.info(f"[CLI] check {config.name}: {report.verdict}"
             + (f" ({', '.join(report.failing)})" if report.failing else ''))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_crowd(args) -> int:
    config = load_problem_config(args.config)
    _require(config, 'crowd')
    tol = args.tol if args.tol is not None else config.tol
    solution = solve_crowd(config.crowd, tol=tol)
    write_json(args.out, dict(solution.to_dict(), name=config.name))
    if args.emit_plot_data:
        k = args.grid or 200
        nodes = Mesh(k, config.crowd.T).nodes
        series = {'x': solution.trajectory.sample(nodes)}
        if config.crowd.n > 1:
            series['eta'] = sampled_trajectory(config.crowd, solution.trajectory, k).eta
        write_long_csv(args.emit_plot_data, series, t=nodes)
    log.info(f"[CLI] crowd {config.name}: a={np.round(solution.a_bar, 6).tolist()}, "
             f"cost {solution.cost:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sweeping-control',
        description='Simulate, optimize and certify controlled sweeping processes')
    parser.add_argument('--log-level', default=None,
                        choices=['TRACE', 'DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    def common(sub, out_required: bool = True):
        sub.add_argument('--config', required=True, help='problem config (JSON)')
        sub.add_argument('--grid', type=int, default=None, help='number of mesh intervals')
        sub.add_argument('--emit-plot-data', default=None, help='long-format CSV for plotting')
        if out_required:
            sub.add_argument('--out', required=True)

    simulate = commands.add_parser('simulate', help='catching-up simulation to a trajectory CSV')
    common(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    optimize = commands.add_parser('optimize', help='solve the discrete problem')
    common(optimize)
    optimize.add_argument('--tau', type=float, default=None)
    optimize.add_argument('--multistart', type=int, default=None)
    optimize.add_argument('--seed', type=int, default=None)
    optimize.add_argument('--report', default=None, help='summary JSON, next to --out by default')
    optimize.set_defaults(handler=cmd_optimize)

    check = commands.add_parser('check', help='certificate check of a candidate')
    common(check, out_required=False)
    check.add_argument('--solution', default=None,
                       help='trajectory CSV, the config candidate otherwise')
    check.add_argument('--tol', type=float, default=None)
    check.add_argument('--report', required=True)
    check.set_defaults(handler=cmd_check)

    crowd = commands.add_parser('crowd', help='solve a corridor crowd-motion config')
    common(crowd)
    crowd.add_argument('--tol', type=float, default=None)
    crowd.set_defaults(handler=cmd_crowd)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return EXIT_INPUT if ex.code else EXIT_OK
    if args.log_level:
        log_config.load_config({'log_level_global': args.log_level})
    try:
        return args.handler(args)
    except errors.INPUT_ERRORS as ex:
        log.error(f"[CLI] {ex.what()}")
        print(ex.what(), file=sys.stderr)
        return EXIT_INPUT
    except errors.SweepingError as ex:
        log.error(f"[CLI] {ex.what()}")
        print(ex.what(), file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as ex:
        log.error(f"[CLI] linear algebra failure: {ex}")
        print(f"Sweeping Error [NumericalFailure]: {ex}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
