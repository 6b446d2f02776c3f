import sweeping_control.log_config
from sweeping_control.certificates import (build_continuous_certificate,  # noqa: F401
                                           build_discrete_certificate, check_continuous,
                                           check_discrete, limit_certificate)
from sweeping_control.config import load_problem_config                  # noqa: F401
from sweeping_control.crowd import CrowdConfig, simulate_crowd, solve_crowd  # noqa: F401
from sweeping_control.dynamics import SweepingProblem, catching_up      # noqa: F401
from sweeping_control.geometry import Polyhedron                        # noqa: F401
from sweeping_control.optimizer import SolveOptions, solve_discrete     # noqa: F401
from sweeping_control.transcription import DiscreteProblem             # noqa: F401

__version__ = '0.3.0'

sweeping_control.log_config.load_config()
