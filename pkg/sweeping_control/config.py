"""
Problem configuration documents

A document is JSON with ``kind`` either ``sweeping`` or ``crowd``. It is
validated against a draft-07 schema before anything is built; the first
schema error is raised as ConfigError naming the offending key.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from jsonschema import Draft7Validator

from sweeping_control import errors
from sweeping_control.costs import (PERTURBATION_KINDS, RUNNING_KINDS, TERMINAL_KINDS, VARIABLES,
                                    Perturbation, RunningCost, RunningTerm, TerminalCost)
from sweeping_control.crowd import CrowdConfig
from sweeping_control.dynamics import (DiscreteTrajectory, Mesh, SweepingProblem, sample_path,
                                       simulate_nodes)
from sweeping_control.geometry import Polyhedron
from sweeping_control.optimizer import SolveOptions

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_NUMBER = {'type': 'number'}
_VECTOR = {'type': 'array', 'items': _NUMBER, 'minItems': 1}
_MATRIX = {'type': 'array', 'items': _VECTOR, 'minItems': 1}
_SCALAR_OR_VECTOR = {'oneOf': [_NUMBER, _VECTOR]}

_SOLVE = {
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'grid': {'type': 'integer', 'minimum': 1},
        'multistart': {'type': 'integer', 'minimum': 1},
        'seed': {'type': 'integer', 'minimum': 0},
        'workers': {'type': 'integer', 'minimum': 1},
        'max_iter': {'type': 'integer', 'minimum': 1},
        'inner_max_iter': {'type': 'integer', 'minimum': 1},
        'tol_stat': {'type': 'number', 'exclusiveMinimum': 0},
        'feas_tol': {'type': 'number', 'exclusiveMinimum': 0},
    },
}

_CHECK = {
    'type': 'object',
    'additionalProperties': False,
    'properties': {'tol': {'type': 'number', 'exclusiveMinimum': 0}},
}

SWEEPING_SCHEMA = {
    '$schema': 'http://json-schema.org/draft-07/schema#',
    'type': 'object',
    'additionalProperties': False,
    'required': ['kind', 'T', 'x0', 'polyhedron', 'perturbation', 'u'],
    'properties': {
        'schema_version': {'const': SCHEMA_VERSION},
        'kind': {'const': 'sweeping'},
        'name': {'type': 'string'},
        'description': {'type': 'string'},
        'T': {'type': 'number', 'exclusiveMinimum': 0},
        'x0': _VECTOR,
        'polyhedron': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'generators': _MATRIX,
                'chain': {'type': 'integer', 'minimum': 1},
                'orthant': {'type': 'integer', 'minimum': 1},
            },
            'minProperties': 1,
            'maxProperties': 1,
        },
        'perturbation': {
            'type': 'object',
            'additionalProperties': False,
            'required': ['kind'],
            'properties': {
                'kind': {'enum': list(PERTURBATION_KINDS)},
                'speeds': _VECTOR,
                'A': _MATRIX,
                'B': _MATRIX,
                'c': _VECTOR,
            },
        },
        'terminal_cost': {
            'type': 'object',
            'additionalProperties': False,
            'required': ['kind'],
            'properties': {
                'kind': {'enum': list(TERMINAL_KINDS)},
                'weight': _NUMBER,
                'target': _VECTOR,
            },
        },
        'running_cost': {
            'type': 'array',
            'items': {
                'type': 'object',
                'additionalProperties': False,
                'required': ['kind', 'var'],
                'properties': {
                    'kind': {'enum': list(RUNNING_KINDS)},
                    'var': {'enum': list(VARIABLES)},
                    'weight': _NUMBER,
                    'ref0': _SCALAR_OR_VECTOR,
                    'ref1': _SCALAR_OR_VECTOR,
                },
            },
        },
        'u': {
            'oneOf': [
                {
                    'type': 'object',
                    'additionalProperties': False,
                    'required': ['fixed'],
                    'properties': {'fixed': _VECTOR},
                },
                {
                    'type': 'object',
                    'additionalProperties': False,
                    'required': ['radius'],
                    'properties': {
                        'radius': {'type': 'number', 'exclusiveMinimum': 0},
                        'tau': {'type': 'number', 'minimum': 0},
                        'seed': _VECTOR,
                    },
                },
            ],
        },
        'terminal_boundary': {'type': 'boolean'},
        'a_bounds': {'type': 'array', 'items': _NUMBER, 'minItems': 2, 'maxItems': 2},
        'candidate': {
            'type': 'object',
            'additionalProperties': False,
            'required': ['a'],
            'properties': {
                # ascending polynomial coefficients per component
                'x': _MATRIX,
                'a': _MATRIX,
                'u': _MATRIX,
            },
        },
        'solve': _SOLVE,
        'check': _CHECK,
    },
}

CROWD_SCHEMA = {
    '$schema': 'http://json-schema.org/draft-07/schema#',
    'type': 'object',
    'additionalProperties': False,
    'required': ['kind', 'n', 'R', 'T', 'speeds', 'x0'],
    'properties': {
        'schema_version': {'const': SCHEMA_VERSION},
        'kind': {'const': 'crowd'},
        'name': {'type': 'string'},
        'description': {'type': 'string'},
        'n': {'type': 'integer', 'minimum': 1},
        'R': {'type': 'number', 'minimum': 0},
        'T': {'type': 'number', 'exclusiveMinimum': 0},
        'speeds': _VECTOR,
        'x0': _VECTOR,
        'alpha': _NUMBER,
        'a_bound': {'type': 'number', 'exclusiveMinimum': 0},
        'workers': {'type': 'integer', 'minimum': 1},
        'reference_gamma_tail': _VECTOR,
        'check': _CHECK,
    },
}

SCHEMAS = {'sweeping': SWEEPING_SCHEMA, 'crowd': CROWD_SCHEMA}


@dataclass
class ProblemConfig:
    kind: str
    name: str
    document: Dict[str, Any]
    problem: Optional[SweepingProblem] = None
    crowd: Optional[CrowdConfig] = None
    solve: Dict[str, Any] = field(default_factory=dict)
    tol: float = 1e-6
    path: Optional[Path] = None

    @property
    def grid(self) -> int:
        return int(self.solve.get('grid', 100))

    def solve_options(self, **overrides) -> SolveOptions:
        """SolveOptions from the document's ``solve`` block, overridden by non-None values"""
        values = {key: val for key, val in self.solve.items() if key != 'grid'}
        values.update({key: val for key, val in overrides.items() if val is not None})
        return SolveOptions(**values)

    def with_tau(self, tau: Optional[float]) -> SweepingProblem:
        """The sweeping problem, rebuilt when a different tau is requested"""
        if tau is None or self.problem is None or not self.problem.u_is_decision:
            return self.problem
        document = json.loads(json.dumps(self.document))
        document['u']['tau'] = float(tau)
        return build_problem(document)

    def candidate(self, k: int) -> DiscreteTrajectory:
        """Candidate of the ``candidate`` block on a k-interval mesh

        The controls are sampled from their polynomials and x comes from the
        catching-up scheme, so the candidate satisfies the discrete inclusion.
        A polynomial ``x`` is only compared against the simulated states.
        """
        spec = self.document.get('candidate')
        if spec is None or self.problem is None:
            raise errors.ConfigError(f"Config '{self.name}' has no candidate", key='candidate')
        problem = self.problem
        mesh = Mesh(k, problem.T)
        nodes = mesh.nodes

        def evaluate(rows, dim: int, key: str) -> np.ndarray:
            if len(rows) != dim:
                raise errors.ConfigError(
                    f"candidate.{key} has {len(rows)} component(s), expected {dim}",
                    key=f'candidate.{key}')
            return np.column_stack([np.polynomial.polynomial.polyval(nodes, coeffs)
                                    for coeffs in rows])

        a = evaluate(spec['a'], problem.d, 'a')
        if 'u' in spec:
            u = evaluate(spec['u'], problem.n, 'u')
        elif problem.u_fixed is not None:
            u = sample_path(problem.u_fixed, mesh)
        else:
            raise errors.ConfigError("candidate.u is required when u is a decision",
                                     key='candidate.u')
        traj = simulate_nodes(problem, mesh, u, a)
        if 'x' in spec:
            gap = float(np.max(np.abs(evaluate(spec['x'], problem.n, 'x') - traj.x)))
            log.debug(f"[CONF] candidate states deviate from the given x by {gap:.3e}")
        return traj


def _error_key(error) -> str:
    if error.validator == 'additionalProperties':
        allowed = set(error.schema.get('properties', {}))
        extra = sorted(set(error.instance) - allowed)
        if extra:
            return '.'.join([str(p) for p in error.absolute_path] + [extra[0]])
    if error.validator == 'required':
        missing = error.message.split("'")[1]
        return '.'.join([str(p) for p in error.absolute_path] + [missing])
    path = '.'.join(str(p) for p in error.absolute_path)
    return path or error.validator


def validate_document(document: Dict[str, Any]):
    """Raises ConfigError for the first schema violation
    Args:
        document(Dict): parsed JSON document
    """
    if not isinstance(document, dict):
        raise errors.ConfigError("Config must be a JSON object", key='')
    kind = document.get('kind')
    if kind not in SCHEMAS:
        raise errors.ConfigError(f"Unknown or missing kind '{kind}'", key='kind')
    validator = Draft7Validator(SCHEMAS[kind])
    problems = sorted(validator.iter_errors(document),
                      key=lambda e: (len(e.absolute_path), [str(p) for p in e.absolute_path]))
    if problems:
        first = problems[0]
        key = _error_key(first)
        raise errors.ConfigError(f"Invalid config at '{key}': {first.message}", key=key)


def _polyhedron(spec: Dict[str, Any], n: int) -> Polyhedron:
    if 'chain' in spec:
        return Polyhedron.chain(spec['chain'])
    if 'orthant' in spec:
        return Polyhedron.orthant(spec['orthant'])
    return Polyhedron(spec['generators'], dim=n)


def _perturbation(spec: Dict[str, Any], n: int) -> Perturbation:
    kind = spec['kind']
    if kind == 'identity':
        return Perturbation.identity(n)
    if kind == 'diag_speeds':
        if 'speeds' not in spec:
            raise errors.ConfigError("diag_speeds needs speeds", key='perturbation.speeds')
        return Perturbation.diag_speeds(spec['speeds'])
    for key in ('A', 'B'):
        if key not in spec:
            raise errors.ConfigError(f"affine perturbation needs {key}", key=f'perturbation.{key}')
    return Perturbation.affine(spec['A'], spec['B'], spec.get('c'))


def build_problem(document: Dict[str, Any]) -> SweepingProblem:
    """Builds the SweepingProblem of a validated sweeping document"""
    n = len(document['x0'])
    terminal = document.get('terminal_cost', {'kind': 'zero'})
    running = RunningCost([RunningTerm(term['kind'], term['var'], term.get('weight', 1.0),
                                       term.get('ref0', 0.0), term.get('ref1', 0.0))
                           for term in document.get('running_cost', [])])
    u_spec = document['u']
    kwargs = dict(
        phi=TerminalCost(terminal['kind'], terminal.get('weight', 1.0), terminal.get('target')),
        running=running,
        terminal_boundary=document.get('terminal_boundary', False),
        a_bounds=document.get('a_bounds'),
        name=document.get('name', 'problem'))
    if 'fixed' in u_spec:
        kwargs['u_fixed'] = np.asarray(u_spec['fixed'], dtype=float)
    else:
        kwargs.update(r=u_spec['radius'], tau=u_spec.get('tau', 0.0), u_seed=u_spec.get('seed'))
    return SweepingProblem(document['x0'], _polyhedron(document['polyhedron'], n),
                           _perturbation(document['perturbation'], n), document['T'], **kwargs)


def build_crowd(document: Dict[str, Any]) -> CrowdConfig:
    """Builds the CrowdConfig of a validated crowd document"""
    return CrowdConfig(
        n=document['n'], R=document['R'], T=document['T'], speeds=document['speeds'],
        x0=document['x0'], alpha=document.get('alpha'), a_bound=document.get('a_bound', 10.0),
        workers=document.get('workers', 1),
        reference_gamma_tail=document.get('reference_gamma_tail'),
        name=document.get('name', 'crowd'))


def parse_problem_config(document: Dict[str, Any], path: Path = None) -> ProblemConfig:
    validate_document(document)
    kind = document['kind']
    name = document.get('name', path.stem if path is not None else kind)
    document.setdefault('name', name)
    tol = float(document.get('check', {}).get('tol', 1e-6))
    if kind == 'crowd':
        config = ProblemConfig(kind, name, document, crowd=build_crowd(document), tol=tol,
                               path=path)
    else:
        config = ProblemConfig(kind, name, document, problem=build_problem(document),
                               solve=dict(document.get('solve', {})), tol=tol, path=path)
    log.debug(f"[CONF] Loaded {kind} config '{name}'")
    return config


def load_problem_config(path: Union[str, Path]) -> ProblemConfig:
    """Reads, validates and builds a problem config
    Args:
        path: JSON file
    Returns(ProblemConfig): the document with its built domain objects
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except OSError as ex:
        raise errors.ConfigError(f"Cannot read config {path}: {ex}", key='')
    except json.JSONDecodeError as ex:
        raise errors.ConfigError(f"Config {path} is not valid JSON: {ex}", key='')
    return parse_problem_config(document, path)
