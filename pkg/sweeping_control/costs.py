"""
Built-in perturbations and cost terms

Every form carries its derivatives in closed form so the transcription, the
optimizer and the certificate builder never differentiate numerically.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sweeping_control import errors

log = logging.getLogger(__name__)

PERTURBATION_KINDS = ('identity', 'diag_speeds', 'affine')
TERMINAL_KINDS = ('zero', 'quadratic', 'squared')
RUNNING_KINDS = ('quadratic', 'abs')
VARIABLES = ('x', 'u', 'a', 'xdot', 'udot', 'adot')

# which separated running-cost group a variable belongs to
GROUP_OF = {'x': 1, 'u': 1, 'a': 1, 'xdot': 1, 'udot': 2, 'adot': 3}


class Perturbation:
    """The map f(x, a) of the perturbed sweeping inclusion -x' in N(x - u; C) + f(x, a)"""
    __slots__ = ('_kind', '_n', '_d', '_speeds', '_A', '_B', '_c')

    def __init__(self, kind: str, n: int, d: int, speeds=None, A=None, B=None, c=None):
        if kind not in PERTURBATION_KINDS:
            raise errors.ConfigError(f"Unknown perturbation kind '{kind}'", key='kind')
        self._kind = kind
        self._n = n
        self._d = d
        self._speeds = None if speeds is None else np.asarray(speeds, dtype=float)
        self._A = np.zeros((n, n)) if A is None else np.asarray(A, dtype=float)
        self._B = np.zeros((n, d)) if B is None else np.asarray(B, dtype=float)
        self._c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
        self._validate()

    def _validate(self):
        if self._kind == 'identity' and self._n != self._d:
            raise errors.DimensionMismatch(
                f"identity perturbation needs d == n, got n={self._n}, d={self._d}")
        if self._kind == 'diag_speeds':
            if self._n != self._d or self._speeds is None or self._speeds.shape != (self._n,):
                raise errors.DimensionMismatch("diag_speeds needs d == n and n speeds")
        if self._kind == 'affine':
            shapes = (self._A.shape, self._B.shape, self._c.shape)
            if shapes != ((self._n, self._n), (self._n, self._d), (self._n,)):
                raise errors.DimensionMismatch(f"affine perturbation has shapes {shapes}")

    @classmethod
    def identity(cls, n: int) -> 'Perturbation':
        return cls('identity', n, n)

    @classmethod
    def diag_speeds(cls, speeds: Sequence[float]) -> 'Perturbation':
        speeds = np.asarray(speeds, dtype=float)
        return cls('diag_speeds', len(speeds), len(speeds), speeds=speeds)

    @classmethod
    def affine(cls, A, B, c=None) -> 'Perturbation':
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        return cls('affine', A.shape[0], B.shape[1], A=A, B=B, c=c)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def n(self) -> int:
        return self._n

    @property
    def d(self) -> int:
        return self._d

    @property
    def speeds(self) -> Optional[np.ndarray]:
        return self._speeds

    def value(self, x, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self._kind == 'identity':
            return a.copy()
        if self._kind == 'diag_speeds':
            return self._speeds * a
        return self._A @ np.asarray(x, dtype=float) + self._B @ a + self._c

    def jac_x(self, x, a) -> np.ndarray:
        if self._kind == 'affine':
            return self._A.copy()
        return np.zeros((self._n, self._n))

    def jac_a(self, x, a) -> np.ndarray:
        if self._kind == 'identity':
            return np.eye(self._n)
        if self._kind == 'diag_speeds':
            return np.diag(self._speeds)
        return self._B.copy()

    def growth_constant(self, a_bound: float = 1.0) -> float:
        """A constant M with ||f(x, a)|| <= M (1 + ||x||) whenever ||a|| <= a_bound"""
        if self._kind == 'identity':
            return float(a_bound)
        if self._kind == 'diag_speeds':
            return float(np.max(np.abs(self._speeds)) * a_bound)
        norm_a = np.linalg.norm(self._A, 2)
        offset = np.linalg.norm(self._B, 2) * a_bound + np.linalg.norm(self._c)
        return float(max(norm_a, offset))

    def lipschitz_constant(self) -> float:
        """Lipschitz constant K of f in x"""
        if self._kind == 'affine':
            return float(np.linalg.norm(self._A, 2))
        return 0.0

    def to_dict(self) -> dict:
        out = {'kind': self._kind}
        if self._kind == 'diag_speeds':
            out['speeds'] = self._speeds.tolist()
        if self._kind == 'affine':
            out.update(A=self._A.tolist(), B=self._B.tolist(), c=self._c.tolist())
        return out


class TerminalCost:
    """phi(x): zero, w/2 ||x - target||^2 ('quadratic') or w ||x - target||^2 ('squared')"""
    __slots__ = ('_kind', '_weight', '_target')

    def __init__(self, kind: str = 'zero', weight: float = 1.0, target=None):
        if kind not in TERMINAL_KINDS:
            raise errors.ConfigError(f"Unknown terminal cost kind '{kind}'", key='kind')
        self._kind = kind
        self._weight = float(weight)
        self._target = None if target is None else np.asarray(target, dtype=float)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def weight(self) -> float:
        return self._weight

    def _diff(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - (np.zeros_like(x) if self._target is None else self._target)

    def _scale(self) -> float:
        return {'zero': 0.0, 'quadratic': 0.5, 'squared': 1.0}[self._kind] * self._weight

    def value(self, x) -> float:
        diff = self._diff(x)
        return float(self._scale() * diff @ diff)

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self._scale() * self._diff(x)

    def to_dict(self) -> dict:
        out = {'kind': self._kind, 'weight': self._weight}
        if self._target is not None:
            out['target'] = self._target.tolist()
        return out


class RunningTerm:
    """One summand of the running cost acting on a single variable

    ``quadratic``: w/2 ||v - ref(t)||^2; ``abs``: w sum_i |v_i - ref_i(t)| with
    ref(t) = ref0 + ref1 * t.
    """
    __slots__ = ('_kind', '_var', '_weight', '_ref0', '_ref1')

    def __init__(self, kind: str, var: str, weight: float = 1.0, ref0=0.0, ref1=0.0):
        if kind not in RUNNING_KINDS:
            raise errors.ConfigError(f"Unknown running term kind '{kind}'", key='kind')
        if var not in VARIABLES:
            raise errors.ConfigError(f"Unknown running term variable '{var}'", key='var')
        if kind == 'abs' and var != 'adot':
            raise errors.ConfigError(
                "Absolute-value terms are supported on 'adot' only", key='var')
        self._kind = kind
        self._var = var
        self._weight = float(weight)
        self._ref0 = np.asarray(ref0, dtype=float)
        self._ref1 = np.asarray(ref1, dtype=float)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def var(self) -> str:
        return self._var

    @property
    def weight(self) -> float:
        return self._weight

    @property
    def group(self) -> int:
        return GROUP_OF[self._var]

    def reference(self, t: np.ndarray, dim: int) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        return np.broadcast_to(self._ref0, (dim,)) + t * np.broadcast_to(self._ref1, (dim,))

    def evaluate(self, t: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Values and gradients on a batch
        Args:
            t(np.ndarray): times, shape (k,)
            values(np.ndarray): variable samples, shape (k, dim)
        Returns(Tuple[np.ndarray, np.ndarray]): per-sample values (k,) and gradients (k, dim);
            an abs term contributes the zero selection at its kinks
        """
        diff = values - self.reference(t, values.shape[1])
        if self._kind == 'quadratic':
            return 0.5 * self._weight * np.sum(diff ** 2, axis=1), self._weight * diff
        return self._weight * np.sum(np.abs(diff), axis=1), self._weight * np.sign(diff)

    def kinks(self, t: np.ndarray, values: np.ndarray, tol: float) -> np.ndarray:
        """Boolean mask (k, dim) of components sitting at the nondifferentiable point"""
        if self._kind != 'abs':
            return np.zeros(values.shape, dtype=bool)
        return np.abs(values - self.reference(t, values.shape[1])) <= tol

    def to_dict(self) -> dict:
        return {'kind': self._kind, 'var': self._var, 'weight': self._weight,
                'ref0': np.asarray(self._ref0).tolist(), 'ref1': np.asarray(self._ref1).tolist()}


class Subgradients:
    """Per-interval subgradient tracks (w, v) of the running cost"""
    __slots__ = ('w', 'v', 'kink_mask', 'kink_width')

    def __init__(self, w: Dict[str, np.ndarray], v: Dict[str, np.ndarray],
                 kink_mask: np.ndarray, kink_width: np.ndarray):
        self.w = w
        self.v = v
        self.kink_mask = kink_mask
        self.kink_width = kink_width


class RunningCost:
    """Sum of running terms, split into the x/u/a/xdot, udot and adot groups"""
    __slots__ = ('_terms',)

    def __init__(self, terms: Sequence[RunningTerm] = ()):
        self._terms = tuple(terms)

    @property
    def terms(self) -> Tuple[RunningTerm, ...]:
        return self._terms

    def group(self, index: int) -> List[RunningTerm]:
        return [term for term in self._terms if term.group == index]

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def evaluate(self, t: np.ndarray, fields: Dict[str, np.ndarray]) -> Tuple[np.ndarray, Dict]:
        """Values and gradients of the running cost
        Args:
            t(np.ndarray): interval left nodes, shape (k,)
            fields(Dict): variable name -> samples (k, dim)
        Returns(Tuple[np.ndarray, Dict]): values (k,) and gradients per variable
        """
        total = np.zeros(len(t))
        grads = {name: np.zeros_like(fields[name]) for name in VARIABLES}
        for term in self._terms:
            vals, grad = term.evaluate(t, fields[term.var])
            total += vals
            grads[term.var] += grad
        return total, grads

    def subgradients(self, t: np.ndarray, fields: Dict[str, np.ndarray],
                     kink_tol: float = 1e-9) -> Subgradients:
        """Subgradient selection plus the kink description of the abs terms"""
        _, grads = self.evaluate(t, fields)
        adot = fields['adot']
        mask = np.zeros(adot.shape, dtype=bool)
        width = np.zeros(adot.shape)
        for term in self._terms:
            if term.kind != 'abs':
                continue
            term_mask = term.kinks(t, adot, kink_tol)
            mask |= term_mask
            width += np.where(term_mask, term.weight, 0.0)
        w = {'x': grads['x'], 'u': grads['u'], 'a': grads['a']}
        v = {'x': grads['xdot'], 'u': grads['udot'], 'a': grads['adot']}
        return Subgradients(w=w, v=v, kink_mask=mask, kink_width=width)

    def to_dict(self) -> list:
        return [term.to_dict() for term in self._terms]


def interval_fields(x: np.ndarray, u: np.ndarray, a: np.ndarray, h: float) -> Dict[str, np.ndarray]:
    """Left-node samples and difference quotients for the k intervals of a node sequence"""
    return {
        'x': x[:-1], 'u': u[:-1], 'a': a[:-1],
        'xdot': np.diff(x, axis=0) / h,
        'udot': np.diff(u, axis=0) / h,
        'adot': np.diff(a, axis=0) / h,
    }
