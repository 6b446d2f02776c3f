"""
Polyhedral cone calculus

The polyhedron is the cone ``C = {x : <x*_i, x> <= 0, i = 0..m-1}`` given by its
generating vectors ``x*_i`` (rows of an m x n matrix). Everything here is a pure
function over immutable values; indices are 0-based.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, Sequence, Tuple

import numpy as np
from scipy.optimize import lsq_linear, nnls

from sweeping_control import errors

log = logging.getLogger(__name__)

# multipliers above this count as strictly complementary
STRICT_COMPLEMENTARITY = 1e-8
# singular values below this mean the active generators are dependent
RANK_CUTOFF = 1e-10


def default_tol(x) -> float:
    """Scale-aware tolerance 1e-8 * (1 + ||x||)"""
    return 1e-8 * (1.0 + float(np.linalg.norm(x)))


class Polyhedron:
    __slots__ = ('_generators',)

    def __init__(self, generators, dim: int = None):
        """Creates the polyhedral cone
        Args:
            generators: m x n matrix (or list of m vectors) of generating vectors
            dim(int): state dimension, required only when there are no generators
        """
        mat = np.asarray(generators, dtype=float)
        if mat.size == 0:
            if dim is None:
                raise errors.DimensionMismatch("Polyhedron without generators needs a dimension")
            mat = np.zeros((0, dim))
        mat = np.atleast_2d(mat)
        if dim is not None and mat.shape[1] != dim:
            raise errors.DimensionMismatch(
                f"Generators have dimension {mat.shape[1]}, expected {dim}")
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms == 0.0):
            raise errors.DimensionMismatch(
                f"Generator(s) {np.flatnonzero(norms == 0.0).tolist()} are zero")
        mat = mat.copy()
        mat.setflags(write=False)
        self._generators = mat

    @classmethod
    def chain(cls, n: int) -> 'Polyhedron':
        """Chain polyhedron x_1 <= x_2 <= ... <= x_n, generators e_i - e_{i+1}"""
        gens = np.zeros((max(n - 1, 0), n))
        for i in range(n - 1):
            gens[i, i] = 1.0
            gens[i, i + 1] = -1.0
        return cls(gens, dim=n)

    @classmethod
    def orthant(cls, n: int) -> 'Polyhedron':
        """Nonpositive orthant, generators e_i"""
        return cls(np.eye(n), dim=n)

    @property
    def generators(self) -> np.ndarray:
        return self._generators

    @property
    def dim(self) -> int:
        return self._generators.shape[1]

    @property
    def m(self) -> int:
        return self._generators.shape[0]

    def values(self, x) -> np.ndarray:
        """Constraint values <x*_i, x>"""
        return self._generators @ np.asarray(x, dtype=float)

    def contains(self, x, tol: float = None) -> bool:
        tol = default_tol(x) if tol is None else tol
        return bool(np.all(self.values(x) <= tol))

    def to_dict(self) -> dict:
        return {'dim': self.dim, 'generators': self._generators.tolist()}

    def __repr__(self) -> str:
        return f"Polyhedron(dim={self.dim}, m={self.m})"


@dataclass(frozen=True)
class ActiveSet:
    indices: Tuple[int, ...]
    tol: float

    def __contains__(self, item) -> bool:
        return item in self.indices

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class FeaturedSets:
    zero_set: Tuple[int, ...]
    pos_set: Tuple[int, ...]

    def __iter__(self):
        # unpacks as (span part, cone part)
        return iter((self.zero_set, self.pos_set))


@dataclass(frozen=True)
class ConeDecomposition:
    multipliers: Dict[int, float] = field(default_factory=dict)
    residual: float = 0.0

    def vector(self, C: Polyhedron) -> np.ndarray:
        """Re-synthesis sum lambda_i x*_i"""
        out = np.zeros(C.dim)
        for idx, lam in self.multipliers.items():
            out += lam * C.generators[idx]
        return out

    def dense(self, m: int) -> np.ndarray:
        out = np.zeros(m)
        for idx, lam in self.multipliers.items():
            out[idx] = lam
        return out


def active_set(x, C: Polyhedron, tol: float = None) -> ActiveSet:
    """Collects constraints tight at x
    Args:
        x: point of C
        C(Polyhedron): the polyhedral cone
        tol(float): tolerance, defaults to 1e-8 * (1 + ||x||)
    Returns(ActiveSet): indices with |<x*_i, x>| <= tol
    """
    tol = default_tol(x) if tol is None else tol
    vals = C.values(x)
    if np.any(vals > tol):
        worst = int(np.argmax(vals))
        raise errors.InfeasiblePoint(
            f"Point violates constraint {worst} by {vals[worst]:.3e} (tol {tol:.1e})",
            index=worst, violation=float(vals[worst]))
    indices = tuple(int(i) for i in np.flatnonzero(np.abs(vals) <= tol))
    return ActiveSet(indices=indices, tol=tol)


def featured_sets(y, active: ActiveSet, C: Polyhedron, tol: float = None) -> FeaturedSets:
    """Splits an active set by the sign of <x*_i, y>
    Args:
        y: direction
        active(ActiveSet): active indices of some point of C
        C(Polyhedron): the polyhedral cone
        tol(float): zero threshold, defaults to 1e-8 * (1 + ||y||)
    Returns(FeaturedSets): zero_set I_0(y) and pos_set I_>(y)
    """
    tol = default_tol(y) if tol is None else tol
    vals = C.values(y)
    zero = tuple(i for i in active if abs(vals[i]) <= tol)
    pos = tuple(i for i in active if vals[i] > tol)
    return FeaturedSets(zero_set=zero, pos_set=pos)


def check_independent(C: Polyhedron, indices: Sequence[int]):
    """Raises DependentGenerators if the selected generators are linearly dependent"""
    indices = list(indices)
    if not indices:
        return
    sv = np.linalg.svd(C.generators[indices], compute_uv=False)
    if sv.size < len(indices) or sv[-1] <= RANK_CUTOFF * max(1.0, sv[0]):
        raise errors.DependentGenerators(
            f"Active generators {indices} are linearly dependent (sigma_min={sv[-1]:.2e})",
            indices=indices)


def decompose_normal(v, x, C: Polyhedron, tol: float = None,
                     strict: bool = True) -> ConeDecomposition:
    """Fits v as a nonnegative combination of the generators active at x
    Args:
        v: candidate normal vector
        x: base point in C
        C(Polyhedron): the polyhedral cone
        tol(float): tolerance for the active set and for the residual
        strict(bool): raise NotInCone when the residual exceeds tol
    Returns(ConeDecomposition): multipliers and the fit residual
    """
    v = np.asarray(v, dtype=float)
    active = active_set(x, C, tol)
    res_tol = default_tol(v) if tol is None else tol
    if not active.indices:
        residual = float(np.linalg.norm(v))
        decomposition = ConeDecomposition(multipliers={}, residual=residual)
    else:
        gens = C.generators[list(active.indices)]
        try:
            lam, _ = nnls(gens.T, v, maxiter=100 * max(C.m, 1))
        except RuntimeError as ex:
            raise errors.NumericalFailure(f"NNLS did not converge: {ex}")
        residual = float(np.linalg.norm(gens.T @ lam - v))
        decomposition = ConeDecomposition(
            multipliers={i: float(val) for i, val in zip(active.indices, lam)},
            residual=residual)
    log.trace(f"[NNLS] active={active.indices} residual={decomposition.residual:.3e}")
    if strict and decomposition.residual > res_tol:
        raise errors.NotInCone(
            f"Vector is not in the normal cone, residual {decomposition.residual:.3e}",
            residual=decomposition.residual)
    return decomposition


def project(z, C: Polyhedron, shift=None) -> np.ndarray:
    """Euclidean projection onto the translate C + shift

    Uses the Moreau decomposition y = P_C(y) + P_{C°}(y): the polar cone of C is
    generated by the x*_i, so P_{C°}(y) comes from one NNLS solve.

    Args:
        z: point to project
        C(Polyhedron): the polyhedral cone
        shift: translation vector, zero by default
    Returns(np.ndarray): argmin over c in C + shift of ||z - c||
    """
    return project_with_multipliers(z, C, shift)[0]


def project_with_multipliers(z, C: Polyhedron, shift=None) -> Tuple[np.ndarray, np.ndarray]:
    """Projection plus the NNLS weights of z - P(z) = sum lam_i x*_i (length m)"""
    z = np.asarray(z, dtype=float)
    shift = np.zeros_like(z) if shift is None else np.asarray(shift, dtype=float)
    y = z - shift
    if C.m == 0 or np.all(C.values(y) <= 0.0):
        return z.copy(), np.zeros(C.m)
    try:
        lam, _ = nnls(C.generators.T, y, maxiter=100 * C.m)
    except RuntimeError as ex:
        raise errors.NumericalFailure(f"Projection did not converge: {ex}")
    out = shift + y - C.generators.T @ lam
    log.trace(f"[PROJ] |z - P(z)| = {np.linalg.norm(z - out):.3e}")
    return out, lam


def coderivative_generators(x, y, u, C: Polyhedron, tol: float = None) -> FeaturedSets:
    """Index sets describing the coderivative of the normal-cone map at (x, y)

    D*N(x, y)(u) = span{x*_i : i in zero_set} + cone{x*_i : i in pos_set}

    Args:
        x: base point in C
        y: normal vector at x
        u: direction the coderivative is applied to
        C(Polyhedron): the polyhedral cone
        tol(float): tolerance, defaults to 1e-8 * (1 + ||x||)
    Returns(FeaturedSets): (span indices, cone indices)
    """
    decomposition = decompose_normal(y, x, C, tol)
    active = active_set(x, C, tol)
    check_independent(C, active.indices)
    u = np.asarray(u, dtype=float)
    u_tol = default_tol(u) if tol is None else tol
    vals = C.values(u)
    strict = [i for i, lam in decomposition.multipliers.items() if lam > STRICT_COMPLEMENTARITY]
    broken = [i for i in strict if abs(vals[i]) > u_tol]
    if broken:
        raise errors.DomainViolation(
            f"Direction is outside the coderivative domain: <x*_i, u> != 0 for {broken}",
            indices=broken)
    return featured_sets(u, active, C, u_tol)


def coderivative_residual(vec, x, y, u, C: Polyhedron, tol: float = None) -> float:
    """Distance from vec to D*N(x, y)(u); infinite outside the domain"""
    vec = np.asarray(vec, dtype=float)
    try:
        span, cone = coderivative_generators(x, y, u, C, tol)
    except errors.DomainViolation:
        return float('inf')
    indices = list(span) + list(cone)
    if not indices:
        return float(np.linalg.norm(vec))
    gens = C.generators[indices].T
    lower = np.array([-np.inf] * len(span) + [0.0] * len(cone))
    upper = np.full(len(indices), np.inf)
    fit = lsq_linear(gens, vec, bounds=(lower, upper))
    return float(np.linalg.norm(gens @ fit.x - vec))


def tangent_projector(C: Polyhedron, indices: Sequence[int]) -> np.ndarray:
    """Orthogonal projector onto the face {v : <x*_i, v> = 0, i in indices}"""
    eye = np.eye(C.dim)
    indices = list(indices)
    if not indices:
        return eye
    gens = C.generators[indices]
    return eye - np.linalg.pinv(gens) @ gens
