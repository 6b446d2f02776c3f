import numpy as np
import pytest

from sweeping_control import errors, geometry
from sweeping_control.geometry import Polyhedron
from tests import utils


def test_chain_polyhedron_has_difference_generators(chain3):
    assert chain3.dim == 3
    assert chain3.m == 2
    assert chain3.generators.tolist() == [[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]]
    assert chain3.contains([1.0, 2.0, 3.0])
    assert not chain3.contains([2.0, 1.0, 3.0])


def test_zero_generator_is_rejected():
    with pytest.raises(errors.DimensionMismatch):
        Polyhedron([[1.0, 0.0], [0.0, 0.0]])


def test_empty_polyhedron_needs_dimension():
    with pytest.raises(errors.DimensionMismatch):
        Polyhedron([])
    whole = Polyhedron([], dim=2)
    assert whole.m == 0
    assert whole.contains([5.0, 5.0])


def test_active_set_collects_tight_constraints(orthant2):
    active = geometry.active_set([0.0, -1.0], orthant2)
    assert active.indices == (0,)
    assert 0 in active
    assert len(geometry.active_set([-1.0, -1.0], orthant2)) == 0


def test_active_set_rejects_infeasible_point(orthant2):
    with pytest.raises(errors.InfeasiblePoint) as info:
        geometry.active_set([0.5, -1.0], orthant2)
    assert info.value.details['index'] == 0


def test_featured_sets_split_by_sign(orthant2):
    active = geometry.active_set([0.0, 0.0], orthant2)
    zero, pos = geometry.featured_sets([0.0, 1.0], active, orthant2)
    assert zero == (0,)
    assert pos == (1,)


def test_decompose_normal_recovers_multipliers(chain3):
    x = np.array([1.0, 1.0, 1.0])
    v = 2.0 * chain3.generators[0] + 0.5 * chain3.generators[1]
    dec = geometry.decompose_normal(v, x, chain3)
    assert dec.multipliers[0] == pytest.approx(2.0)
    assert dec.multipliers[1] == pytest.approx(0.5)
    assert np.allclose(dec.vector(chain3), v)
    assert dec.dense(2).tolist() == pytest.approx([2.0, 0.5])


def test_decompose_normal_outside_cone(orthant2):
    with pytest.raises(errors.NotInCone):
        geometry.decompose_normal([-1.0, 0.0], [0.0, -1.0], orthant2)
    dec = geometry.decompose_normal([-1.0, 0.0], [0.0, -1.0], orthant2, strict=False)
    assert dec.residual == pytest.approx(1.0)


def test_decompose_normal_at_interior_point(orthant2):
    dec = geometry.decompose_normal([0.0, 0.0], [-1.0, -1.0], orthant2)
    assert dec.multipliers == {}
    assert dec.residual == 0.0


@pytest.mark.parametrize('z', [
    [3.0, 1.0, 2.0],
    [0.0, -4.0, 1.0],
    [5.0, 4.0, 3.0],
    [1.0, 2.0, 3.0],
])
def test_projection_matches_face_enumeration(chain3, z):
    assert np.allclose(geometry.project(z, chain3), utils.brute_force_projection(z, chain3),
                       atol=1e-9)


def test_projection_onto_shifted_orthant(orthant2):
    shift = np.array([1.0, 2.0])
    out, lam = geometry.project_with_multipliers([3.0, 0.0], orthant2, shift=shift)
    assert out.tolist() == pytest.approx([1.0, 0.0])
    assert lam.tolist() == pytest.approx([2.0, 0.0])


def test_projection_of_feasible_point_is_identity(chain3):
    z = np.array([-1.0, 0.0, 2.0])
    out, lam = geometry.project_with_multipliers(z, chain3)
    assert np.array_equal(out, z)
    assert not lam.any()


def test_projection_is_nonexpansive(chain3):
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.normal(size=3) * 4, rng.normal(size=3) * 4
        pa, pb = geometry.project(a, chain3), geometry.project(b, chain3)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10


def test_dependent_generators_are_detected():
    C = Polyhedron([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(errors.DependentGenerators):
        geometry.check_independent(C, [0, 1])
    geometry.check_independent(C, [0])


def test_coderivative_generators(orthant2):
    x = np.zeros(2)
    y = np.array([1.0, 0.0])
    span, cone = geometry.coderivative_generators(x, y, [0.0, 1.0], orthant2)
    assert span == (0,)
    assert cone == (1,)


def test_coderivative_domain_violation(orthant2):
    with pytest.raises(errors.DomainViolation):
        geometry.coderivative_generators([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], orthant2)
    assert geometry.coderivative_residual([1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
                                          [1.0, 0.0], orthant2) == float('inf')


def test_coderivative_residual_respects_cone_sign(orthant2):
    x, y, u = [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]
    assert geometry.coderivative_residual([-3.0, 2.0], x, y, u, orthant2) == pytest.approx(0.0)
    assert geometry.coderivative_residual([0.0, -2.0], x, y, u, orthant2) == pytest.approx(2.0)


def test_tangent_projector_kills_active_generators(chain3):
    proj = geometry.tangent_projector(chain3, [0])
    assert np.allclose(proj @ chain3.generators[0], 0.0)
    assert np.allclose(proj @ proj, proj)
    assert np.array_equal(geometry.tangent_projector(chain3, []), np.eye(3))


@pytest.mark.parametrize('seed', range(20))
def test_projection_is_idempotent_and_variational(seed):
    rng = np.random.default_rng(seed)
    C = utils.random_polyhedron(rng, 3, 1 + seed % 4)
    z = 3.0 * rng.normal(size=3)
    shift = rng.normal(size=3)
    proj = geometry.project(z, C, shift)
    assert C.contains(proj - shift)
    assert np.allclose(geometry.project(proj, C, shift), proj, atol=1e-10)
    for _ in range(10):
        y = shift + geometry.project(3.0 * rng.normal(size=3), C)
        assert np.dot(z - proj, y - proj) <= 1e-9 * (1.0 + np.linalg.norm(z)) ** 2


@pytest.mark.parametrize('seed', range(20))
def test_decompose_normal_matches_support_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    C = utils.random_polyhedron(rng, 3, 2 + seed % 3)
    x = geometry.project(2.0 * rng.normal(size=3), C)
    active = geometry.active_set(x, C).indices
    v = rng.normal(size=3)
    if seed % 2 and active:
        # half of the cases lie inside the cone
        v = rng.uniform(0.1, 2.0, size=len(active)) @ C.generators[list(active)]
    dec = geometry.decompose_normal(v, x, C, strict=False)
    expected = utils.brute_force_cone_residual(v, C.generators[list(active)])
    assert dec.residual == pytest.approx(expected, abs=1e-8)
    assert all(lam >= 0.0 for lam in dec.multipliers.values())
    assert set(dec.multipliers) <= set(active)
    if expected <= 1e-10:
        assert np.allclose(dec.vector(C), v, atol=1e-8)
