import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfgeo.errors import EpsilonOutOfRange
from halfgeo.geodesic import jacobi_index, random_unit_tangent, shoot
from halfgeo.pathspace import (DiscretePath, concatenate, concatenation_energy,
                               discrete_hessian_index, energy, length, random_path,
                               second_variation_matrix, tail_segments)
from halfgeo.surfaces import SurfaceSpec, project_to_surface, tangent_frame

E1, E2, E3 = np.eye(3)


def _arc(spec, p, v, L, n):
    return DiscretePath.along(shoot(spec, p, v, L), n)


def test_uniform_half_great_circle(sphere):
    path = _arc(sphere, E1, E2, math.pi, 100)
    assert length(path) == pytest.approx(math.pi, abs=1e-12)
    assert energy(path) == pytest.approx(length(path) ** 2, abs=1e-12)


def test_doubled_segment_breaks_equality(sphere):
    # same arc, one sample removed: one segment is twice as long as the rest
    pts = _arc(sphere, E1, E2, math.pi, 100).points
    path = DiscretePath(sphere, np.delete(pts, 50, axis=0))
    assert length(path) == pytest.approx(math.pi, abs=1e-12)
    assert energy(path) > length(path) ** 2 + 1e-4


def test_two_unit_segments(sphere):
    pts = np.array([E1, E2, -E1])
    path = DiscretePath(sphere, pts)
    np.testing.assert_allclose(path.segment_lengths(), [math.pi / 2] * 2, atol=1e-13)
    assert energy(path) == pytest.approx(length(path) ** 2, abs=1e-12)


def test_path_needs_two_segments(sphere):
    with pytest.raises(ValueError):
        DiscretePath(sphere, np.array([E1, E2]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 40), k=st.integers(0, 2))
def test_cauchy_schwarz_random(seed, n, k):
    spec = [SurfaceSpec.sphere(1.0), SurfaceSpec.oblate(0.8), SurfaceSpec.triaxial(1, 1.05, 1.1)][k]
    rng = np.random.default_rng(seed)
    start = project_to_surface(spec, rng.normal(size=3) + 1e-3)
    path = random_path(spec, start, n, 0.05, rng)
    assert length(path) ** 2 <= energy(path) * (1 + 1e-14)


@pytest.mark.parametrize("E, eps, want", [(4.0, 0.5, 8.5), (0.0, 0.5, 0.5), (4.1, 0.5, 8.7)])
def test_concatenation_energy_values(E, eps, want):
    assert concatenation_energy(E, eps) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.2, 1.5])
def test_eps_out_of_range(eps):
    with pytest.raises(EpsilonOutOfRange):
        concatenation_energy(1.0, eps)
    with pytest.raises(EpsilonOutOfRange):
        tail_segments(10, eps)


def test_tail_segments():
    assert tail_segments(40, 0.2) == 10
    assert tail_segments(10, 0.5) == 10
    with pytest.raises(ValueError, match="integer"):
        tail_segments(10, 0.3)


@pytest.mark.parametrize("n, eps", [(40, 0.2), (10, 0.5), (200, 0.5), (30, 0.25)])
def test_concatenation_identity(triaxial, n, eps):
    c = _arc(triaxial, E1, np.array([0, 0.6, 0.8]), 1.0, n)
    y = c.points[-1]
    tail = shoot(triaxial, y, tangent_frame(triaxial, y)[0], eps)
    tc = concatenate(c, tail)
    assert np.array_equal(tc.points[0], c.points[0])
    np.testing.assert_allclose(tc.points[-1], tail.end, atol=1e-12)
    assert abs(energy(tc) - concatenation_energy(energy(c), eps)) <= 1e-12


def test_concatenate_constant_path(sphere):
    # E(c) = 0 for the constant path at y; the result is just the tail, squeezed
    c = DiscretePath(sphere, np.array([E1] * 11))
    tail = shoot(sphere, E1, E2, 0.5)
    tc = concatenate(c, tail)
    assert energy(c) == 0.0
    assert energy(tc) == pytest.approx(0.5, abs=1e-12)


def test_concatenate_rejects_detached_tail(sphere):
    c = _arc(sphere, E1, E2, 1.0, 10)
    with pytest.raises(ValueError, match="start"):
        concatenate(c, shoot(sphere, E3, E1, 0.5))


@pytest.mark.parametrize("L, want", [(3.2, 1), (2.5, 0), (7.0, 2)])
def test_sphere_hessian_index(sphere, L, want):
    assert discrete_hessian_index(sphere, shoot(sphere, E1, E2, L), 200) == want


def test_second_variation_shape(oblate):
    diag, off = second_variation_matrix(oblate, shoot(oblate, E1, E2, 2.0), 50)
    assert diag.shape == (49,) and off.shape == (48,)


def test_oblate_equator_oracles_agree(oblate):
    geo = shoot(oblate, E1, E2, 2 * math.pi)
    assert discrete_hessian_index(oblate, geo, 400) == jacobi_index(oblate, geo).index == 2


def test_oracles_agree_triaxial(triaxial, rng):
    for L in (1.5, 3.5, 6.5):
        p = project_to_surface(triaxial, rng.normal(size=3))
        geo = shoot(triaxial, p, random_unit_tangent(triaxial, p, rng), L)
        rep = jacobi_index(triaxial, geo)
        if min((abs(t - L) for t in rep.conjugate_times), default=1.0) < 0.05:
            continue
        assert discrete_hessian_index(triaxial, geo, 400) == rep.index


def test_index_at_least_two_past_prime_length_two():
    # round sphere with prime length 2: every geodesic longer than 2 has index >= 2
    spec = SurfaceSpec.sphere(1 / math.pi)
    p = np.array([1 / math.pi, 0.0, 0.0])
    for L in (2.05, 2.5, 2.95):
        geo = shoot(spec, p, E2, L)
        assert discrete_hessian_index(spec, geo, 400) == jacobi_index(spec, geo).index == 2
    assert jacobi_index(spec, shoot(spec, p, E2, 1.95)).index == 1
