import math

import numpy as np
import pytest

from steklov_opt.geometry import (
    DEFAULT_RESOLUTION,
    HarmonicCoefficients,
    InvalidDomainError,
    boundary_map,
    build_quadrature,
    mean_curvature,
    volume,
    volume_gradient,
)
from steklov_opt.harmonics import norm3, sph3


def domain(d, N, terms, radius=1.0):
    """Sphere of ``radius`` plus ``{index: coefficient}`` perturbations."""
    c = HarmonicCoefficients.ball(d, N, radius)
    values = c.values.copy()
    index = {tuple(i): p for p, i in enumerate(c.table.indices)}
    for key, v in terms.items():
        values[index[key]] += v
    return c.with_values(values)


def random_domain(d, N, rng, amplitude=0.08):
    c = HarmonicCoefficients.ball(d, N)
    values = c.values.copy()
    values[1:] = rng.uniform(-amplitude, amplitude, size=c.P - 1)
    return c.with_values(values)


# --------------------------------------------------------------------------
# HarmonicCoefficients
# --------------------------------------------------------------------------


def test_coefficients_validate_length():
    with pytest.raises(ValueError):
        HarmonicCoefficients(3, 2, np.zeros(5))
    with pytest.raises(ValueError):
        HarmonicCoefficients(5, 2, np.zeros(9))


def test_coefficients_are_immutable():
    c = HarmonicCoefficients.ball(3, 2)
    with pytest.raises(ValueError):
        c.values[0] = 2.0


def test_radius_of_ball():
    c = HarmonicCoefficients.ball(3, 4, 1.5)
    ang = np.array([[0.1, 0.2], [2.0, 4.0]])
    assert c.radius(ang) == pytest.approx([1.5, 1.5], rel=1e-14)


# --------------------------------------------------------------------------
# boundary_map
# --------------------------------------------------------------------------


def test_boundary_map_unit_sphere():
    c = HarmonicCoefficients.ball(3, 3)
    assert c.values[0] == pytest.approx(math.sqrt(4 * math.pi))
    assert boundary_map(c, [math.pi / 2, 0.0]) == pytest.approx([1.0, 0.0, 0.0], abs=1e-15)


def test_boundary_map_4d_pole():
    c = HarmonicCoefficients.ball(4, 3)
    assert boundary_map(c, [0.0, 1.1, 2.3]) == pytest.approx([0.0, 0.0, 0.0, 1.0], abs=1e-15)


def test_boundary_map_demo_domain_pole():
    c = domain(3, 2, {(2, 0): 0.4})
    expected = 1 + 0.4 * norm3(2, 0) * 1.0
    assert boundary_map(c, [0.0, 0.0]) == pytest.approx([0.0, 0.0, expected], abs=1e-14)


def test_boundary_map_rejects_nonpositive_radius():
    c = HarmonicCoefficients.ball(3, 2).scaled(-1.0)
    with pytest.raises(InvalidDomainError):
        boundary_map(c, [0.3, 0.3])


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def test_unit_sphere_quadrature():
    q = build_quadrature(HarmonicCoefficients.ball(3, 4))
    assert q.weights.sum() == pytest.approx(4 * math.pi, abs=1e-8)
    assert np.max(np.abs(q.normals - q.radial)) < 1e-10
    assert q.size == np.prod(DEFAULT_RESOLUTION[3])


def test_4d_sphere_area():
    q = build_quadrature(HarmonicCoefficients.ball(4, 3, 2.0))
    assert q.weights.sum() == pytest.approx(2 * math.pi**2 * 8, rel=1e-6)


@pytest.mark.parametrize("d", [3, 4])
def test_quadrature_invariants_on_random_domains(d, rng):
    for _ in range(3):
        c = random_domain(d, 4, rng)
        q = build_quadrature(c, (16, 16, 32) if d == 4 else (32, 64))
        assert np.max(np.abs(np.linalg.norm(q.normals, axis=1) - 1)) < 1e-12
        assert np.all(np.einsum("ij,ij->i", q.normals, q.radial) > 0)
        assert q.weights.sum() > 0


def test_outward_normals_with_large_single_modes():
    # each perturbation is at most half the constant coefficient
    a0 = math.sqrt(4 * math.pi)
    for key in [(1, 0), (1, 1), (2, -1), (2, 0), (3, 2)]:
        c = domain(3, 3, {key: 0.5 * a0 * 0.9 / (1 + key[0])})
        q = build_quadrature(c, (32, 64))
        assert np.all(np.einsum("ij,ij->i", q.normals, q.radial) > 0)


def test_quadrature_rejects_invalid_domain():
    c = domain(3, 2, {(2, 0): 5.0})
    with pytest.raises(InvalidDomainError):
        build_quadrature(c)


# --------------------------------------------------------------------------
# mean curvature
# --------------------------------------------------------------------------


@pytest.mark.parametrize("R", [0.5, 1.0, 2.5])
def test_sphere_curvature(R):
    ang3 = np.array([[0.4, 1.0], [1.6, 3.0], [2.9, 5.0]])
    assert mean_curvature(HarmonicCoefficients.ball(3, 3, R), ang3) == pytest.approx(2 / R, rel=1e-12)
    ang4 = np.array([[0.4, 1.0, 2.0], [1.6, 2.0, 0.5]])
    assert mean_curvature(HarmonicCoefficients.ball(4, 3, R), ang4) == pytest.approx(3 / R, rel=1e-12)


def fd_mean_curvature(coeffs, angles, h=1e-4):
    """Sum of principal curvatures from finite differences of the boundary map."""
    angles = np.asarray(angles, dtype=float)
    n = len(angles)
    X = lambda a: boundary_map(coeffs, a)
    E = np.eye(n) * h
    d1 = [(X(angles + E[i]) - X(angles - E[i])) / (2 * h) for i in range(n)]
    d2 = np.empty((n, n, len(d1[0])))
    for i in range(n):
        for j in range(n):
            d2[i, j] = (
                X(angles + E[i] + E[j]) - X(angles + E[i] - E[j]) - X(angles - E[i] + E[j]) + X(angles - E[i] - E[j])
            ) / (4 * h * h)
    T = np.array(d1)
    # normal: orthogonal complement of the tangents, oriented away from the origin
    normal = np.linalg.svd(T)[2][-1]
    if normal @ X(angles) < 0:
        normal = -normal
    g = T @ T.T
    b = np.einsum("ijk,k->ij", d2, normal)
    return -np.trace(np.linalg.solve(g, b))


def test_curvature_matches_finite_differences_demo():
    c = domain(3, 2, {(2, 0): 0.1})
    ang = [math.pi / 2, 0.3]
    assert mean_curvature(c, [ang])[0] == pytest.approx(fd_mean_curvature(c, ang), rel=1e-4)


@pytest.mark.parametrize("d", [3, 4])
def test_curvature_matches_finite_differences_random(d, rng):
    for _ in range(3):
        c = random_domain(d, 4, rng)
        ang = rng.uniform(0.4, 2.6, size=d - 1)
        assert mean_curvature(c, [ang])[0] == pytest.approx(fd_mean_curvature(c, ang), rel=1e-4)


# --------------------------------------------------------------------------
# volume
# --------------------------------------------------------------------------


def test_ball_volumes():
    assert volume(HarmonicCoefficients.ball(3, 2)) == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert volume(HarmonicCoefficients.ball(4, 2)) == pytest.approx(math.pi**2 / 2, rel=1e-12)
    assert volume(HarmonicCoefficients.ball(3, 2, 0.7)) == pytest.approx(4 * math.pi / 3 * 0.7**3, rel=1e-12)


@pytest.mark.parametrize("d", [3, 4])
@pytest.mark.parametrize("t", [0.5, 2.0])
def test_volume_scaling(d, t, rng):
    c = random_domain(d, 4, rng)
    assert volume(c.scaled(t)) == pytest.approx(t**d * volume(c), rel=1e-12)


def test_volume_with_quadrature_agrees():
    c = domain(3, 4, {(2, 0): 0.4, (3, -2): 0.1})
    assert volume(c, build_quadrature(c)) == pytest.approx(volume(c), rel=1e-14)


def test_volume_quadrature_converged():
    c = domain(3, 2, {(2, 0): 0.4})
    coarse = volume(c)
    fine = volume(c, resolution=tuple(2 * n for n in DEFAULT_RESOLUTION[3]))
    assert abs(fine - coarse) < 1e-8


def test_volume_rejects_invalid_domain():
    with pytest.raises(InvalidDomainError):
        volume(domain(3, 2, {(2, 0): 5.0}))


def test_volume_gradient_on_unit_sphere():
    g = volume_gradient(HarmonicCoefficients.ball(3, 4))
    assert g[0] == pytest.approx(math.sqrt(4 * math.pi), rel=1e-10)
    assert np.max(np.abs(g[1:])) < 1e-10


@pytest.mark.parametrize("d", [3, 4])
def test_volume_gradient_matches_finite_differences(d, rng):
    h = 1e-5
    for _ in range(3):
        c = random_domain(d, 3, rng)
        g = volume_gradient(c)
        fd = np.empty(c.P)
        for p in range(c.P):
            e = np.zeros(c.P)
            e[p] = h
            fd[p] = (volume(c.with_values(c.values + e)) - volume(c.with_values(c.values - e))) / (2 * h)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)
