import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steklov_opt.geometry import HarmonicCoefficients, to_angles
from steklov_opt.sphere_points import (
    CoincidentPointsError,
    SourceInsideError,
    build_collocation,
    fibonacci_sphere,
    kronecker_sphere,
    minimize_riesz,
    nearest_neighbor_distances,
    riesz_energy,
    riesz_energy_gradient,
)

OCTAHEDRON_ENERGY = 12 / math.sqrt(2) + 3 / 2


def brute_energy(x, s):
    return sum(np.linalg.norm(a - b) ** -s for a, b in itertools.combinations(x, 2))


def demo_domain(N=2):
    c = HarmonicCoefficients.ball(3, N)
    values = c.values.copy()
    values[6] = 0.4  # (l, m) = (2, 0)
    assert tuple(c.table.indices[6]) == (2, 0)
    return c.with_values(values)


def test_antipodal_energy():
    assert riesz_energy(np.array([[0, 0, 1.0], [0, 0, -1.0]]), 1) == pytest.approx(0.5, abs=1e-15)


def test_octahedron_energy():
    octa = np.vstack([np.eye(3), -np.eye(3)])
    assert OCTAHEDRON_ENERGY == pytest.approx(9.985281, abs=1e-6)
    assert riesz_energy(octa, 1) == pytest.approx(OCTAHEDRON_ENERGY, rel=1e-14)


@given(arrays(np.float64, (7, 3), elements=st.floats(-2, 2)), st.sampled_from([1.0, 2.0, 3.0, 0.5]))
def test_energy_matches_brute_force(x, s):
    d = np.linalg.norm(x[:, None] - x[None], axis=-1) + np.eye(len(x))
    if d.min() < 1e-3:
        return
    assert riesz_energy(x, s) == pytest.approx(brute_energy(x, s), rel=1e-10)


def test_energy_gradient_matches_finite_differences(rng):
    x = rng.normal(size=(9, 4))
    e, g = riesz_energy_gradient(x, 3)
    h = 1e-6
    fd = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            dx = np.zeros_like(x)
            dx[i, j] = h
            fd[i, j] = (riesz_energy(x + dx, 3) - riesz_energy(x - dx, 3)) / (2 * h)
    assert g == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_energy_errors():
    with pytest.raises(CoincidentPointsError):
        riesz_energy(np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]]), 1)
    with pytest.raises(ValueError):
        riesz_energy(np.eye(3), 0)


def test_minimize_two_points(rng):
    res = minimize_riesz(rng.normal(size=(2, 3)), s=1)
    assert res.energy == pytest.approx(0.5, abs=1e-6)
    assert np.allclose(np.linalg.norm(res.points, axis=1), 1.0)


def test_minimize_six_points_octahedron(rng):
    res = minimize_riesz(rng.normal(size=(6, 3)), s=1)
    assert res.energy == pytest.approx(OCTAHEDRON_ENERGY, abs=1e-4)


def test_minimize_four_points_tetrahedron(rng):
    # energy is quadratic at the minimum, so distances resolve to ~sqrt(rtol)
    res = minimize_riesz(rng.normal(size=(4, 3)), s=3, rtol=1e-13)
    d = [np.linalg.norm(a - b) for a, b in itertools.combinations(res.points, 2)]
    assert max(d) - min(d) < 1e-5
    assert d[0] == pytest.approx(math.sqrt(8 / 3), abs=1e-5)


@given(st.integers(0, 10_000), st.integers(0, 40))
def test_minimize_never_increases_energy(seed, iters):
    x = np.random.default_rng(seed).normal(size=(12, 3))
    res = minimize_riesz(x, s=3, iters=iters)
    assert res.energy <= res.initial_energy
    assert np.allclose(np.linalg.norm(res.points, axis=1), 1.0, atol=1e-14)


@pytest.mark.parametrize("seed_fn,d", [(fibonacci_sphere, 3), (kronecker_sphere, 4)])
def test_seeds_on_sphere_and_spread(seed_fn, d):
    x = seed_fn(500)
    assert x.shape == (500, d)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-14)
    nn = nearest_neighbor_distances(x)
    assert nn.min() > 0.2 * nn.mean()
    # roughly balanced between hemispheres
    assert abs(np.mean(x[:, -1] > 0) - 0.5) < 0.05


def test_unit_sphere_collocation():
    c = HarmonicCoefficients.ball(3, 2)
    col = build_collocation(c, 100, delta=0.2)
    assert np.linalg.norm(col.sources, axis=1) == pytest.approx(np.full(100, 1.2), abs=1e-10)
    assert np.linalg.norm(col.sources - col.points, axis=1) == pytest.approx(np.full(100, 0.2), abs=1e-14)
    nn = nearest_neighbor_distances(col.points)
    assert nn.max() / nn.min() < 2.5


@pytest.mark.parametrize("d", [3, 4])
def test_sources_outside_and_offset_exact(d, rng):
    c = HarmonicCoefficients.ball(d, 3)
    values = c.values.copy()
    values[1:] = rng.uniform(-0.1, 0.1, size=c.P - 1)
    col = build_collocation(c.with_values(values), 150, delta=0.2, iters=30)
    assert np.linalg.norm(col.sources - col.points, axis=1) == pytest.approx(np.full(150, 0.2), abs=1e-14)
    ys = np.linalg.norm(col.sources, axis=1)
    assert np.all(ys > c.with_values(values).radius(to_angles(col.sources / ys[:, None])))
    assert nearest_neighbor_distances(col.points).min() > 0
    # collocation points lie exactly on the boundary
    r = c.with_values(values).radius(to_angles(col.preimages))
    assert np.linalg.norm(col.points, axis=1) == pytest.approx(r, rel=1e-13)


def test_collocation_is_deterministic():
    c = demo_domain()
    a = build_collocation(c, 200, iters=40)
    b = build_collocation(c, 200, iters=40)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.sources, b.sources)


def test_refinement_spreads_points_on_demo_domain():
    c = demo_domain()
    seed = build_collocation(c, 1000, iters=0)
    refined = build_collocation(c, 1000, iters=500)
    assert nearest_neighbor_distances(refined.points).min() > nearest_neighbor_distances(seed.points).min()


def test_concave_domain_rejects_sources_inside():
    c = HarmonicCoefficients.ball(3, 4)
    values = c.values.copy()
    values[20] = 1.5  # (l, m) = (4, 0): deep equatorial grooves
    with pytest.raises(SourceInsideError):
        build_collocation(c.with_values(values), 200, delta=0.2, iters=0)


def test_collocation_argument_errors():
    c = HarmonicCoefficients.ball(3, 2)
    with pytest.raises(ValueError):
        build_collocation(c, 100, delta=0.0)
    with pytest.raises(ValueError):
        build_collocation(c, 2)
    with pytest.raises(ValueError):
        build_collocation(c, 10, preimages=np.ones((9, 3)))
