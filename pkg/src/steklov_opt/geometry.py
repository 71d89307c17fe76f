"""Star-shaped domains described by a harmonic expansion of the radius.

A domain in R^d (d = 3, 4) is ``{ t r(xi) xi : xi in S^{d-1}, 0 <= t < 1 }``
where ``r`` is expanded in the real (hyper)spherical harmonics of
:mod:`steklov_opt.harmonics`.  This module evaluates the boundary map, its
tangents, normals, area element and mean curvature, and builds the tensor
product quadrature used for every boundary integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .harmonics import get_table

__all__ = [
    "InvalidDomainError",
    "HarmonicCoefficients",
    "BoundaryQuadrature",
    "DEFAULT_RESOLUTION",
    "sphere_map",
    "to_angles",
    "unit_ball_volume",
    "sphere_area",
    "boundary_map",
    "boundary_geometry",
    "build_quadrature",
    "mean_curvature",
    "volume",
    "volume_gradient",
]

DEFAULT_RESOLUTION = {3: (64, 128), 4: (32, 32, 64)}
_AREA_TOL = 1e-14


class InvalidDomainError(ValueError):
    """Raised when the radius function is not strictly positive."""


def unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d, radius=1.0):
    return d * unit_ball_volume(d) * radius ** (d - 1)


@dataclass(frozen=True)
class HarmonicCoefficients:
    """Coefficient vector of the radius expansion.

    ``values`` follows the ordering of :func:`harmonics.basis_indices`.
    """

    dimension: int
    N: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dimension not in (3, 4):
            raise ValueError(f"dimension must be 3 or 4, got {self.dimension}")
        values = np.array(self.values, dtype=float)
        if values.shape != (self.table.P,):
            raise ValueError(f"expected {self.table.P} coefficients for d={self.dimension}, N={self.N}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def table(self):
        return get_table(self.dimension, self.N)

    @property
    def P(self):
        return self.table.P

    @classmethod
    def ball(cls, dimension, N, radius=1.0):
        """Sphere of the given radius: only the constant coefficient is set."""
        values = np.zeros(get_table(dimension, N).P)
        values[0] = radius * math.sqrt(sphere_area(dimension))
        return cls(dimension, N, values)

    @classmethod
    def unit_volume_ball(cls, dimension, N):
        return cls.ball(dimension, N, unit_ball_volume(dimension) ** (-1.0 / dimension))

    def with_values(self, values):
        return HarmonicCoefficients(self.dimension, self.N, values)

    def scaled(self, t):
        return self.with_values(t * self.values)

    def __eq__(self, other):
        if not isinstance(other, HarmonicCoefficients):
            return NotImplemented
        return (self.dimension, self.N) == (other.dimension, other.N) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.dimension, self.N, self.values.tobytes()))

    def radius(self, angles):
        """Radius r at scattered angles of shape (npts, d-1)."""
        r = self.table.evaluate_points(self.values, angles)[(0,) * (self.dimension - 1)]
        return r


# --------------------------------------------------------------------------
# The unit-sphere parametrisation and its derivatives
# --------------------------------------------------------------------------


def sphere_map(angles):
    """Unit vectors for angles of shape (..., d-1)."""
    return _sphere_jet(np.asarray(angles, dtype=float), 0)[()]


def to_angles(xi):
    """Inverse of :func:`sphere_map` for unit vectors of shape (..., d)."""
    xi = np.asarray(xi, dtype=float)
    d = xi.shape[-1]
    phi = np.mod(np.arctan2(xi[..., 1], xi[..., 0]), 2 * np.pi)
    theta = np.arctan2(np.hypot(xi[..., 0], xi[..., 1]), xi[..., 2])
    if d == 3:
        return np.stack([theta, phi], axis=-1)
    beta = np.arctan2(np.linalg.norm(xi[..., :3], axis=-1), xi[..., 3])
    return np.stack([beta, theta, phi], axis=-1)


def _s2_jet(theta, phi, order):
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    z = np.zeros_like(st * sp)
    jet = {(0, 0): np.stack([st * cp, st * sp, ct + z], -1)}
    if order >= 1:
        jet[(1, 0)] = np.stack([ct * cp, ct * sp, -st + z], -1)
        jet[(0, 1)] = np.stack([-st * sp, st * cp, z], -1)
    if order >= 2:
        jet[(2, 0)] = -jet[(0, 0)]
        jet[(1, 1)] = np.stack([-ct * sp, ct * cp, z], -1)
        jet[(0, 2)] = np.stack([-st * cp, -st * sp, z], -1)
    return jet


def _sphere_jet(angles, order):
    """Derivatives of the unit-sphere map, keyed by derivative multi-index."""
    nvar = angles.shape[-1]
    if nvar == 2:
        jet = _s2_jet(angles[..., 0], angles[..., 1], order)
        return jet if order else jet[(0, 0)]
    beta = angles[..., 0]
    sb, cb = np.sin(beta)[..., None], np.cos(beta)[..., None]
    u = _s2_jet(angles[..., 1], angles[..., 2], order)
    zero = np.zeros(beta.shape + (1,))
    jet = {}
    for key, val in u.items():
        # derivatives not involving beta
        jet[(0,) + key] = np.concatenate([sb * val, zero if key != (0, 0) else cb], -1)
        if sum(key) < order:
            jet[(1,) + key] = np.concatenate([cb * val, zero if key != (0, 0) else -sb], -1)
    if order >= 2:
        jet[(2, 0, 0)] = -jet[(0, 0, 0)]
    return jet if order else jet[(0, 0, 0)]


def _generalized_cross(vectors):
    """Vector orthogonal to d-1 vectors in R^d via cofactor expansion."""
    vectors = list(vectors)
    d = vectors[0].shape[-1]
    if d == 3:
        return np.cross(vectors[0], vectors[1])
    M = np.stack(vectors, axis=-2)  # (..., 3, 4)
    cols = []
    for k in range(d):
        minor = np.delete(M, k, axis=-1)
        cols.append((-1) ** k * np.linalg.det(minor))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class _Geometry:
    points: np.ndarray
    radial: np.ndarray
    radius: np.ndarray
    normals: np.ndarray
    area_element: np.ndarray
    curvature: np.ndarray | None


def boundary_geometry(jet_r, angles, with_curvature=True):
    """Boundary points, normals, area element and mean curvature.

    Parameters
    ----------
    jet_r : dict
        Radius and its angular derivatives keyed by multi-index, each array
        broadcastable against ``angles[..., 0]``.
    angles : (..., d-1) array
    """
    nvar = angles.shape[-1]
    order = 2 if with_curvature else 1
    xi = _sphere_jet(angles, order)
    zero = (0,) * nvar
    unit = [tuple(int(i == j) for j in range(nvar)) for i in range(nvar)]

    r = jet_r[zero]
    if np.any(~(r > 0)):
        raise InvalidDomainError(f"radius not positive (min r = {np.min(r):.3g})")
    x = r[..., None] * xi[zero]
    tangents = [jet_r[e][..., None] * xi[zero] + r[..., None] * xi[e] for e in unit]
    n = _generalized_cross(tangents)
    n = n * np.sign(np.sum(n * xi[zero], axis=-1))[..., None]
    area = np.linalg.norm(n, axis=-1)
    if np.any(area < _AREA_TOL):
        raise InvalidDomainError("degenerate surface element")
    n = n / area[..., None]

    H = None
    if with_curvature:
        g = np.empty(r.shape + (nvar, nvar))
        h = np.empty_like(g)
        for i, ei in enumerate(unit):
            for j, ej in enumerate(unit):
                if j < i:
                    g[..., i, j] = g[..., j, i]
                    h[..., i, j] = h[..., j, i]
                    continue
                eij = tuple(a + b for a, b in zip(ei, ej))
                xij = (
                    jet_r[eij][..., None] * xi[zero]
                    + jet_r[ei][..., None] * xi[ej]
                    + jet_r[ej][..., None] * xi[ei]
                    + r[..., None] * xi[eij]
                )
                g[..., i, j] = np.sum(tangents[i] * tangents[j], axis=-1)
                h[..., i, j] = np.sum(xij * n, axis=-1)
        if np.any(np.abs(np.linalg.det(g)) < _AREA_TOL**2):
            raise InvalidDomainError("singular first fundamental form")
        H = -np.trace(np.linalg.solve(g, h), axis1=-2, axis2=-1)
    return _Geometry(x, xi[zero], r, n, area, H)


def boundary_map(coeffs, angles):
    """Cartesian boundary point(s) for angles of shape (..., d-1)."""
    angles = np.asarray(angles, dtype=float)
    flat = angles.reshape(-1, coeffs.dimension - 1)
    r = coeffs.radius(flat)
    if np.any(~(r > 0)):
        raise InvalidDomainError(f"radius not positive (min r = {np.min(r):.3g})")
    x = r[:, None] * sphere_map(flat)
    return x.reshape(angles.shape[:-1] + (coeffs.dimension,))


def mean_curvature(coeffs, angles):
    """Sum of principal curvatures at scattered angles (positive on spheres)."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    jet = coeffs.table.evaluate_points(coeffs.values, angles, order=2)
    return boundary_geometry(jet, angles).curvature


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


def _polar_rule(n):
    """Gauss-Legendre in cos(theta); weights for the measure d theta."""
    x, w = np.polynomial.legendre.leggauss(n)
    theta = np.arccos(x[::-1])
    w = w[::-1]
    return theta, w / np.sin(theta)


def _beta_rule(n):
    """Gauss-Chebyshev (2nd kind) in cos(beta): equispaced interior beta.

    Exact for sin^2(beta) times polynomials in cos(beta); weights for d beta.
    """
    beta = np.arange(1, n + 1) * np.pi / (n + 1)
    return beta, np.full(n, np.pi / (n + 1))


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Tensor-product quadrature on the boundary of a star-shaped domain.

    Node arrays are flattened in C order over the grid ``shape``.
    """

    dimension: int
    axes: tuple
    shape: tuple
    angles: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    radial: np.ndarray = field(repr=False)
    radius: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    sphere_weights: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.weights.size

    def integrate(self, values):
        return float(np.dot(np.asarray(values).reshape(-1), self.weights))


def _parameter_grid(d, resolution=None):
    """Axes, tensor-product parameter weights and unit-sphere Jacobian."""
    resolution = tuple(resolution or DEFAULT_RESOLUTION[d])
    if len(resolution) != d - 1 or min(resolution) < 2:
        raise ValueError(f"bad quadrature resolution {resolution} for d={d}")
    nphi = resolution[-1]
    phi = np.arange(nphi) * (2 * np.pi / nphi)
    wphi = np.full(nphi, 2 * np.pi / nphi)
    theta, wtheta = _polar_rule(resolution[-2])
    if d == 3:
        axes, wax = (theta, phi), (wtheta, wphi)
    else:
        beta, wbeta = _beta_rule(resolution[0])
        axes, wax = (beta, theta, phi), (wbeta, wtheta, wphi)
    param_w = wax[0]
    for w in wax[1:]:
        param_w = np.multiply.outer(param_w, w)
    grids = np.meshgrid(*axes, indexing="ij")
    jac = np.sin(grids[-2]) if d == 3 else np.sin(grids[0]) ** 2 * np.sin(grids[1])
    return axes, grids, param_w, jac


def build_quadrature(coeffs, resolution=None):
    """Quadrature grid on the boundary of ``coeffs``.

    ``resolution`` is ``(n_theta, n_phi)`` in 3D or ``(n_beta, n_theta, n_phi)``
    in 4D; defaults to :data:`DEFAULT_RESOLUTION`.  Polar angles use
    Gauss-Legendre nodes in cos(theta), beta uses equispaced interior nodes
    (Gauss-Chebyshev of the second kind in cos(beta)), phi the trapezoid rule.
    """
    d = coeffs.dimension
    axes, grids, param_w, jac = _parameter_grid(d, resolution)
    angles = np.stack(grids, axis=-1)
    jet = coeffs.table.evaluate_grid(coeffs.values, axes, order=2)
    geo = boundary_geometry(jet, angles)

    def flat(a):
        return a.reshape(-1, *a.shape[d - 1 :]) if a.ndim > d - 1 else a.reshape(-1)

    return BoundaryQuadrature(
        dimension=d,
        axes=axes,
        shape=tuple(len(a) for a in axes),
        angles=flat(angles),
        points=flat(geo.points),
        radial=flat(geo.radial),
        radius=flat(geo.radius),
        normals=flat(geo.normals),
        weights=flat(geo.area_element * param_w),
        sphere_weights=flat(jac * param_w),
        curvature=flat(geo.curvature),
    )


def volume(coeffs, quad=None, resolution=None):
    """Volume (1/d) * integral over S^{d-1} of r^d."""
    d = coeffs.dimension
    if quad is not None:
        r, w = quad.radius, quad.sphere_weights
    else:
        axes, _, param_w, jac = _parameter_grid(d, resolution)
        r = coeffs.table.evaluate_grid(coeffs.values, axes)[(0,) * (d - 1)]
        w = jac * param_w
    if np.any(~(r > 0)):
        raise InvalidDomainError(f"radius not positive (min r = {np.min(r):.3g})")
    return float(np.sum(r**d * w) / d)


def volume_gradient(coeffs, quad=None):
    """Derivative of the volume with respect to each coefficient.

    Component p is the boundary integral of (S_p xhat) . n, i.e. the volume
    shape derivative for the radial deformation field S_p xhat.
    """
    quad = quad or build_quadrature(coeffs)
    density = np.sum(quad.radial * quad.normals, axis=-1) * quad.weights
    return coeffs.table.project_grid(density.reshape(quad.shape), quad.axes)
