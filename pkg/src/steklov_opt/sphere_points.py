"""Collocation and source points for the fundamental-solution discretisation.

Points are seeded quasi-uniformly on the unit sphere, pushed to the boundary
through the radial map and spread out by descending the Riesz s-energy of the
*boundary* points.  The descent moves the pre-images on the unit sphere, so
every iterate lies exactly on the boundary.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .geometry import InvalidDomainError, _sphere_jet, sphere_area, sphere_map, to_angles

__all__ = [
    "CoincidentPointsError",
    "SourceInsideError",
    "CollocationSet",
    "RieszResult",
    "riesz_energy",
    "riesz_energy_gradient",
    "fibonacci_sphere",
    "kronecker_sphere",
    "sphere_seed",
    "minimize_riesz",
    "refine_on_boundary",
    "build_collocation",
    "collocation_from_preimages",
    "nearest_neighbor_distances",
]

log = logging.getLogger(__name__)

_COINCIDENT = 1e-12
_CHUNK = 1 << 22


class CoincidentPointsError(ValueError):
    pass


class SourceInsideError(ValueError):
    """A source point fell inside the closed domain."""


def _row_chunks(n, width):
    step = max(1, _CHUNK // max(1, n * width))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def riesz_energy(points, s):
    """Sum over pairs i < j of |x_i - x_j|^-s."""
    return riesz_energy_gradient(points, s, gradient=False)


def riesz_energy_gradient(points, s, gradient=True):
    """Riesz s-energy and (optionally) its gradient with respect to the points."""
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("need at least two points")
    if s <= 0:
        raise ValueError("Riesz exponent must be positive")
    n, d = x.shape
    sq = np.einsum("ij,ij->i", x, x)
    energy = 0.0
    grad = np.zeros_like(x) if gradient else None
    for rows in _row_chunks(n, 1):
        r2 = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
        idx = np.arange(rows.start, rows.stop)
        r2[idx - rows.start, idx] = np.inf
        if r2.min() < _COINCIDENT**2:
            raise CoincidentPointsError("coincident points in Riesz energy")
        inv = r2 ** (-0.5 * s) if s != 3 else 1.0 / (r2 * np.sqrt(r2))
        energy += 0.5 * inv.sum()
        if gradient:
            w = inv / r2
            grad[rows] = -s * (w.sum(axis=1)[:, None] * x[rows] - w @ x)
    return (energy, grad) if gradient else energy


def nearest_neighbor_distances(points):
    x = np.asarray(points, dtype=float)
    out = np.empty(len(x))
    sq = np.einsum("ij,ij->i", x, x)
    for rows in _row_chunks(len(x), 1):
        r2 = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
        idx = np.arange(rows.start, rows.stop)
        r2[idx - rows.start, idx] = np.inf
        out[rows] = np.sqrt(np.maximum(r2.min(axis=1), 0.0))
    return out


# --------------------------------------------------------------------------
# Seeds
# --------------------------------------------------------------------------


def fibonacci_sphere(n):
    """Spherical Fibonacci points on S^2."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def kronecker_sphere(n):
    """Quasi-uniform points on S^3.

    An additive recurrence in [0,1)^3 with the generalised golden ratio is
    pushed through the measure-preserving Hopf-type map
    (u, a, b) -> (sqrt(1-u) e^{2 pi i a}, sqrt(u) e^{2 pi i b}).
    """
    g = 1.0
    for _ in range(64):
        g = (1.0 + g) ** 0.25
    alpha = 1.0 / g ** np.arange(1, 4)
    u = np.mod(0.5 + np.outer(np.arange(n), alpha), 1.0)
    c, s = np.sqrt(1.0 - u[:, 0]), np.sqrt(u[:, 0])
    a, b = 2 * np.pi * u[:, 1], 2 * np.pi * u[:, 2]
    return np.stack([c * np.cos(a), c * np.sin(a), s * np.cos(b), s * np.sin(b)], axis=-1)


def sphere_seed(dimension, n):
    if dimension == 3:
        return fibonacci_sphere(n)
    if dimension == 4:
        return kronecker_sphere(n)
    raise ValueError(f"dimension must be 3 or 4, got {dimension}")


# --------------------------------------------------------------------------
# Energy descent
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RieszResult:
    points: np.ndarray = field(repr=False)
    energy: float
    initial_energy: float
    iterations: int


def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _radius_and_surface_gradient(coeffs, xi):
    """r(xi) and its surface gradient on the unit sphere at unit vectors xi."""
    angles = to_angles(xi)
    jet = coeffs.table.evaluate_points(coeffs.values, angles, order=1)
    nvar = coeffs.dimension - 1
    zero = (0,) * nvar
    sj = _sphere_jet(angles, 1)
    grad = np.zeros_like(xi)
    for i in range(nvar):
        e = tuple(int(i == j) for j in range(nvar))
        t = sj[e]
        grad += (jet[e] / np.maximum(np.einsum("ij,ij->i", t, t), 1e-300))[:, None] * t
    return jet[zero], grad


def _descend(xi, s, iters, rtol, radius_fn):
    """Minimise the boundary Riesz energy over sphere pre-images.

    The pre-images are written as ``v / |v|`` with unconstrained ambient
    vectors ``v`` and the energy is handed to L-BFGS; every iterate is
    re-projected to the unit sphere.
    """
    n, d = xi.shape

    def state(xi):
        if radius_fn is None:
            r, gr = np.ones(len(xi)), np.zeros_like(xi)
        else:
            r, gr = radius_fn(xi)
            if np.any(~(r > 0)):
                raise InvalidDomainError("radius not positive at a collocation pre-image")
        energy, g = riesz_energy_gradient(r[:, None] * xi, s)
        # chain rule through x = r(xi) xi
        radial = np.einsum("ij,ij->i", g, xi)
        G = r[:, None] * g + radial[:, None] * gr
        G -= np.einsum("ij,ij->i", G, xi)[:, None] * xi
        return energy, G

    def fun(v):
        V = v.reshape(n, d)
        norm = np.linalg.norm(V, axis=1)
        try:
            energy, G = state(V / norm[:, None])
        except (CoincidentPointsError, InvalidDomainError):
            return np.inf, np.zeros_like(v)
        return energy, (G / norm[:, None]).ravel()

    energy0, _ = state(xi)
    if iters <= 0:
        return xi, energy0, energy0, 0
    res = optimize.minimize(
        fun,
        xi.ravel(),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": iters, "ftol": rtol, "gtol": 0.0, "maxcor": 20},
    )
    out = _normalize(res.x.reshape(n, d))
    energy = state(out)[0]
    if not energy <= energy0:
        return xi, energy0, energy0, res.nit
    return out, energy, energy0, res.nit


def minimize_riesz(initial, s=3.0, iters=500, rtol=1e-8):
    """Spread points on the unit sphere by descending the Riesz s-energy.

    Never returns a configuration with higher energy than ``initial``;
    hitting the iteration cap is not an error.
    """
    xi = _normalize(np.asarray(initial, dtype=float))
    pts, energy, energy0, it = _descend(xi, s, iters, rtol, None)
    assert energy <= energy0
    return RieszResult(pts, energy, energy0, it)


def refine_on_boundary(coeffs, preimages, s=3.0, iters=500, rtol=1e-8):
    """Descend the Riesz energy of boundary points over their sphere pre-images."""
    xi = _normalize(np.asarray(preimages, dtype=float))
    pts, energy, energy0, it = _descend(xi, s, iters, rtol, lambda v: _radius_and_surface_gradient(coeffs, v))
    return RieszResult(pts, energy, energy0, it)


# --------------------------------------------------------------------------
# Collocation sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CollocationSet:
    """Boundary collocation points, outward normals and offset sources."""

    dimension: int
    delta: float
    preimages: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    sources: np.ndarray = field(repr=False)
    energy: float = float("nan")

    @property
    def count(self):
        return len(self.points)


def collocation_from_preimages(coeffs, preimages, delta=0.2, energy=float("nan")):
    """Map pre-images to the boundary, attach normals and offset sources."""
    if delta <= 0:
        raise ValueError("source offset delta must be positive")
    xi = _normalize(np.asarray(preimages, dtype=float))
    r, gr = _radius_and_surface_gradient(coeffs, xi)
    if np.any(~(r > 0)):
        raise InvalidDomainError("radius not positive at a collocation pre-image")
    points = r[:, None] * xi
    normals = _normalize(r[:, None] * xi - gr)
    sources = points + delta * normals

    rs = np.linalg.norm(sources, axis=1)
    r_at_sources = coeffs.radius(to_angles(sources / rs[:, None]))
    inside = rs <= r_at_sources
    if np.any(inside):
        raise SourceInsideError(f"{int(inside.sum())} source points inside the domain (delta={delta})")
    return CollocationSet(coeffs.dimension, float(delta), xi, points, normals, sources, float(energy))


def build_collocation(coeffs, count, s=3.0, delta=0.2, iters=500, rtol=1e-8, preimages=None):
    """Riesz-refined collocation set on the boundary of ``coeffs``.

    Parameters
    ----------
    coeffs : HarmonicCoefficients
    count : int
        Number of collocation (and source) points.
    s : float
        Riesz exponent.
    delta : float
        Source offset along the outward normal.
    iters : int
        Cap on descent iterations (0 keeps the seed).
    preimages : (count, d) array, optional
        Warm start on the unit sphere; defaults to the quasi-uniform seed.
    """
    if count < 4:
        raise ValueError("need at least 4 collocation points")
    if delta <= 0:
        raise ValueError("source offset delta must be positive")
    xi = sphere_seed(coeffs.dimension, count) if preimages is None else np.asarray(preimages, dtype=float)
    if xi.shape != (count, coeffs.dimension):
        raise ValueError(f"preimages must have shape ({count}, {coeffs.dimension})")
    if iters > 0:
        res = refine_on_boundary(coeffs, xi, s=s, iters=iters, rtol=rtol)
        log.debug("riesz refinement: %d iterations, energy %.6g -> %.6g", res.iterations, res.initial_energy, res.energy)
        xi, energy = res.points, res.energy
    else:
        energy = float("nan")
    return collocation_from_preimages(coeffs, xi, delta, energy)
