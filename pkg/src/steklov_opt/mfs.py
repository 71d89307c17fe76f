"""Method of fundamental solutions for the Steklov eigenvalue problem.

Harmonic functions are approximated by ``w(x) = sum_j beta_j Phi(x - y_j)``
with sources ``y_j`` outside the domain.  Collocating ``dw/dn = sigma w`` at
the boundary points gives the square pencil ``A beta = sigma B beta`` with
``A_ij = n_i . grad Phi(x_i - y_j)`` and ``B_ij = Phi(x_i - y_j)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import unit_ball_volume

__all__ = [
    "SingularityError",
    "EigenSolverError",
    "InsufficientEigenvaluesError",
    "MFSSystem",
    "EigenSolution",
    "fundamental_solution",
    "fundamental_gradient",
    "assemble",
    "solve_eigen",
    "evaluate_fields",
]

log = logging.getLogger(__name__)

_SINGULAR = 1e-14
IMAG_TOL = 1e-6
_CHUNK = 1 << 21


class SingularityError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


class InsufficientEigenvaluesError(EigenSolverError):
    """Fewer physical eigenvalues survived filtering than were requested."""


def _kernel_constant(d):
    # d (d-2) alpha(d)
    return d * (d - 2) * unit_ball_volume(d)


def fundamental_solution(x):
    """Phi(x) = 1 / (d (d-2) alpha(d) |x|^(d-2)) along the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < _SINGULAR):
        raise SingularityError("fundamental solution evaluated at its singularity")
    return 1.0 / (_kernel_constant(d) * r ** (d - 2))


def fundamental_gradient(x):
    """grad Phi(x) = -x / (d alpha(d) |x|^d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < _SINGULAR):
        raise SingularityError("fundamental solution gradient evaluated at its singularity")
    return -x / (d * unit_ball_volume(d) * r**d)[..., None]


def _kernels(points, sources, normals=None, gradient=False):
    """Phi(x_i - y_j), optionally n_i . grad Phi and the full gradient."""
    d = points.shape[1]
    diff = points[:, None, :] - sources[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    if r2.min() < _SINGULAR**2:
        raise SingularityError("collocation point coincides with a source")
    r = np.sqrt(r2)
    phi = 1.0 / (_kernel_constant(d) * r ** (d - 2))
    # grad Phi = -(d-2) Phi x / |x|^2
    scale = -(d - 2) * phi / r2
    dn = scale * np.einsum("ijk,ik->ij", diff, normals) if normals is not None else None
    grad = scale[..., None] * diff if gradient else None
    return phi, dn, grad


@dataclass(frozen=True)
class MFSSystem:
    dimension: int
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    collocation: object = field(repr=False)


def assemble(colloc):
    """Build the collocation matrices for a :class:`CollocationSet`."""
    B, A, _ = _kernels(colloc.points, colloc.sources, colloc.normals)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise SingularityError("non-finite entries in MFS matrices")
    return MFSSystem(colloc.dimension, A, B, colloc)


@dataclass(frozen=True)
class EigenSolution:
    """Sorted Steklov eigenvalues and boundary data of their eigenfunctions.

    ``eigenvalues[k]`` is sigma_k with ``sigma_0 ~ 0``.  When a quadrature was
    supplied, ``trace[k]`` and ``gradient[k]`` hold w_k and grad w_k at its
    nodes, with each w_k scaled to unit boundary L^2 norm, and
    ``residual[k]`` is the boundary residual ``||dw_k/dn - sigma_k w_k||``
    on the quadrature divided by ``max(sigma_k, 1)``.  The quadrature nodes
    are not collocation points, so this measures how well the discrete
    solution satisfies the boundary condition between them.
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray = field(repr=False)
    trace: np.ndarray | None = field(default=None, repr=False)
    gradient: np.ndarray | None = field(default=None, repr=False)
    normalized: bool = False
    condition: float = float("nan")
    residual: np.ndarray | None = field(default=None, repr=False)

    @property
    def count(self):
        return len(self.eigenvalues)


def evaluate_fields(sources, coefficients, points, chunk=_CHUNK):
    """Values and gradients of ``sum_j c_jk Phi(x - y_j)`` at ``points``.

    Returns arrays of shape (K, npts) and (K, npts, d).
    """
    coefficients = np.atleast_2d(np.asarray(coefficients).T).T
    npts, d = points.shape
    K = coefficients.shape[1]
    const = _kernel_constant(d)
    ysq = np.einsum("ij,ij->i", sources, sources)
    # y_k c_jm for the gradient contraction
    yc = sources.T[:, :, None] * coefficients[None, :, :]
    values = np.empty((K, npts))
    grads = np.empty((K, npts, d))
    step = max(1, chunk // max(1, len(sources)))
    for start in range(0, npts, step):
        sl = slice(start, min(npts, start + step))
        x = points[sl]
        r2 = np.einsum("ij,ij->i", x, x)[:, None] + ysq[None, :] - 2.0 * (x @ sources.T)
        if r2.min() < _SINGULAR**2:
            raise SingularityError("evaluation point coincides with a source")
        phi = r2 ** (-0.5 * (d - 2)) / const
        scale = -(d - 2) * phi / r2
        values[:, sl] = (phi @ coefficients).T
        sc = scale @ coefficients
        for k in range(d):
            grads[:, sl, k] = (x[:, k : k + 1] * sc - scale @ yc[k]).T
    return values, grads


def _mean_radius(colloc):
    return float(np.mean(np.linalg.norm(colloc.points, axis=1)))


def solve_eigen(system, kmax, quad=None, method="lu", cap=None):
    """Generalised eigenpairs of ``A beta = sigma B beta`` up to sigma_kmax.

    Parameters
    ----------
    system : MFSSystem
    kmax : int
        Highest eigenvalue index required (sigma_0 is index 0).
    quad : BoundaryQuadrature, optional
        When given, eigenfunction traces and gradients are evaluated on it and
        normalised to unit boundary L^2 norm.
    method : {"lu", "qz"}
        ``"lu"`` reduces the pencil to ``B^-1 A`` with a pivoted LU of ``B``;
        ``"qz"`` calls the QZ algorithm on the pencil directly.
    cap : float, optional
        Upper cut-off for physical eigenvalues; defaults to
        ``10 (kmax + 1) / R_mean``.
    """
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    A, B = system.A, system.B
    try:
        if method == "lu":
            lu = sla.lu_factor(B, check_finite=False)
            vals, vecs = sla.eig(sla.lu_solve(lu, A, check_finite=False), check_finite=False)
        elif method == "qz":
            vals, vecs = sla.eig(A, B, check_finite=False)
        else:
            raise ValueError(f"unknown eigen method {method!r}")
    except (sla.LinAlgError, ValueError) as exc:
        if isinstance(exc, ValueError) and "unknown eigen method" in str(exc):
            raise
        raise EigenSolverError(str(exc)) from exc
    cond = float(np.linalg.cond(B)) if log.isEnabledFor(logging.DEBUG) else float("nan")
    log.debug("MFS system M=%d, cond(B)=%.3g", A.shape[0], cond)

    r_mean = _mean_radius(system.collocation)
    cap = 10.0 * (kmax + 1) / r_mean if cap is None else cap
    finite = np.isfinite(vals)
    re, im = vals.real, vals.imag
    keep = finite & (np.abs(im) <= IMAG_TOL * np.maximum(1.0, np.abs(re)))
    keep &= (re >= -1e-3 / r_mean) & (re <= cap)
    idx = np.flatnonzero(keep)
    idx = idx[np.argsort(re[idx], kind="stable")]
    if len(idx) < kmax + 1:
        raise InsufficientEigenvaluesError(
            f"only {len(idx)} physical eigenvalues below cap {cap:.3g}; need {kmax + 1}"
        )
    idx = idx[: kmax + 1]
    sigma = re[idx]
    # a near-real conjugate pair spans a real 2D space: use Re and Im parts
    coeffs = np.where(im[idx] < 0, vecs[:, idx].imag, vecs[:, idx].real)
    coeffs /= np.linalg.norm(coeffs, axis=0)

    if quad is None:
        return EigenSolution(sigma, coeffs, condition=cond)
    values, grads = evaluate_fields(system.collocation.sources, coeffs, quad.points)
    norms = np.sqrt(values**2 @ quad.weights)
    coeffs = coeffs / norms
    values /= norms[:, None]
    grads /= norms[:, None, None]
    dn = np.einsum("kij,ij->ki", grads, quad.normals)
    res = np.sqrt((dn - sigma[:, None] * values) ** 2 @ quad.weights) / np.maximum(sigma, 1.0)
    return EigenSolution(sigma, coeffs, values, grads, normalized=True, condition=cond, residual=res)
