"""Maximisation of the volume-normalised Steklov eigenvalue C_k = sigma_k |Omega|^(1/d).

The search space is the coefficient vector of the radius expansion.  Each
iteration groups the eigenvalues that sit within ``epsilon`` of the target into
a cluster, computes the shape gradient of every clustered C_j as if it were
simple, and moves along the unit direction that maximises the smallest
directional derivative.  That direction is the normalised minimum-norm point
of the convex hull of the cluster gradients.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import InvalidDomainError, HarmonicCoefficients, build_quadrature, sphere_area, volume, volume_gradient
from .mfs import EigenSolverError, SingularityError, assemble, solve_eigen
from .sphere_points import SourceInsideError, build_collocation

__all__ = [
    "Discretization",
    "Evaluation",
    "Direction",
    "OptimizerSettings",
    "OptimizerState",
    "HistoryEntry",
    "OptimizationResult",
    "InsufficientEigenvaluesForCluster",
    "UnresolvedDomainError",
    "check_resolved",
    "evaluate",
    "cost",
    "eigenvalue_gradient",
    "eigen_gradient",
    "cluster",
    "min_norm_point",
    "maxmin_direction",
    "normalize_volume",
    "random_start",
    "optimize",
]

log = logging.getLogger(__name__)

# failures that make a candidate domain unusable; the line search backs off
DOMAIN_ERRORS = (InvalidDomainError, SourceInsideError, EigenSolverError, SingularityError)


class InsufficientEigenvaluesForCluster(ValueError):
    pass


class UnresolvedDomainError(EigenSolverError):
    """The discrete eigenpairs violate the boundary condition between collocation points."""


@dataclass(frozen=True)
class Discretization:
    """Forward-solver resolution."""

    collocation: int = 2000
    delta: float = 0.2
    riesz_s: float = 3.0
    riesz_iters: int = 500
    quadrature: tuple | None = None
    method: str = "lu"


@dataclass(frozen=True)
class Evaluation:
    coeffs: HarmonicCoefficients
    collocation: object = field(repr=False)
    solution: object = field(repr=False)
    quadrature: object = field(repr=False)
    volume: float
    costs: np.ndarray

    @property
    def eigenvalues(self):
        return self.solution.eigenvalues


def evaluate(coeffs, kmax, disc=Discretization(), preimages=None, refine_iters=None, fields=True):
    """Forward solve on ``coeffs``: eigenvalues sigma_0..sigma_kmax and costs.

    With ``fields`` the eigenfunctions are also evaluated on the boundary
    quadrature (needed for gradients).  ``preimages`` warm-starts the
    collocation; ``refine_iters`` overrides the Riesz iteration cap.

    The source offset ``disc.delta`` is measured in units of the unit-volume
    domain: the offset used is ``delta * |Omega|^(1/d)``, so a dilated domain
    gets a dilated discretisation and sigma_k(t Omega) = sigma_k(Omega) / t
    holds for the discrete eigenvalues too.
    """
    iters = disc.riesz_iters if refine_iters is None else refine_iters
    quad = build_quadrature(coeffs, disc.quadrature) if fields else None
    vol = volume(coeffs, quad) if quad is not None else volume(coeffs, resolution=disc.quadrature)
    delta = disc.delta * vol ** (1.0 / coeffs.dimension)
    colloc = build_collocation(
        coeffs, disc.collocation, s=disc.riesz_s, delta=delta, iters=iters, preimages=preimages
    )
    sol = solve_eigen(assemble(colloc), kmax, quad, method=disc.method)
    costs = sol.eigenvalues * vol ** (1.0 / coeffs.dimension)
    return Evaluation(coeffs, colloc, sol, quad, vol, costs)


def cost(coeffs, k, disc=Discretization(), preimages=None):
    """C_k = sigma_k |Omega|^(1/d)."""
    return float(evaluate(coeffs, k, disc, preimages=preimages, fields=False).costs[k])


def eigenvalue_gradient(coeffs, j, solution, quad):
    """Gradient of sigma_j with respect to the coefficients.

    Uses the simple-eigenvalue shape derivative
    ``int (|grad w|^2 - 2 sigma^2 w^2 - sigma H w^2) V.n`` with the radial
    field ``V = S_p xhat`` for coefficient p.
    """
    if not solution.normalized:
        raise ValueError("eigenfunctions must be normalised on the quadrature")
    sigma = solution.eigenvalues[j]
    w = solution.trace[j]
    g2 = np.einsum("ij,ij->i", solution.gradient[j], solution.gradient[j])
    integrand = g2 - 2.0 * sigma**2 * w**2 - sigma * quad.curvature * w**2
    vn = np.einsum("ij,ij->i", quad.radial, quad.normals)
    density = integrand * vn * quad.weights
    return coeffs.table.project_grid(density.reshape(quad.shape), quad.axes)


def eigen_gradient(coeffs, k, solution, quad, vol=None, vol_grad=None, epsilon=None):
    """Gradient of C_k with respect to the coefficients."""
    d = coeffs.dimension
    if epsilon is not None:
        sig = solution.eigenvalues
        near = [j for j in (k - 1, k + 1) if 0 <= j < len(sig) and abs(sig[j] - sig[k]) <= epsilon]
        if near:
            warnings.warn(f"sigma_{k} is numerically multiple; using the simple-eigenvalue gradient", RuntimeWarning)
    vol = volume(coeffs, quad) if vol is None else vol
    vol_grad = volume_gradient(coeffs, quad) if vol_grad is None else vol_grad
    sigma = solution.eigenvalues[k]
    dsigma = eigenvalue_gradient(coeffs, k, solution, quad)
    return vol ** (1.0 / d) * dsigma + sigma * vol ** (1.0 / d - 1.0) / d * vol_grad


def check_resolved(evaluation, upto, tol):
    """Raise :class:`UnresolvedDomainError` if any of sigma_1..sigma_upto has residual above ``tol``."""
    res = evaluation.solution.residual
    if res is None:
        raise ValueError("residuals need an evaluation with fields")
    worst = float(np.max(res[1 : upto + 1]))
    if not worst <= tol:
        raise UnresolvedDomainError(f"boundary residual {worst:.3g} exceeds {tol:.3g}; domain under-resolved")
    return worst


def cluster(costs, k, epsilon=0.01):
    """Size of the group of costs C_k, C_{k+1}, ... lying within ``epsilon`` of C_k.

    Returns the largest M with C_{k+M-1} - C_k <= epsilon < C_{k+M} - C_k.
    """
    costs = np.asarray(costs, dtype=float)
    M = 1
    while k + M < len(costs) and costs[k + M] - costs[k] <= epsilon:
        M += 1
    if k + M >= len(costs):
        raise InsufficientEigenvaluesForCluster(
            f"cluster at k={k} reaches the last available eigenvalue (index {len(costs) - 1})"
        )
    return M


def min_norm_point(points, tol=1e-12, max_iter=1000):
    """Minimum-norm point of the convex hull of the rows of ``points``.

    Wolfe's active-set algorithm.  Returns ``(p, weights)`` with
    ``p = weights @ points``, ``weights >= 0`` and ``sum(weights) = 1``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(P)
    scale = max(1.0, float(np.max(np.einsum("ij,ij->i", P, P))))
    active = [int(np.argmin(np.einsum("ij,ij->i", P, P)))]
    lam = np.array([1.0])
    x = P[active[0]].copy()

    def affine_minimizer(S):
        Q = P[S] @ P[S].T
        n = len(S)
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = Q
        K[:n, n] = K[n, :n] = 1.0
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        return np.linalg.lstsq(K, rhs, rcond=None)[0][:n]

    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = affine_minimizer(active)
            if np.all(mu > tol):
                lam = mu
                break
            neg = mu <= tol
            ratios = lam[neg] / np.maximum(lam[neg] - mu[neg], 1e-300)
            theta = min(1.0, float(np.min(ratios)))
            lam = theta * mu + (1.0 - theta) * lam
            keep = lam > tol
            active = [a for a, kp in zip(active, keep) if kp]
            lam = lam[keep]
            lam /= lam.sum()
        x = lam @ P[active]
    weights = np.zeros(m)
    weights[active] = lam
    return x, weights


@dataclass(frozen=True)
class Direction:
    """Max-min ascent direction; ``vector`` is None at a stationary point."""

    vector: np.ndarray | None
    value: float
    weights: np.ndarray
    stationary: bool


def maxmin_direction(gradients, tol=1e-10):
    """Unit v maximising min_j g_j . v over the cluster gradients.

    The value of the max-min problem equals the norm of the minimum-norm
    point p of the convex hull.  When ``|p| <= tol * max_j |g_j|`` no ascent
    direction exists and a stationary :class:`Direction` is returned.
    """
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    if not np.all(np.isfinite(G)):
        raise ValueError("non-finite gradients")
    p, weights = min_norm_point(G)
    norm = float(np.linalg.norm(p))
    scale = float(np.max(np.linalg.norm(G, axis=1)))
    if norm <= tol * max(scale, 1e-300):
        return Direction(None, 0.0, weights, True)
    v = p / norm
    return Direction(v, float(np.min(G @ v)), weights, False)


# --------------------------------------------------------------------------
# Ascent loop
# --------------------------------------------------------------------------


def normalize_volume(coeffs, resolution=None):
    """Rescale to unit volume (the costs are scale invariant)."""
    return coeffs.scaled(volume(coeffs, resolution=resolution) ** (-1.0 / coeffs.dimension))


def random_start(dimension, N, rng, amplitude=0.15, degree=4):
    """Unit sphere plus uniform noise on the modes of degree 1..``degree``."""
    base = HarmonicCoefficients.ball(dimension, N)
    values = base.values.copy()
    lead = base.table.indices[:, 0]
    mask = (lead >= 1) & (lead <= degree)
    values[mask] = rng.uniform(-amplitude, amplitude, size=int(mask.sum()))
    return base.with_values(values)


@dataclass(frozen=True)
class OptimizerSettings:
    k: int
    epsilon: float = 0.01
    max_iter: int = 150
    armijo: float = 1e-4
    initial_step: float = 0.1
    max_halvings: int = 20
    restarts: int = 1
    noise: float = 0.15
    noise_degree: int = 4
    seed: int = 0
    max_cluster: int = 12
    warm_riesz_iters: int = 50
    max_residual: float = 0.1
    stationary_tol: float = 1e-3


@dataclass(frozen=True)
class HistoryEntry:
    restart: int
    iteration: int
    costs: tuple
    multiplicity: int
    step: float
    volume: float
    direction_value: float


@dataclass
class OptimizerState:
    """Mutable state of one ascent run."""

    coeffs: HarmonicCoefficients
    k: int
    evaluation: Evaluation | None = None
    multiplicity: int = 1
    gradients: np.ndarray | None = None
    direction: Direction | None = None
    step: float = 0.0
    iteration: int = 0
    history: list = field(default_factory=list)
    stop_reason: str = ""

    @property
    def value(self):
        return float(self.evaluation.costs[self.k])

    def snapshot(self):
        return replace(self, history=list(self.history))


@dataclass(frozen=True)
class OptimizationResult:
    best: OptimizerState
    runs: tuple
    history: tuple
    timings: dict

    @property
    def coeffs(self):
        return self.best.coeffs

    @property
    def value(self):
        return self.best.value

    @property
    def multiplicity(self):
        return self.best.multiplicity


def _initial_state(start, settings, disc):
    coeffs = normalize_volume(start, disc.quadrature)
    ev = evaluate(coeffs, settings.k + settings.max_cluster, disc)
    check_resolved(ev, settings.k + cluster(ev.costs, settings.k, settings.epsilon), settings.max_residual)
    return OptimizerState(coeffs=coeffs, k=settings.k, evaluation=ev)


def _ascend(state, settings, disc, restart=0, callback=None):
    k = settings.k
    kmax = k + settings.max_cluster

    for it in range(settings.max_iter):
        ev = state.evaluation
        state.iteration = it
        state.multiplicity = cluster(ev.costs, k, settings.epsilon)
        vol_grad = volume_gradient(state.coeffs, ev.quadrature)
        idx = range(k, k + state.multiplicity)
        state.gradients = np.array(
            [eigen_gradient(state.coeffs, j, ev.solution, ev.quadrature, ev.volume, vol_grad) for j in idx]
        )
        state.direction = maxmin_direction(state.gradients, settings.stationary_tol)
        entry = HistoryEntry(
            restart,
            it,
            tuple(float(c) for c in ev.costs[k : k + state.multiplicity + 1]),  # C_k .. C_{k+M}
            state.multiplicity,
            state.step,
            ev.volume,
            state.direction.value,
        )
        state.history.append(entry)
        if callback is not None:
            callback(entry)
        log.info("restart %d it %d: C_%d=%.6f M=%d step=%.3g", restart, it, k, ev.costs[k], state.multiplicity, state.step)
        if state.direction.stationary:
            state.stop_reason = "stationary"
            break

        v = state.direction.vector
        base = state.coeffs.values
        step = settings.initial_step * np.linalg.norm(base)
        accepted = None
        for _ in range(settings.max_halvings + 1):
            try:
                trial = normalize_volume(state.coeffs.with_values(base + step * v), disc.quadrature)
                # same pre-images as the current state, so the comparison is like for like
                tev = evaluate(trial, kmax, disc, preimages=ev.collocation.preimages, refine_iters=0, fields=False)
                if tev.costs[k] >= ev.costs[k] + settings.armijo * step * state.direction.value:
                    new_ev = evaluate(
                        trial, kmax, disc, preimages=ev.collocation.preimages, refine_iters=settings.warm_riesz_iters
                    )
                    check_resolved(new_ev, k + cluster(new_ev.costs, k, settings.epsilon), settings.max_residual)
                    accepted = (trial, new_ev)
                    break
            except DOMAIN_ERRORS + (InsufficientEigenvaluesForCluster,) as exc:
                log.debug("trial step %.3g rejected: %s", step, exc)
            step *= 0.5
        if accepted is None:
            state.stop_reason = "step underflow"
            break
        state.coeffs, state.evaluation = accepted
        state.step = step
    else:
        state.stop_reason = "iteration cap"

    state.multiplicity = cluster(state.evaluation.costs, k, settings.epsilon)
    return state


def optimize(settings, disc=Discretization(), dimension=3, N=20, start=None, callback=None):
    """Run the max-min ascent from ``start`` and/or random restarts.

    The first run starts from ``start`` when given; remaining restarts (up to
    ``settings.restarts`` runs in total) start from :func:`random_start`.
    Returns the best run by final C_k.
    """
    rng = np.random.default_rng(settings.seed)
    runs = []
    timings = {}
    for r in range(settings.restarts):
        t0 = time.perf_counter()
        fixed = r == 0 and start is not None
        # random starts that the discretisation cannot resolve are redrawn
        for _ in range(1 if fixed else 20):
            init = start if fixed else random_start(dimension, N, rng, settings.noise, settings.noise_degree)
            try:
                state = _initial_state(init, settings, disc)
            except DOMAIN_ERRORS as exc:
                log.warning("restart %d: start rejected: %s", r, exc)
                continue
            runs.append(_ascend(state, settings, disc, restart=r, callback=callback))
            break
        timings[f"restart_{r}"] = time.perf_counter() - t0
    if not runs:
        raise EigenSolverError("every restart failed")
    best = max(runs, key=lambda s: s.value)
    history = tuple(e for s in runs for e in s.history)
    return OptimizationResult(best, tuple(runs), history, timings)
