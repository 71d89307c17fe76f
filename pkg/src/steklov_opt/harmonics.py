"""Real spherical harmonics on S^2 and hyperspherical harmonics on S^3.

Conventions
-----------
3D harmonics use angles ``(theta, phi)`` and are indexed by ``(l, m)``::

    S_l^m = sqrt(2) k_l^m cos(m phi)   P_l^m(cos theta)     m > 0
    S_l^0 =         k_l^0              P_l^0(cos theta)
    S_l^m = sqrt(2) k_l^m sin(-m phi)  P_l^-m(cos theta)    m < 0

with ``k_l^m = sqrt((2l+1)(l-|m|)! / (4 pi (l+|m|)!))`` and ``P_l^m`` carrying
the Condon-Shortley phase.  4D harmonics use ``(beta, theta, phi)`` and are
indexed by ``(n, l, m)``::

    S_nl^m = c_nl sin^l(beta) C_{n-l}^{l+1}(cos beta) S_l^m(theta, phi)

Both families are orthonormal in L^2 of the unit sphere.

Everything here is evaluated with ascending three-term recurrences.  The
:class:`BasisTable` keeps the expansion in separable form (polar factor x
azimuthal factor) so that evaluating a coefficient vector on a tensor grid
never materialises the full ``nodes x P`` design matrix.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "legendre",
    "gegenbauer",
    "sph3",
    "sph4",
    "norm3",
    "norm4",
    "basis_indices",
    "basis_count",
    "BasisTable",
    "get_table",
]

_X_TOL = 1e-12


def _check_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _X_TOL):
        raise ValueError("argument outside [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def legendre(l, m, x):
    """Associated Legendre function P_l^m(x), Condon-Shortley phase included.

    Computed from P_m^m = (-1)^m (2m-1)!! (1-x^2)^(m/2) and the upward
    recurrence in degree.  Accepts scalars or arrays for ``x``.
    """
    if not 0 <= m <= l:
        raise ValueError(f"need 0 <= m <= l, got l={l}, m={m}")
    x = _check_unit_interval(x)
    s = np.sqrt((1.0 - x) * (1.0 + x))
    pmm = np.ones_like(x)
    for i in range(1, m + 1):
        pmm = -(2 * i - 1) * s * pmm
    if l == m:
        return pmm[()] if pmm.ndim == 0 else pmm
    p_prev, p = pmm, (2 * m + 1) * x * pmm
    for ll in range(m + 2, l + 1):
        p_prev, p = p, ((2 * ll - 1) * x * p - (ll + m - 1) * p_prev) / (ll - m)
    return p[()] if p.ndim == 0 else p


def gegenbauer(k, alpha, x):
    """Gegenbauer polynomial C_k^alpha(x) (generating function (1-2xt+t^2)^-alpha)."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    c_prev = np.ones_like(x)
    if k == 0:
        return c_prev[()] if c_prev.ndim == 0 else c_prev
    c = 2.0 * alpha * x
    for j in range(2, k + 1):
        c_prev, c = c, (2.0 * (j + alpha - 1) * x * c - (j + 2 * alpha - 2) * c_prev) / j
    return c[()] if c.ndim == 0 else c


def norm3(l, m):
    """Normalisation constant k_l^m."""
    m = abs(m)
    return math.sqrt((2 * l + 1) / (4 * math.pi) * math.exp(math.lgamma(l - m + 1) - math.lgamma(l + m + 1)))


def norm4(n, l, m=0):
    """Normalisation constant c_{n,l,m} (independent of ``m``)."""
    return (
        2.0 ** (l + 0.5)
        * math.sqrt((n + 1) / math.pi * math.exp(math.lgamma(n - l + 1) - math.lgamma(n + l + 2)))
        * math.gamma(l + 1)
    )


def _azimuthal(m, phi):
    if m > 0:
        return math.sqrt(2.0) * np.cos(m * phi)
    if m < 0:
        return math.sqrt(2.0) * np.sin(-m * phi)
    return np.ones_like(np.asarray(phi, dtype=float))


def sph3(l, m, theta, phi):
    """Real spherical harmonic S_l^m(theta, phi)."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid 3D index (l={l}, m={m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = norm3(l, m) * legendre(l, abs(m), np.cos(theta)) * _azimuthal(m, phi)
    return out[()] if np.ndim(out) == 0 else out


def sph4(n, l, m, beta, theta, phi):
    """Real hyperspherical harmonic S_nl^m(beta, theta, phi) on S^3."""
    if not (0 <= l <= n and abs(m) <= l):
        raise ValueError(f"invalid 4D index (n={n}, l={l}, m={m})")
    beta = np.asarray(beta, dtype=float)
    radial = norm4(n, l) * np.sin(beta) ** l * gegenbauer(n - l, l + 1.0, np.cos(beta))
    out = radial * sph3(l, m, theta, phi)
    return out[()] if np.ndim(out) == 0 else out


def basis_indices(dimension, N):
    """Flat enumeration of basis indices, lexicographic in (l, m) or (n, l, m)."""
    if dimension == 3:
        return [(l, m) for l in range(N + 1) for m in range(-l, l + 1)]
    if dimension == 4:
        return [(n, l, m) for n in range(N + 1) for l in range(n + 1) for m in range(-l, l + 1)]
    raise ValueError(f"dimension must be 3 or 4, got {dimension}")


def basis_count(dimension, N):
    if dimension == 3:
        return (N + 1) ** 2
    if dimension == 4:
        return (N + 1) * (N + 2) * (2 * N + 3) // 6
    raise ValueError(f"dimension must be 3 or 4, got {dimension}")


# --------------------------------------------------------------------------
# Vectorised factor tables.  Each returns arrays whose leading axes run over
# the degrees and whose trailing axis runs over the evaluation points.
# --------------------------------------------------------------------------


def _polar_table(N, theta):
    """Normalised k_l^m P_l^m(cos theta) and its first two theta derivatives.

    Returns three arrays of shape (N+1, N+1, npts) indexed [l, m, :] with
    zeros where m > l.
    """
    theta = np.asarray(theta, dtype=float)
    x, s = np.cos(theta), np.sin(theta)
    q = np.zeros((N + 1, N + 1, theta.size))
    q[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, N + 1):
        q[m, m] = -math.sqrt((2 * m + 1) / (2.0 * m)) * s * q[m - 1, m - 1]
    for m in range(N):
        q[m + 1, m] = math.sqrt(2 * m + 3.0) * x * q[m, m]
        for l in range(m + 2, N + 1):
            a = math.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            q[l, m] = a * (x * q[l - 1, m] - b * q[l - 2, m])

    dq = np.zeros_like(q)
    for l in range(1, N + 1):
        dq[l, 0] = math.sqrt(l * (l + 1.0)) * q[l, 1]
        for m in range(1, l + 1):
            up = math.sqrt((l - m) * (l + m + 1.0)) * q[l, m + 1] if m < l else 0.0
            dq[l, m] = 0.5 * (up - math.sqrt((l + m) * (l - m + 1.0)) * q[l, m - 1])

    # Legendre ODE: q'' = -cot q' - (l(l+1) - m^2/sin^2) q
    ll = np.arange(N + 1)[:, None, None]
    mm = np.arange(N + 1)[None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        d2q = -(x / s) * dq - (ll * (ll + 1) - mm**2 / s**2) * q
    d2q = np.where(mm <= ll, d2q, 0.0)
    return q, dq, d2q


def _gegenbauer_table(N, beta):
    """c_nl sin^l(beta) C_{n-l}^{l+1}(cos beta) and two beta derivatives.

    Arrays of shape (N+1, N+1, npts) indexed [n, l, :], zero where l > n.
    """
    beta = np.asarray(beta, dtype=float)
    x, s = np.cos(beta), np.sin(beta)
    g = np.zeros((N + 1, N + 1, beta.size))
    dg = np.zeros_like(g)
    for l in range(N + 1):
        sl = s**l
        dsl = l * s ** (l - 1) * x if l > 0 else np.zeros_like(s)
        for n in range(l, N + 1):
            c = norm4(n, l)
            poly = gegenbauer(n - l, l + 1.0, x)
            dpoly = 2.0 * (l + 1) * gegenbauer(n - l - 1, l + 2.0, x) if n > l else 0.0
            g[n, l] = c * sl * poly
            dg[n, l] = c * (dsl * poly - sl * s * dpoly)
    nn = np.arange(N + 1)[:, None, None]
    ll = np.arange(N + 1)[None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        d2g = -2.0 * (x / s) * dg - (nn * (nn + 2) - ll * (ll + 1) / s**2) * g
    d2g = np.where(ll <= nn, d2g, 0.0)
    return g, dg, d2g


def _azimuthal_table(N, phi):
    """sqrt(2)cos(m phi) / 1 / sqrt(2)sin(|m| phi) for m = -N..N and derivatives.

    Arrays of shape (2N+1, npts) indexed [m + N, :].
    """
    phi = np.asarray(phi, dtype=float)
    m = np.arange(-N, N + 1)[:, None]
    am = np.abs(m)
    c, s = np.cos(am * phi), np.sin(am * phi)
    r2 = math.sqrt(2.0)
    f = np.where(m > 0, r2 * c, np.where(m < 0, r2 * s, 1.0))
    df = np.where(m > 0, -r2 * am * s, np.where(m < 0, r2 * am * c, 0.0))
    d2f = -(am**2) * f
    return f, df, d2f


def _multi_indices(nvar, order):
    """Derivative multi-indices (counts per angle) with total order <= ``order``."""
    out = []
    for total in range(order + 1):
        out.extend(a for a in np.ndindex(*(total + 1,) * nvar) if sum(a) == total)
    return out


class BasisTable:
    """Truncated harmonic basis of degree ``N`` on S^{d-1}.

    Coefficient vectors are flat arrays ordered as :func:`basis_indices`.
    Internally they are scattered into a dense ``[l, m+N]`` (3D) or
    ``[n, l, m+N]`` (4D) array so evaluation is a chain of small tensor
    contractions.
    """

    def __init__(self, dimension, N):
        if N < 0:
            raise ValueError("truncation degree must be non-negative")
        self.dimension = dimension
        self.N = N
        self.indices = np.array(basis_indices(dimension, N), dtype=int)
        self.P = len(self.indices)
        assert self.P == basis_count(dimension, N)
        if dimension == 3:
            l, m = self.indices.T
            self.k = np.array([norm3(a, b) for a, b in zip(l, m)])
            self.c = None
            self._dense_index = (l, m + N)
            self._dense_shape = (N + 1, 2 * N + 1)
        else:
            n, l, m = self.indices.T
            self.k = np.array([norm3(a, b) for a, b in zip(l, m)])
            self.c = np.array([norm4(a, b) for a, b in zip(n, l)])
            self._dense_index = (n, l, m + N)
            self._dense_shape = (N + 1, N + 1, 2 * N + 1)
        self.indices.setflags(write=False)

    def __repr__(self):
        return f"BasisTable(dimension={self.dimension}, N={self.N}, P={self.P})"

    def dense(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.P,):
            raise ValueError(f"expected {self.P} coefficients, got shape {coeffs.shape}")
        out = np.zeros(self._dense_shape)
        out[self._dense_index] = coeffs
        return out

    def flat(self, dense):
        return np.asarray(dense)[self._dense_index]

    def _factors(self, axes):
        N = self.N
        if self.dimension == 3:
            theta, phi = axes
            return None, _polar_table(N, theta), _azimuthal_table(N, phi)
        beta, theta, phi = axes
        return _gegenbauer_table(N, beta), _polar_table(N, theta), _azimuthal_table(N, phi)

    def evaluate_grid(self, coeffs, axes, order=0):
        """Evaluate the expansion on the tensor grid spanned by ``axes``.

        Parameters
        ----------
        coeffs : (P,) array
        axes : sequence of 1D arrays, ``(theta, phi)`` or ``(beta, theta, phi)``
        order : int
            Highest total derivative order to return (0, 1 or 2).

        Returns
        -------
        dict
            Maps a multi-index tuple (derivative counts per angle) to an array
            of shape ``tuple(len(a) for a in axes)``.
        """
        a = self.dense(coeffs)
        gtab, qtab, ftab = self._factors([np.asarray(ax, dtype=float) for ax in axes])
        out = {}
        for alpha in _multi_indices(self.dimension - 1, order):
            if self.dimension == 3:
                dt, dp = alpha
                # sum_l a[l,m] q[l,|m|,j] -> [m, j]
                qm = qtab[dt][:, np.abs(np.arange(-self.N, self.N + 1)), :]
                t = np.einsum("lm,lmj->mj", a, qm)
                out[alpha] = np.einsum("mj,mk->jk", t, ftab[dp])
            else:
                db, dt, dp = alpha
                qm = qtab[dt][:, np.abs(np.arange(-self.N, self.N + 1)), :]
                t1 = np.einsum("nlm,nli->lmi", a, gtab[db])
                t2 = np.einsum("lmi,lmj->mij", t1, qm)
                out[alpha] = np.einsum("mij,mk->ijk", t2, ftab[dp])
        return out

    def project_grid(self, values, axes):
        """Adjoint of :meth:`evaluate_grid` at order 0.

        Returns the length-P vector ``sum_nodes values * S_p(node)``.
        """
        values = np.asarray(values, dtype=float)
        gtab, qtab, ftab = self._factors([np.asarray(ax, dtype=float) for ax in axes])
        qm = qtab[0][:, np.abs(np.arange(-self.N, self.N + 1)), :]
        if self.dimension == 3:
            t = np.einsum("jk,mk->mj", values, ftab[0])
            dense = np.einsum("mj,lmj->lm", t, qm)
        else:
            t2 = np.einsum("ijk,mk->mij", values, ftab[0])
            t1 = np.einsum("mij,lmj->lmi", t2, qm)
            dense = np.einsum("lmi,nli->nlm", t1, gtab[0])
        return self.flat(dense)

    def evaluate_points(self, coeffs, angles, order=0):
        """Evaluate the expansion at scattered points.

        ``angles`` has shape (npts, d-1).  Returns a dict keyed like
        :meth:`evaluate_grid`, each value of shape (npts,).
        """
        a = self.dense(coeffs)
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        gtab, qtab, ftab = self._factors(list(angles.T))
        mabs = np.abs(np.arange(-self.N, self.N + 1))
        out = {}
        for alpha in _multi_indices(self.dimension - 1, order):
            if self.dimension == 3:
                dt, dp = alpha
                t = np.einsum("lm,lmp->mp", a, qtab[dt][:, mabs, :])
            else:
                db, dt, dp = alpha
                t1 = np.einsum("nlm,nlp->lmp", a, gtab[db])
                t = np.einsum("lmp,lmp->mp", t1, qtab[dt][:, mabs, :])
            out[alpha] = np.einsum("mp,mp->p", t, ftab[dp])
        return out

    def design_matrix(self, angles):
        """Dense (npts, P) matrix of basis values; intended for small problems."""
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        gtab, qtab, ftab = self._factors(list(angles.T))
        N = self.N
        if self.dimension == 3:
            l, m = self.indices.T
            return (qtab[0][l, np.abs(m)] * ftab[0][m + N]).T
        n, l, m = self.indices.T
        return (gtab[0][n, l] * qtab[0][l, np.abs(m)] * ftab[0][m + N]).T


@lru_cache(maxsize=32)
def get_table(dimension, N):
    """Shared, immutable :class:`BasisTable` for ``(dimension, N)``."""
    return BasisTable(dimension, N)
