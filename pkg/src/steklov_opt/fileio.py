"""Text formats: coefficient files, point clouds and Wavefront-style meshes."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .geometry import HarmonicCoefficients, InvalidDomainError, sphere_map, to_angles
from .harmonics import basis_indices

__all__ = [
    "CoefficientFormatError",
    "save_coefficients",
    "load_coefficients",
    "write_points",
    "read_points",
    "sphere_grid_mesh",
    "radial_mesh",
    "mesh_volume",
    "write_obj",
    "read_obj",
    "export_mesh3d",
    "export_cuts4d",
    "CUT_AXES",
]

_HEADER = re.compile(r"^steklov-coeffs v1 d=(\d+) N=(\d+)$")
MESH_RESOLUTION = (64, 128)
CUT_AXES = "xyzw"


class CoefficientFormatError(ValueError):
    """Malformed coefficient file; the message names the offending line."""


# --------------------------------------------------------------------------
# Coefficients
# --------------------------------------------------------------------------


def save_coefficients(coeffs, path):
    """Write ``coeffs`` as ``steklov-coeffs v1``.

    Values are written with :func:`repr`, the shortest string that parses
    back to the same double, so a save/load round trip is bit-exact.
    """
    lines = [f"steklov-coeffs v1 d={coeffs.dimension} N={coeffs.N}"]
    for idx, value in zip(coeffs.table.indices, coeffs.values):
        lines.append(" ".join(str(int(i)) for i in idx) + " " + repr(float(value)))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def load_coefficients(path, dimension=None, N=None):
    """Read a ``steklov-coeffs v1`` file.

    Parameters
    ----------
    path : path-like
    dimension, N : int, optional
        Expected dimension and truncation; a mismatch raises
        :class:`CoefficientFormatError`.

    Notes
    -----
    The radius is not checked for positivity here; an invalid domain is
    reported by the first geometric evaluation.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise CoefficientFormatError(f"{path}: line 1: empty file, expected header")
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise CoefficientFormatError(f"{path}: line 1: bad header {lines[0]!r}")
    d, n = int(m.group(1)), int(m.group(2))
    if d not in (3, 4):
        raise CoefficientFormatError(f"{path}: line 1: dimension must be 3 or 4, got {d}")
    if dimension is not None and d != dimension:
        raise CoefficientFormatError(f"{path}: dimension mismatch: file has d={d}, expected {dimension}")
    if N is not None and n != N:
        raise CoefficientFormatError(f"{path}: truncation mismatch: file has N={n}, expected {N}")

    expected = basis_indices(d, n)
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    values = np.empty(len(expected))
    for p, idx in enumerate(expected):
        if p >= len(body):
            raise CoefficientFormatError(
                f"{path}: line {len(lines) + 1}: file ends after {p} of {len(expected)} coefficients"
            )
        lineno, text = body[p]
        fields = text.split()
        if len(fields) != d:
            raise CoefficientFormatError(f"{path}: line {lineno}: expected {d} fields, got {len(fields)}")
        try:
            got = tuple(int(f) for f in fields[:-1])
            values[p] = float(fields[-1])
        except ValueError as exc:
            raise CoefficientFormatError(f"{path}: line {lineno}: {exc}") from None
        if got != tuple(int(i) for i in idx):
            raise CoefficientFormatError(f"{path}: line {lineno}: index {got} out of order, expected {tuple(idx)}")
    if len(body) > len(expected):
        raise CoefficientFormatError(f"{path}: line {body[len(expected)][0]}: unexpected extra data")
    return HarmonicCoefficients(d, n, values)


# --------------------------------------------------------------------------
# Point clouds
# --------------------------------------------------------------------------


def write_points(points, path):
    """One point per line, whitespace separated, full double precision."""
    np.savetxt(path, np.asarray(points, dtype=float), fmt="%.17g")
    return Path(path)


def read_points(path):
    return np.loadtxt(path, ndmin=2)


# --------------------------------------------------------------------------
# Meshes
# --------------------------------------------------------------------------


def sphere_grid_mesh(rows, cols):
    """Unit-sphere triangulation from a (theta, phi) grid.

    ``rows`` polar rows include both poles, which collapse to single vertices,
    so there are ``(rows - 2) * cols + 2`` vertices.  Faces are
    counterclockwise seen from outside.  Returns ``(directions, faces)`` with
    0-based face indices.
    """
    if rows < 3 or cols < 3:
        raise ValueError("mesh grid needs at least 3 rows and 3 columns")
    theta = np.linspace(0.0, np.pi, rows)[1:-1]
    phi = 2 * np.pi * np.arange(cols) / cols
    T, F = np.meshgrid(theta, phi, indexing="ij")
    ring = np.stack([np.sin(T) * np.cos(F), np.sin(T) * np.sin(F), np.cos(T)], axis=-1).reshape(-1, 3)
    dirs = np.vstack([[0.0, 0.0, 1.0], ring, [0.0, 0.0, -1.0]])
    south = len(dirs) - 1

    def vid(i, j):
        return 1 + i * cols + (j % cols)

    faces = []
    for j in range(cols):
        faces.append((0, vid(0, j), vid(0, j + 1)))
    for i in range(rows - 3):
        for j in range(cols):
            a, b, c, e = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, e))
    for j in range(cols):
        faces.append((south, vid(rows - 3, j + 1), vid(rows - 3, j)))
    return dirs, np.array(faces, dtype=np.int64)


def radial_mesh(radius_fn, resolution=MESH_RESOLUTION):
    """Mesh of the star-shaped surface ``r(u) u`` over the unit 2-sphere."""
    rows, cols = resolution
    dirs, faces = sphere_grid_mesh(rows, cols)
    r = np.asarray(radius_fn(dirs), dtype=float)
    if not np.all(r > 0):
        raise InvalidDomainError("radius not positive on the mesh grid")
    return r[:, None] * dirs, faces


def mesh_volume(vertices, faces):
    """Enclosed volume from the signed tetrahedra (origin, a, b, c)."""
    a, b, c = (vertices[faces[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def write_obj(vertices, faces, path, name=None):
    lines = [f"o {name}"] if name else []
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def export_mesh3d(coeffs, resolution, path):
    """Write the boundary of a 3D domain as an OBJ-style triangle mesh."""
    if coeffs.dimension != 3:
        raise ValueError("export_mesh3d needs a 3D domain")
    resolution = MESH_RESOLUTION if resolution is None else resolution
    verts, faces = radial_mesh(lambda u: coeffs.radius(to_angles(u)), resolution)
    return write_obj(verts, faces, path, name="boundary")


def _cut_radius(coeffs, axis):
    keep = [i for i in range(4) if i != axis]

    def radius(u):
        xi = np.zeros((len(u), 4))
        xi[:, keep] = u
        return coeffs.radius(to_angles(xi))

    return radius


def export_cuts4d(coeffs, resolution, path):
    """Write the four coordinate-hyperplane cuts of a 4D domain.

    The cut by ``{x_i = 0}`` is the 2-sphere of directions in that hyperplane
    scaled by the radius, with the remaining coordinates in their natural
    order.  ``path`` is a directory or a file stem; files are named
    ``<stem>_cut_<axis>.obj``.  Returns the four paths.
    """
    if coeffs.dimension != 4:
        raise ValueError("export_cuts4d needs a 4D domain")
    resolution = MESH_RESOLUTION if resolution is None else resolution
    path = Path(path)
    if path.is_dir():
        stem = path / "domain"
    else:
        stem = path.with_suffix("")
    out = []
    for axis, label in enumerate(CUT_AXES):
        verts, faces = radial_mesh(_cut_radius(coeffs, axis), resolution)
        # a star-shaped domain around the origin always meets every hyperplane
        assert len(verts) > 0 and np.all(np.isfinite(verts)), "empty cut"
        out.append(write_obj(verts, faces, f"{stem}_cut_{label}.obj", name=f"cut_{label}"))
    return out


def read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(verts), np.array(faces, dtype=np.int64)

