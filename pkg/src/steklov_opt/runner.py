"""Run orchestration: configuration, ball validation, solves and campaigns.

Every run writes into its own output directory and finishes with a
``manifest.txt`` holding the configuration, the code version and the
wall-clock time of each stage.
"""
from __future__ import annotations

import csv
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_FLOOR, Decimal
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .fileio import export_cuts4d, export_mesh3d, load_coefficients, save_coefficients, write_points
from .geometry import HarmonicCoefficients, unit_ball_volume
from .shape_opt import Discretization, OptimizerSettings, evaluate, optimize
from .sphere_points import build_collocation, nearest_neighbor_distances, sphere_seed

__all__ = [
    "MODES",
    "RunConfig",
    "ConfigError",
    "BallOracle",
    "ValidationReport",
    "read_config_file",
    "floor2",
    "run",
    "run_validate",
    "run_solve",
    "run_points",
    "run_optimize",
]

log = logging.getLogger(__name__)

MODES = ("solve", "optimize", "validate", "points")
DEFAULT_COLLOCATION = {3: 2000, 4: 8000}
DEFAULT_LADDER = {3: (200, 400, 800, 1600), 4: (500, 1000, 2000)}
TRACKED = (1, 7, 15)


class ConfigError(ValueError):
    pass


def _parse_tuple(text):
    text = str(text).strip()
    if text in ("", "none", "None"):
        return None
    return tuple(int(x) for x in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one run.

    ``collocation=None`` selects the dimension default (2000 in 3D, 8000 in
    4D).  ``start`` is ``"random"``, ``"ball"`` or a coefficient file; for
    ``solve`` and ``points`` the domain is ``coeffs`` (a coefficient file) or
    the unit-volume ball.
    """

    mode: str = "solve"
    dimension: int = 3
    k: int = 1
    N: int = 20
    collocation: int | None = None
    delta: float = 0.2
    riesz_s: float = 3.0
    riesz_iters: int = 500
    epsilon: float = 0.01
    quadrature: tuple | None = None
    mesh: tuple = (64, 128)
    max_iter: int = 150
    restarts: int = 1
    noise: float = 0.15
    seed: int = 0
    out: str = "run"
    start: str = "random"
    coeffs: str | None = None
    ladder: tuple | None = None
    tol: float = 1e-3
    method: str = "lu"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dimension not in (3, 4):
            raise ConfigError(f"dimension must be 3 or 4, got {self.dimension}")
        for name in ("k", "N", "riesz_iters", "max_iter", "restarts"):
            if getattr(self, name) < (0 if name in ("riesz_iters",) else 1):
                raise ConfigError(f"{name} must be positive")
        if self.collocation is not None and self.collocation < 4:
            raise ConfigError("collocation count must be at least 4")
        for name in ("delta", "riesz_s", "epsilon", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if self.ladder is not None and min(self.ladder) < 4:
            raise ConfigError("ladder counts must be at least 4")

    @property
    def mc(self):
        return DEFAULT_COLLOCATION[self.dimension] if self.collocation is None else self.collocation

    def discretization(self, collocation=None):
        return Discretization(
            collocation=self.mc if collocation is None else collocation,
            delta=self.delta,
            riesz_s=self.riesz_s,
            riesz_iters=self.riesz_iters,
            quadrature=self.quadrature,
            method=self.method,
        )

    def settings(self):
        return OptimizerSettings(
            k=self.k, epsilon=self.epsilon, max_iter=self.max_iter, restarts=self.restarts, noise=self.noise, seed=self.seed
        )

    @classmethod
    def from_mapping(cls, values):
        """Build from string-valued ``key=value`` pairs (CLI spellings accepted)."""
        alias = {"d": "dimension", "mc": "collocation", "eps": "epsilon", "s": "riesz_s"}
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = alias.get(key, key)
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            kind = str(types[name])
            try:
                if name in ("quadrature", "ladder", "mesh"):
                    kwargs[name] = raw if isinstance(raw, tuple) else _parse_tuple(raw)
                elif kind.startswith("int"):
                    kwargs[name] = int(raw)
                elif kind.startswith("float"):
                    kwargs[name] = float(raw)
                else:
                    kwargs[name] = None if str(raw) in ("", "none", "None") else str(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        return cls(**kwargs)

    def describe(self):
        out = asdict(self)
        out["collocation"] = self.mc
        return out


def read_config_file(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


# --------------------------------------------------------------------------
# Analytic reference
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BallOracle:
    """Steklov spectrum of the unit-volume ball: sigma = l / R.

    The eigenvalue l has multiplicity 2l+1 in 3D and (l+1)^2 in 4D.
    """

    dimension: int

    @property
    def radius(self):
        return (1.0 / unit_ball_volume(self.dimension)) ** (1.0 / self.dimension)

    def multiplicity(self, l):
        return 2 * l + 1 if self.dimension == 3 else (l + 1) ** 2

    def degree(self, k):
        """Harmonic degree l of the k-th eigenvalue (sigma_0 = 0)."""
        l, seen = 0, 1
        while seen <= k:
            l += 1
            seen += self.multiplicity(l)
        return l

    def eigenvalue(self, k):
        return self.degree(k) / self.radius

    def spectrum(self, kmax):
        return np.array([self.eigenvalue(k) for k in range(kmax + 1)])


def floor2(value):
    """Round down at two decimals, working on the decimal representation."""
    return float(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_FLOOR))


# --------------------------------------------------------------------------
# Manifest and stage timing
# --------------------------------------------------------------------------


class _Manifest:
    def __init__(self, config, outdir):
        self.config = config
        self.outdir = outdir
        self.stages = {}
        self.results = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    def write(self, status):
        lines = ["# steklov-opt run manifest", f"status={status}", f"version={__version__}"]
        lines += [f"python={platform.python_version()}", f"numpy={np.__version__}", f"scipy={scipy.__version__}"]
        for key, value in self.config.describe().items():
            lines.append(f"config.{key}={_fmt(value)}")
        for key, value in self.results.items():
            lines.append(f"result.{key}={_fmt(value)}")
        for key, value in self.stages.items():
            lines.append(f"time.{key}={value:.3f}")
        path = self.outdir / "manifest.txt"
        path.write_text("\n".join(lines) + "\n")
        return path


def _fmt(value):
    if isinstance(value, (tuple, list)):
        return " ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return "none" if value is None else str(value)


@contextmanager
def _managed(config):
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(config, outdir)
    status = "failed"
    try:
        yield manifest
        status = manifest.results.get("status", "ok")
    finally:
        # partial artifacts are kept; the manifest records how far the run got
        manifest.write(status)


def _domain(config):
    if config.coeffs:
        return load_coefficients(config.coeffs, dimension=config.dimension)
    return HarmonicCoefficients.unit_volume_ball(config.dimension, config.N)


# --------------------------------------------------------------------------
# Modes
# --------------------------------------------------------------------------


@dataclass
class ValidationReport:
    dimension: int
    tracked: tuple
    ladder: tuple
    exact: dict
    errors: dict = field(default_factory=dict)
    monotone: bool = True
    passed: bool = False

    def table(self):
        head = "M_C " + " ".join(f"err_sigma_{k:<8d}" for k in self.tracked)
        rows = [head]
        for i, m in enumerate(self.ladder):
            rows.append(f"{m:<4d}" + "".join(f" {self.errors[k][i]:.6e}  " for k in self.tracked))
        return "\n".join(rows)


def run_validate(config, floor=1e-8):
    """Errors of sigma_1, sigma_7, sigma_15 on the unit-volume ball over a ladder of M_C.

    Passes when the relative error at the largest M_C is below ``config.tol``
    for every tracked index and no error grows along the ladder by more than
    ``floor`` (the numerical floor).
    """
    oracle = BallOracle(config.dimension)
    ladder = tuple(sorted(config.ladder or DEFAULT_LADDER[config.dimension]))
    kmax = max(TRACKED)
    coeffs = HarmonicCoefficients.unit_volume_ball(config.dimension, 1)
    report = ValidationReport(config.dimension, TRACKED, ladder, {k: oracle.eigenvalue(k) for k in TRACKED})
    report.errors = {k: [] for k in TRACKED}
    with _managed(config) as manifest:
        rows = []
        for m in ladder:
            with manifest.stage(f"solve_mc{m}"):
                ev = evaluate(coeffs, kmax, config.discretization(m), fields=False)
            for k in TRACKED:
                err = abs(ev.eigenvalues[k] - report.exact[k])
                report.errors[k].append(err)
                rows.append((m, k, ev.eigenvalues[k], report.exact[k], err))
        with open(manifest.outdir / "validate.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["collocation", "k", "sigma", "exact", "abs_error"])
            w.writerows([(m, k, repr(float(s)), repr(e), repr(float(err))) for m, k, s, e, err in rows])
        report.monotone = all(
            b <= a + floor for k in TRACKED for a, b in zip(report.errors[k], report.errors[k][1:])
        )
        final_ok = all(report.errors[k][-1] / report.exact[k] <= config.tol for k in TRACKED)
        report.passed = bool(report.monotone and final_ok)
        manifest.results.update(
            {f"error_sigma_{k}": report.errors[k][-1] for k in TRACKED}
            | {"monotone": report.monotone, "status": "ok" if report.passed else "validation-failed"}
        )
    return report


def run_solve(config):
    """Eigenvalues sigma_0..sigma_k and costs C_j on one domain; writes eigenvalues.csv."""
    with _managed(config) as manifest:
        coeffs = _domain(config)
        with manifest.stage("solve"):
            ev = evaluate(coeffs, config.k, config.discretization(), fields=False)
        with open(manifest.outdir / "eigenvalues.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "sigma", "cost"])
            for j, (s, c) in enumerate(zip(ev.eigenvalues, ev.costs)):
                w.writerow([j, repr(float(s)), repr(float(c))])
        manifest.results.update({"volume": ev.volume, f"sigma_{config.k}": float(ev.eigenvalues[config.k])})
    return ev


def run_points(config):
    """Seed and Riesz-refined collocation points on one domain.

    Writes ``seed_points.txt``, ``points.txt`` (boundary points) and
    ``sources.txt``, and records the minimum pairwise distances.
    """
    with _managed(config) as manifest:
        coeffs = _domain(config)
        with manifest.stage("seed"):
            seed = build_collocation(coeffs, config.mc, s=config.riesz_s, delta=config.delta, iters=0)
        with manifest.stage("refine"):
            colloc = build_collocation(
                coeffs, config.mc, s=config.riesz_s, delta=config.delta, iters=config.riesz_iters,
                preimages=sphere_seed(config.dimension, config.mc),
            )
        write_points(seed.points, manifest.outdir / "seed_points.txt")
        write_points(colloc.points, manifest.outdir / "points.txt")
        write_points(colloc.sources, manifest.outdir / "sources.txt")
        d0 = float(nearest_neighbor_distances(seed.points).min())
        d1 = float(nearest_neighbor_distances(colloc.points).min())
        manifest.results.update({"min_distance_seed": d0, "min_distance_refined": d1, "energy": colloc.energy})
    return seed, colloc


def run_optimize(config, callback=None):
    """Max-min ascent campaign; writes the log, coefficients, summary and meshes."""
    with _managed(config) as manifest:
        outdir = manifest.outdir
        settings = config.settings()
        if config.start == "random":
            start = None
        elif config.start == "ball":
            start = HarmonicCoefficients.unit_volume_ball(config.dimension, config.N)
        else:
            start = load_coefficients(config.start, dimension=config.dimension, N=config.N)
        width = settings.max_cluster + 1
        header = ["restart", "iteration"] + [f"C_k+{i}" for i in range(width)] + ["multiplicity", "step", "volume"]
        with open(outdir / "log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)

            def record(entry):
                costs = [repr(c) for c in entry.costs] + [""] * (width - len(entry.costs))
                writer.writerow(
                    [entry.restart, entry.iteration, *costs, entry.multiplicity, repr(entry.step), repr(entry.volume)]
                )
                fh.flush()
                if callback is not None:
                    callback(entry)

            with manifest.stage("optimize"):
                result = optimize(
                    settings, config.discretization(), dimension=config.dimension, N=config.N, start=start,
                    callback=record,
                )
        save_coefficients(result.coeffs, outdir / "optimum.coeffs")
        value = result.value
        summary = {
            "k": config.k,
            "value": value,
            "reported": floor2(value),
            "multiplicity": result.multiplicity,
            "stop_reason": result.best.stop_reason,
            "iterations": result.best.iteration,
        }
        (outdir / "summary.txt").write_text("".join(f"{k}={_fmt(v)}\n" for k, v in summary.items()))
        with manifest.stage("export"):
            if config.dimension == 3:
                export_mesh3d(result.coeffs, config.mesh, outdir / "optimum.obj")
            else:
                export_cuts4d(result.coeffs, config.mesh, outdir / "optimum")
        for key, t in result.timings.items():
            manifest.stages[f"optimize.{key}"] = t
        manifest.results.update(summary)
    return result


def run(config):
    """Dispatch on ``config.mode``; returns the mode's result object."""
    return {"validate": run_validate, "solve": run_solve, "points": run_points, "optimize": run_optimize}[config.mode](
        config
    )
