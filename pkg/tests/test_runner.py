import csv
import math

import numpy as np
import pytest

from steklov_opt.cli import EXIT_ERROR, EXIT_VALIDATION, main
from steklov_opt.fileio import load_coefficients, read_obj, read_points, save_coefficients
from steklov_opt.geometry import HarmonicCoefficients, volume
from steklov_opt.runner import (
    BallOracle,
    ConfigError,
    RunConfig,
    floor2,
    read_config_file,
    run,
)


def manifest(path):
    return dict(line.split("=", 1) for line in (path / "manifest.txt").read_text().splitlines() if "=" in line)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def test_defaults():
    c = RunConfig()
    assert (c.k, c.N, c.delta, c.epsilon, c.riesz_s, c.riesz_iters, c.max_iter) == (1, 20, 0.2, 0.01, 3.0, 500, 150)
    assert c.mc == 2000
    assert RunConfig(dimension=4).mc == 8000
    assert c.mesh == (64, 128)


@pytest.mark.parametrize(
    "kwargs",
    [{"mode": "plot"}, {"dimension": 5}, {"k": 0}, {"N": 0}, {"collocation": 2}, {"delta": 0.0}, {"epsilon": -1.0}],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_config_file_and_aliases(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# campaign\nd = 4\nk=2   # target\nmc=500\neps = 0.02\nquadrature = 8 8 16\n\n")
    c = RunConfig.from_mapping(read_config_file(path))
    assert (c.dimension, c.k, c.mc, c.epsilon, c.quadrature) == (4, 2, 500, 0.02, (8, 8, 16))


def test_config_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("k=1\nnot a pair\n")
    with pytest.raises(ConfigError, match="line 2"):
        read_config_file(path)
    with pytest.raises(ConfigError, match="unknown config key"):
        RunConfig.from_mapping({"colour": "red"})
    with pytest.raises(ConfigError, match="bad value for k"):
        RunConfig.from_mapping({"k": "two"})


# --------------------------------------------------------------------------
# analytic reference and rounding
# --------------------------------------------------------------------------


def test_ball_oracle_3d():
    o = BallOracle(3)
    assert o.radius == pytest.approx((3 / (4 * math.pi)) ** (1 / 3))
    assert [o.degree(k) for k in (0, 1, 3, 4, 8, 9, 15, 16)] == [0, 1, 1, 2, 2, 3, 3, 4]
    assert o.eigenvalue(15) == pytest.approx(3 / o.radius) == pytest.approx(4.8360, abs=1e-4)
    assert o.spectrum(3) == pytest.approx([0, 1 / o.radius, 1 / o.radius, 1 / o.radius])


def test_ball_oracle_4d():
    o = BallOracle(4)
    assert o.radius == pytest.approx((2 / math.pi**2) ** 0.25)
    assert [o.multiplicity(l) for l in (1, 2, 3)] == [4, 9, 16]
    assert [o.degree(k) for k in (1, 4, 5, 13, 14)] == [1, 1, 2, 2, 3]
    assert o.eigenvalue(1) == pytest.approx((math.pi**2 / 2) ** 0.25)


@pytest.mark.parametrize(
    "value, expected", [(1.61205, 1.61), (2.0, 2.0), (2.999999999, 2.99), (0.07, 0.07), (3.229999, 3.22)]
)
def test_floor2(value, expected):
    assert floor2(value) == expected


# --------------------------------------------------------------------------
# modes
# --------------------------------------------------------------------------


def test_solve_writes_eigenvalues(tmp_path):
    cfg = RunConfig(mode="solve", k=4, N=2, collocation=400, riesz_iters=100, out=str(tmp_path))
    ev = run(cfg)
    rows = list(csv.DictReader(open(tmp_path / "eigenvalues.csv")))
    assert [int(r["j"]) for r in rows] == list(range(5))
    assert float(rows[1]["sigma"]) == ev.eigenvalues[1]
    m = manifest(tmp_path)
    assert m["status"] == "ok" and m["config.collocation"] == "400"
    assert float(m["result.volume"]) == pytest.approx(1.0, abs=1e-12)
    assert "time.solve" in m


def test_solve_on_coefficient_file(tmp_path):
    c = HarmonicCoefficients.ball(3, 2, 2.0)
    path = save_coefficients(c, tmp_path / "b.coeffs")
    ev = run(RunConfig(mode="solve", k=1, collocation=300, riesz_iters=50, coeffs=str(path), out=str(tmp_path / "o")))
    assert ev.eigenvalues[1] == pytest.approx(0.5, abs=1e-3)


def test_points_mode(tmp_path):
    cfg = RunConfig(mode="points", N=3, collocation=300, riesz_iters=200, out=str(tmp_path))
    seed, colloc = run(cfg)
    pts = read_points(tmp_path / "points.txt")
    assert pts.shape == (300, 3) and np.array_equal(pts, colloc.points)
    assert read_points(tmp_path / "sources.txt").shape == (300, 3)
    m = manifest(tmp_path)
    assert float(m["result.min_distance_refined"]) > float(m["result.min_distance_seed"])


def test_validate_reports_pass_and_fail(tmp_path):
    good = run(RunConfig(mode="validate", ladder=(200, 400, 800), riesz_iters=300, tol=0.05, out=str(tmp_path / "a")))
    assert good.monotone and good.passed
    rows = list(csv.DictReader(open(tmp_path / "a" / "validate.csv")))
    assert len(rows) == 9
    assert "M_C" in good.table()
    strict = run(RunConfig(mode="validate", ladder=(200, 400), riesz_iters=300, tol=1e-6, out=str(tmp_path / "b")))
    assert not strict.passed
    assert manifest(tmp_path / "b")["status"] == "validation-failed"


def test_optimize_artifacts_3d(tmp_path):
    cfg = RunConfig(mode="optimize", k=1, N=3, collocation=200, riesz_iters=50, max_iter=2, seed=4, out=str(tmp_path),
                    mesh=(8, 16))
    res = run(cfg)
    with open(tmp_path / "log.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:3] == ["restart", "iteration", "C_k+0"]
    assert header[-3:] == ["multiplicity", "step", "volume"]
    coeffs = load_coefficients(tmp_path / "optimum.coeffs")
    assert coeffs == res.coeffs
    assert volume(coeffs) == pytest.approx(1.0, abs=1e-10)
    verts, faces = read_obj(tmp_path / "optimum.obj")
    assert len(verts) == 6 * 16 + 2
    summary = dict(ln.split("=") for ln in (tmp_path / "summary.txt").read_text().splitlines())
    assert float(summary["value"]) == res.value
    assert float(summary["reported"]) == floor2(res.value)
    assert manifest(tmp_path)["status"] == "ok"


def test_optimize_artifacts_4d(tmp_path):
    cfg = RunConfig(mode="optimize", dimension=4, k=1, N=2, collocation=1000, riesz_iters=30, max_iter=1, start="ball",
                    out=str(tmp_path), mesh=(8, 16))
    run(cfg)
    assert sorted(p.name for p in tmp_path.glob("*.obj")) == [f"optimum_cut_{a}.obj" for a in "wxyz"]


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------


def test_cli_solve(tmp_path, capsys):
    assert main(["solve", "--k", "2", "--N", "2", "--mc", "300", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "sigma_2" in out


def test_cli_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k=3\nmc=250\nriesz_iters=20\n")
    assert main(["solve", "--config", str(cfg), "--k", "1", "--out", str(tmp_path / "o")]) == 0
    m = manifest(tmp_path / "o")
    assert m["config.k"] == "1" and m["config.collocation"] == "250" and m["config.riesz_iters"] == "20"


def test_cli_validation_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "v.cfg"
    cfg.write_text("ladder=100 200\ntol=1e-9\nriesz_iters=50\n")
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "FAIL" in capsys.readouterr().out


def test_cli_bad_input_exit_code(tmp_path, capsys):
    assert main(["solve", "--k", "0", "--out", str(tmp_path)]) == EXIT_ERROR
    bad = tmp_path / "x.coeffs"
    bad.write_text("nonsense\n")
    assert main(["solve", "--coeffs", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "line 1" in capsys.readouterr().err


def test_cli_invalid_domain_exit_code(tmp_path):
    c = HarmonicCoefficients.ball(3, 1)
    v = c.values.copy()
    v[2] = 5.0
    path = save_coefficients(c.with_values(v), tmp_path / "neg.coeffs")
    assert main(["solve", "--coeffs", str(path), "--mc", "100", "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert manifest(tmp_path / "o")["status"] == "failed"


def test_cli_optimize_is_deterministic(tmp_path):
    args = ["optimize", "--N", "3", "--mc", "200", "--max-iter", "2", "--seed", "9"]
    cfg = tmp_path / "c.cfg"
    cfg.write_text("riesz_iters=40\nmesh=6 8\n")
    assert main(args + ["--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "optimum.coeffs").read_text() == (tmp_path / "b" / "optimum.coeffs").read_text()
    assert (tmp_path / "a" / "log.csv").read_text() == (tmp_path / "b" / "log.csv").read_text()
