import csv
import dataclasses
import json
import subprocess
import sys
from importlib.resources import files

import numpy as np
import pytest

from mvnbias import cli, corrected_fit, fuller_data, models, simple_eiv

from conftest import FULLER_BCE, FULLER_BIAS, FULLER_MLE, FULLER_SE

FULLER = str(files("mvnbias").joinpath("data/fuller.csv"))


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_fit_json_matches_reference_values(tmp_path):
    out = tmp_path / "report.json"
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER, "--out", out) == 0
    rep = json.loads(out.read_text())
    params = rep["parameters"]
    assert [p["name"] for p in params] == ["alpha", "beta", "mu_x", "sigma_x2", "sigma2"]
    np.testing.assert_allclose([p["mle"] for p in params], FULLER_MLE, atol=1e-3)
    np.testing.assert_allclose([p["bias"] for p in params], FULLER_BIAS, atol=1e-3)
    np.testing.assert_allclose([p["bce"] for p in params], FULLER_BCE, atol=1e-3)
    np.testing.assert_allclose([p["se"] for p in params], FULLER_SE, atol=1e-2)
    assert rep["converged"] and rep["n"] == 11


def test_json_numbers_round_trip_exactly(tmp_path):
    out = tmp_path / "report.json"
    run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER, "--out", out)
    rep = json.loads(out.read_text())
    result, report = corrected_fit(simple_eiv(57), fuller_data())
    assert [p["mle"] for p in rep["parameters"]] == result.theta_hat.tolist()
    assert [p["bce"] for p in rep["parameters"]] == report.theta_corrected.tolist()
    assert [p["se"] for p in rep["parameters"]] == result.std_errors.tolist()
    assert rep["loglik"] == result.loglik


def test_fit_text_has_four_decimals(capsys):
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER) == 0
    text = capsys.readouterr().out
    assert "alpha         66.8606    11.7272    -2.5334    69.3939" in text
    assert "mu_x          70.6364     5.0194     0.0000    70.6364" in text
    assert "sigma2        38.4058    20.9357   -10.3344    48.7402" in text


def test_fit_csv_output(tmp_path):
    out = tmp_path / "r.csv"
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER, "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[1]["parameter"] == "beta" and float(rows[1]["bce"]) == pytest.approx(0.3973, abs=1e-4)


def test_emit_plot(tmp_path):
    svg = tmp_path / "fig.svg"
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER, "--out", tmp_path / "r.json", "--emit-plot", svg) == 0
    assert svg.read_text().startswith("<svg")
    rows = list(csv.DictReader((tmp_path / "fig.csv").open()))
    assert sum(r["kind"] == "point" for r in rows) == 11

    def line(kind):
        (x0, y0), (x1, y1) = [(float(r["x"]), float(r["y"])) for r in rows if r["kind"] == kind]
        slope = (y1 - y0) / (x1 - x0)
        return slope, y0 - slope * x0

    mle_slope, mle_icpt = line("mle_line")
    bce_slope, bce_icpt = line("bce_line")
    assert bce_slope < mle_slope and bce_icpt > mle_icpt
    assert mle_slope == pytest.approx(0.4331, abs=1e-4)
    # identical inputs give identical files
    first = svg.read_bytes(), (tmp_path / "fig.csv").read_bytes()
    run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER, "--out", tmp_path / "r.json", "--emit-plot", svg)
    assert (svg.read_bytes(), (tmp_path / "fig.csv").read_bytes()) == first


def test_non_numeric_cell_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("Y,X\n86,70\n115,n/a\n90,53\n")
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", bad) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "'X'" in err and "n/a" in err


@pytest.mark.parametrize(
    "content, fragment",
    [("Y\n1\n2\n", "missing column"), ("", "header row"), ("Y,X\n1,2,3\n", "fields"), ("Y,X\n", "no data")],
)
def test_malformed_tables_exit_2(tmp_path, capsys, content, fragment):
    path = tmp_path / "t.csv"
    path.write_text(content)
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", path) == 2
    assert fragment in capsys.readouterr().err


def test_bad_constants_exit_2(capsys):
    assert run("fit", "--model", "eiv", "--data", FULLER) == 2
    assert run("fit", "--model", "eiv", "--const", "sigma_u2", "--data", FULLER) == 2
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=-3", "--data", FULLER) == 2
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", "/nonexistent.csv") == 2


def test_no_convergence_exit_3(capsys):
    assert run("fit", "--model", "eiv", "--const", "sigma_u2=500", "--data", FULLER) == 3
    assert "no convergence" in capsys.readouterr().err


def test_singular_information_exit_4(tmp_path, capsys):
    # a constant covariate at 0 makes the exponent unidentified
    path = tmp_path / "flat.csv"
    path.write_text("Y,X\n" + "".join(f"{y},0\n" for y in (-1.0, 0.5, 2.0, 1.5, -0.3)))
    assert run("fit", "--model", "uninl", "--data", path) == 4
    assert "singular" in capsys.readouterr().err


def test_uninl_fit(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 30)
    y = 2 * np.exp(-0.5 * x) + 0.05 * rng.normal(size=30)
    path = tmp_path / "exp.csv"
    path.write_text("X,Y\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(x.tolist(), y.tolist())))
    out = tmp_path / "r.json"
    assert run("fit", "--model", "uninl", "--data", path, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["parameters"][2]["bias"] == pytest.approx(-2 * rep["parameters"][2]["mle"] / 30, rel=1e-10)


def test_plot_only_for_eiv(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("Y,X,z\n1,2,0.1\n2,3,0.2\n")
    assert run("fit", "--model", "eiv-hetero", "--const", "sigma_u2=1", "--data", path, "--emit-plot", tmp_path / "p.svg") == 2


def design_file(tmp_path, **kw):
    cfg = {
        "model": "eiv",
        "theta_true": [67, 0.42, 70, 247, 43],
        "constants": {"sigma_u2": 57},
        "sample_sizes": [15, 25, 35, 50, 100],
        "replications": 30,
        "seed": 42,
    }
    cfg.update(kw)
    path = tmp_path / "design.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_writes_table(tmp_path):
    cfg = design_file(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("simulate", "--config", cfg, "--out", a) == 0
    assert run("simulate", "--config", cfg, "--out", b, "--workers", 3) == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 51 and lines[0] == "n,parameter,estimator,rel_bias,rmse,mc_std_error,n_failed"
    assert a.read_bytes() == b.read_bytes()


def test_simulate_text_format(tmp_path, capsys):
    assert run("simulate", "--config", design_file(tmp_path, sample_sizes=[25]), "--format", "text") == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["n", "parameter", "estimator", "rel_bias", "sqrt_mse", "mc_se", "failed"]
    assert len(out) == 11


def test_simulate_failure_ceiling_exit_5(tmp_path):
    cfg = design_file(tmp_path, theta_true=[0, 1, 0, 0.05, 1], constants={"sigma_u2": 20}, sample_sizes=[10])
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o.csv") == 5


def test_simulate_bad_design_exit_2(tmp_path):
    assert run("simulate", "--config", design_file(tmp_path, replications=0)) == 2
    (tmp_path / "broken.json").write_text("{")
    assert run("simulate", "--config", tmp_path / "broken.json") == 2


def test_check_derivs_eiv(capsys):
    assert run("check-derivs", "--model", "eiv", "--const", "sigma_u2=57", "--theta", "67,0.42,70,247,43") == 0
    out = capsys.readouterr().out
    assert "score vs FD" in out and "all derivative checks passed" in out


def test_check_derivs_hetero_with_z_file(tmp_path):
    z = np.random.default_rng(3).uniform(-1, 1, 12)
    path = tmp_path / "z.csv"
    path.write_text("z\n" + "".join(f"{v!r}\n" for v in z.tolist()))
    theta = "1,0.5,0.3,2,1.5,0.8,-0.4"
    assert run("check-derivs", "--model", "eiv-hetero", "--const", "sigma_u2=1", "--theta", theta, "--z-file", path) == 0
    assert run("check-derivs", "--model", "eiv-hetero", "--theta", theta) == 0


def test_check_derivs_corrupted_bundle_exit_6(monkeypatch, capsys):
    real = models.builtin

    def corrupted(name, constants=None):
        spec = real(name, constants)
        first = spec.first_derivs

        def bad_first(theta, data):
            a, C = first(theta, data)
            C = C.copy()
            C[3] *= 1.01
            return a, C

        return dataclasses.replace(spec, first_derivs=bad_first)

    monkeypatch.setattr(models, "builtin", corrupted)
    assert run("check-derivs", "--model", "eiv", "--const", "sigma_u2=57", "--theta", "67,0.42,70,247,43") == 6
    out = capsys.readouterr().out
    assert "FAIL derivative C" in out and "sigma_x2" in out


def test_check_derivs_bad_theta_exit_2():
    assert run("check-derivs", "--model", "eiv", "--const", "sigma_u2=1", "--theta", "1,2,3") == 2
    assert run("check-derivs", "--model", "eiv", "--const", "sigma_u2=1", "--theta", "1,2,3,-1,1") == 2
    assert run("check-derivs", "--model", "eiv", "--const", "sigma_u2=1", "--theta", "1,a,3,1,1") == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mvnbias", "fit", "--model", "eiv", "--const", "sigma_u2=57", "--data", FULLER, "--format", "json"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["parameters"][0]["name"] == "alpha"
