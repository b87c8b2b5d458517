import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bregcal.cli import EXIT_INPUT, EXIT_UNSUPPORTED, EXIT_USAGE, main
from bregcal.entropy import get_generator
from bregcal.estimate import bc_estimate
from bregcal.simkit import Scenario, gen_population
from bregcal.solver import CalibrationProblem, Scale


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


@pytest.fixture
def frame(tmp_path):
    pop = gen_population(Scenario("or0", "ps0", N=800, seed=3))
    ids = [f"u{i}" for i in range(pop.N)]
    cols = ["x1", "x2", "x3", "x4"]
    popf = _write(tmp_path / "pop.csv", ["id", *cols, "delta"],
                  [(ids[i], *map(float, pop.X[i]), int(pop.delta[i])) for i in range(pop.N)])
    r = np.flatnonzero(pop.delta)
    resp = _write(tmp_path / "resp.csv", ["id", "y", *cols, "pi"],
                  [(ids[i], float(pop.y[i]), *map(float, pop.X[i]), float(pop.pi[i]))
                   for i in r])
    return pop, popf, resp, tmp_path


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_calibrate_outputs(frame):
    pop, popf, resp, tmp = frame
    out = tmp / "w.csv"
    assert main(["calibrate", "--respondents", str(resp), "--population", str(popf),
                 "--generator", "el", "--out", str(out)]) == 0
    rows = _read(out)
    w = np.array([float(r["weight"]) for r in rows])
    r = pop.delta == 1
    X = np.column_stack([np.ones(r.sum()), pop.X[r]])
    np.testing.assert_allclose(X.T @ w / w.size, np.r_[1.0, pop.X.mean(axis=0)], atol=1e-9)
    diag = json.loads((tmp / "w.csv.json").read_text())
    assert diag["converged"] and diag["generator"] == "el"
    man = json.loads((tmp / "w.csv.manifest.json").read_text())
    assert man["command"] == "calibrate" and "kernel_backend" in man


def test_kl_bc_and_ds_runs_agree(frame):
    _, popf, resp, tmp = frame
    base = ["calibrate", "--respondents", str(resp), "--population", str(popf),
            "--generator", "kl"]
    assert main(base + ["--out", str(tmp / "bc.csv")]) == 0
    assert main(base + ["--method", "ds", "--out", str(tmp / "ds.csv")]) == 0
    a = np.array([float(r["weight"]) for r in _read(tmp / "bc.csv")])
    b = np.array([float(r["weight"]) for r in _read(tmp / "ds.csv")])
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_calibrated_baseline_is_returned_unchanged(tmp_path):
    resp = _write(tmp_path / "r.csv", ["id", "x", "w0"], [("a", 1.0, 2.0), ("b", 3.0, 2.0)])
    targ = _write(tmp_path / "t.csv", ["x"], [(8.0,)])
    out = tmp_path / "w.csv"
    assert main(["calibrate", "--respondents", str(resp), "--targets", str(targ),
                 "--N", "4", "--scale", "total", "--out", str(out)]) == 0
    rows = _read(out)
    assert [float(r["weight"]) for r in rows] == [float(r["w0"]) for r in rows] == [2.0, 2.0]


def test_estimate_matches_library(frame, capsys):
    pop, popf, resp, tmp = frame
    out = tmp / "est.json"
    assert main(["estimate", "--respondents", str(resp), "--population", str(popf),
                 "--generator", "hd", "--variance", "eta", "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    r = pop.delta == 1
    X = np.column_stack([np.ones(r.sum()), pop.X[r]])
    Xpop = np.column_stack([np.ones(pop.N), pop.X])
    prob = CalibrationProblem(X, (r.sum() / pop.N) / pop.pi[r], Xpop.mean(axis=0),
                              Scale.MEAN, pop.N)
    assert rec["value"] == bc_estimate(get_generator("hd"), prob, pop.y[r])
    assert rec["ci"][0] <= rec["value"] <= rec["ci"][1]
    assert rec["variance_method"] == "eta"


@pytest.mark.parametrize("variance", ["design", "sample-only"])
def test_estimate_variance_methods(frame, variance):
    _, popf, resp, tmp = frame
    out = tmp / "e.json"
    assert main(["estimate", "--respondents", str(resp), "--population", str(popf),
                 "--variance", variance, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["variance"] > 0


def test_census_estimate_is_population_mean(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    y = 1 + x + rng.normal(size=30)
    ids = [str(i) for i in range(30)]
    resp = _write(tmp_path / "r.csv", ["id", "y", "x", "pi"],
                  [(ids[i], float(y[i]), float(x[i]), 1.0) for i in range(30)])
    popf = _write(tmp_path / "p.csv", ["id", "x", "delta"],
                  [(ids[i], float(x[i]), 1) for i in range(30)])
    out = tmp_path / "e.json"
    assert main(["estimate", "--respondents", str(resp), "--population", str(popf),
                 "--generator", "el", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["value"] == pytest.approx(y.mean(), abs=1e-12)


def test_crossfit_and_soft_paths(frame):
    _, popf, resp, tmp = frame
    out = tmp / "e.json"
    assert main(["estimate", "--respondents", str(resp), "--population", str(popf),
                 "--pi", "crossfit", "--learner", "spline", "--out", str(out)]) == 0
    assert np.isfinite(json.loads(out.read_text())["value"])
    w = tmp / "soft.csv"
    assert main(["calibrate", "--respondents", str(resp), "--population", str(popf),
                 "--soft", "--q", "2", "--tau", "auto", "--generator", "el",
                 "--out", str(w), "--curve", str(tmp / "curve.csv")]) == 0
    diag = json.loads((tmp / "soft.csv.json").read_text())
    assert diag["kkt_gap"] <= 1e-6
    assert len(_read(tmp / "curve.csv")) == 20


def test_eta_without_population(frame, tmp_path, capsys):
    pop, _, resp, _ = frame
    targ = _write(tmp_path / "t.csv", ["x1", "x2", "x3", "x4"], [tuple(map(float, pop.X.mean(axis=0)))])
    code = main(["estimate", "--respondents", str(resp), "--targets", str(targ),
                 "--N", str(pop.N), "--variance", "eta"])
    assert code == EXIT_UNSUPPORTED
    assert _err(capsys)["error"] == "UnsupportedWithoutFrame"


def test_schema_errors_name_the_column(tmp_path, capsys):
    resp = _write(tmp_path / "r.csv", ["id", "y", "x", "pi"],
                  [("a", 1.0, "oops", 0.5), ("b", 2.0, 1.0, 0.5)])
    targ = _write(tmp_path / "t.csv", ["x"], [(1.0,)])
    code = main(["estimate", "--respondents", str(resp), "--targets", str(targ),
                 "--N", "4"])
    assert code == EXIT_INPUT
    err = _err(capsys)
    assert err["column"] == "x" and "non-numeric" in err["message"]
    resp2 = _write(tmp_path / "r2.csv", ["id", "x", "pi"], [("a", 1.0, 0.5)])
    assert main(["estimate", "--respondents", str(resp2), "--targets", str(targ),
                 "--N", "4"]) == EXIT_INPUT
    assert _err(capsys)["column"] == "y"


def test_usage_errors_are_json(capsys):
    assert main(["calibrate"]) == EXIT_USAGE
    assert _err(capsys)["error"] == "UsageError"


def test_solver_error_reports_unit(tmp_path, capsys):
    resp = _write(tmp_path / "r.csv", ["id", "x", "w0"], [("a", 1.0, 1.0), ("b", 2.0, -1.0)])
    targ = _write(tmp_path / "t.csv", ["x"], [(3.0,)])
    code = main(["calibrate", "--respondents", str(resp), "--targets", str(targ),
                 "--N", "2", "--scale", "total", "--generator", "el",
                 "--out", str(tmp_path / "w.csv")])
    assert code != 0
    assert "error" in _err(capsys)


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--study", "1", "--cells", "ps0-or0", "--learners", "glm",
            "--N", "400", "--B", "4", "--quiet"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.csv").read_text()
    assert a == (tmp_path / "b" / "report.csv").read_text()
    assert len(a.splitlines()) == 1 + 6
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config"]["N"] == 400 and man["config"]["cells"] == ["ps0-or0"]


def test_simulate_config_file_and_full_scale(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('study = 2\nN = 400\np = 6\nB = 2\ngenerators = ["el"]\n'
                   'tau_grid = "1e-3,1e-2"\nquiet = true\n')
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "tau_curves.csv").exists()
    from bregcal.cli import parse_args
    args = parse_args(["simulate", "--study", "1", "--full-scale"])
    assert args.full_scale
    bad = tmp_path / "bad.toml"
    bad.write_text("study = 1\nbogus = 3\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_INPUT


def test_full_scale_flag_switches_config(monkeypatch, tmp_path):
    import bregcal.cli as cli
    seen = []
    monkeypatch.setattr(cli, "run_study1", lambda cfg: seen.append(cfg) or [])
    assert main(["simulate", "--study", "1", "--full-scale", "--quiet",
                 "--out-dir", str(tmp_path)]) == 0
    assert seen[0].N == 10000 and seen[0].B == 500


def test_conjugate_check_command():
    out = subprocess.run([sys.executable, "-m", "bregcal.cli", "conjugate-check"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.count("PASS") == 9
