import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from hipid.cli import main
from hipid.io import read_numeric_table, read_series, read_table, write_series
from hipid.model import DataSeries

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def setup(tmp_path, name, **edits):
    doc = json.loads((CONFIGS / name).read_text())
    doc.update(edits)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(Path(path).read_text())


def test_simulate_appendix(tmp_path):
    cfg = setup(tmp_path, "appendix.json")
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    d = read_series(tmp_path / "data.csv")
    np.testing.assert_allclose(d.values, [2.1, 7.8, 18.2], atol=1e-12)
    assert load(tmp_path / "truth.json")["parameters"] == {"a": 2.0}


def test_simulate_without_noise_is_exact(tmp_path):
    cfg = setup(tmp_path, "exponential.json", noise={"kind": "none"})
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    d = read_series(tmp_path / "data.csv")
    np.testing.assert_allclose(d.values, 3.0 * np.exp(-0.5 * d.times), rtol=1e-15)


def test_simulate_is_deterministic(tmp_path):
    cfg = setup(tmp_path, "exponential.json")
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out in (a, b):
        assert run("simulate", "--config", cfg, "--out", out) == 0
    assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()
    assert (a / "truth.json").read_bytes() == (b / "truth.json").read_bytes()
    assert run("simulate", "--config", cfg, "--out", c, "--seed", 8) == 0
    assert (a / "data.csv").read_bytes() != (c / "data.csv").read_bytes()


def test_appendix_fit_sections_analyze(tmp_path):
    cfg = setup(tmp_path, "appendix.json")
    run("simulate", "--config", cfg, "--out", tmp_path)
    assert run("fit", "--config", cfg, "--out", tmp_path) == 0
    rep = load(tmp_path / "fit_report.json")
    assert rep["solution"]["a"] == pytest.approx(2.011224, abs=1e-6)
    assert rep["merit"] == pytest.approx(0.077653, abs=1e-6)
    assert rep["evaluations"] == 1 and rep["engine"] == "grid"
    assert rep["half_widths"]["a"] == pytest.approx(0.028, abs=5e-4)

    assert run("sections", "--config", cfg, "--out", tmp_path) == 0
    header, rows = read_numeric_table(tmp_path / "section_a.csv")
    assert header == ["x_real", "F_real", "x_follower", "F_follower"]
    a_star = 197.1 / 98.0
    np.testing.assert_allclose(rows[:, 3], 98.0 * (rows[:, 2] - a_star) ** 2, atol=1e-12)
    np.testing.assert_allclose(rows[:, 1], rows[:, 3] + rep["merit"], atol=1e-12)

    assert run("analyze", "--config", cfg, "--out", tmp_path) == 0
    doc = load(tmp_path / "analysis.json")
    width = 2 * doc["half_widths"]["a"]
    assert width == pytest.approx(0.056, abs=5e-4)
    assert abs(2.0 - doc["p_min"]["a"]) / width == pytest.approx(0.2, abs=0.01)
    assert doc["identity_residual_max"] < 1e-10
    assert all(p["in_band"] for p in doc["probes"])
    assert [p["similarity_domain"] for p in doc["probes"]] == [False, False, True]


def test_zero_noise_sections_coincide(tmp_path):
    cfg = setup(tmp_path, "appendix.json", noise={"kind": "none"})
    run("simulate", "--config", cfg, "--out", tmp_path)
    run("fit", "--config", cfg, "--out", tmp_path)
    run("sections", "--config", cfg, "--out", tmp_path)
    _, rows = read_numeric_table(tmp_path / "section_a.csv")
    np.testing.assert_allclose(rows[:, 1], rows[:, 3], atol=1e-12)
    run("analyze", "--config", cfg, "--out", tmp_path)
    assert load(tmp_path / "analysis.json")["half_widths"]["a"] == pytest.approx(0.0, abs=1e-12)


def test_engines_agree_on_toy(tmp_path):
    cfg = setup(tmp_path, "exponential.json")
    run("simulate", "--config", cfg, "--out", tmp_path)
    found = {}
    for engine in ("grid", "secant", "secant-eliminated"):
        out = tmp_path / engine
        assert run("fit", "--config", cfg, "--data", tmp_path / "data.csv", "--out", out, "--engine", engine) == 0
        found[engine] = load(out / "fit_report.json")["solution"]["p2"]
        table = "scan.csv" if engine == "grid" else "trace.csv"
        header, rows = read_table(out / table)
        assert rows
    assert abs(found["secant-eliminated"] - found["grid"]) <= 0.01
    assert found["secant"] == pytest.approx(found["secant-eliminated"], abs=1e-6)


def test_hc_multistage_workflow(tmp_path):
    cfg = setup(tmp_path, "hc_multistage.json")
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    assert run("fit", "--config", cfg, "--out", tmp_path) == 0
    rep = load(tmp_path / "fit_report.json")
    truth = load(tmp_path / "truth.json")["parameters"]
    assert rep["evaluations"] == 54
    assert rep["solution"]["c"] == pytest.approx(truth["c"], rel=0.09)
    assert run("compression-curve", "--config", cfg, "--out", tmp_path) == 0
    header, rows = read_table(tmp_path / "compression_curve.csv")
    assert header == ["stage", "c", "sigma_inf", "gap", "F"]
    np.testing.assert_allclose([float(r[2]) for r in rows], [100.0, 200.0, 300.0], rtol=1e-2)


def test_exit_codes(tmp_path):
    cfg = setup(tmp_path, "appendix.json")
    assert run("fit", "--config", tmp_path / "nope.json", "--out", tmp_path) == 2
    assert run("fit", "--config", cfg, "--out", tmp_path) == 3  # data file not there yet
    bad = setup(tmp_path, "exponential.json", model={"kind": "spline"})
    assert run("simulate", "--config", bad, "--out", tmp_path) == 2
    run("simulate", "--config", cfg, "--out", tmp_path)
    assert run("analyze", "--config", cfg, "--out", tmp_path / "empty") == 3  # no fit report
    (tmp_path / "broken.csv").write_text("t,value\n1,abc\n")
    assert run("fit", "--config", cfg, "--data", tmp_path / "broken.csv", "--out", tmp_path) == 3
    with pytest.raises(SystemExit):
        run("fit", "--config", cfg, "--engine", "newton")


def test_solver_failure_exit_code(tmp_path):
    # at these times every basis column underflows to zero, so no secant step exists
    cfg = setup(tmp_path, "exponential.json", solver={"initial": [[5.0], [5.5]], "max_repairs": 0})
    (tmp_path / "far.csv").write_text("t,value\n1000000,1\n2000000,1\n")
    code = run("fit", "--config", cfg, "--data", tmp_path / "far.csv", "--out", tmp_path,
               "--engine", "secant-eliminated")
    assert code == 4
    rep = load(tmp_path / "fit_report.json")
    assert rep["status"] == "failed" and not rep["converged"]
    assert rep["solution"]["p2"] == 5.0 and rep["merit"] == 2.0
    assert (tmp_path / "trace.csv").exists()


def test_csv_round_trip(tmp_path):
    s = DataSeries.from_arrays([0.0, 1e-300, 1.5], [np.pi, -1e300, 1.0 / 3.0])
    path = write_series(tmp_path / "s.csv", s)
    back = read_series(path)
    assert np.array_equal(back.times, s.times) and np.array_equal(back.values, s.values)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"t,value\n")
