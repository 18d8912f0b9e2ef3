import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from competing_ate.cif import default_grid, g_formula_ate
from competing_ate.cli import execute
from competing_ate.cox import fit_cause_specific_models
from competing_ate.data import parse_dataset


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def err_record(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def sim_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "data.csv"
    assert execute(["simulate", "--seed", "4", "--n", "300", "--beta", "2",
                    "--output", str(path)]) == 0
    return path


def test_simulate_requires_seed(capsys):
    assert execute(["simulate", "--n", "50"]) == 2
    assert "seed" in err_record(capsys)["message"]


def test_unknown_command_and_flag(capsys):
    assert execute(["frobnicate"]) == 2
    assert execute(["ate", "--nope"]) == 2


def test_simulate_deterministic(tmp_path, sim_file):
    other = tmp_path / "again.csv"
    assert execute(["simulate", "--seed", "4", "--n", "300", "--beta", "2",
                    "--output", str(other)]) == 0
    assert other.read_bytes() == sim_file.read_bytes()


def test_ate_matches_library(tmp_path, sim_file):
    out = tmp_path / "ate.csv"
    assert execute(["ate", "--input", str(sim_file), "--times", "1,5",
                    "--output", str(out)]) == 0
    ds = parse_dataset(sim_file.read_bytes())
    grid = default_grid(ds, (1.0, 5.0))
    ref = g_formula_ate(fit_cause_specific_models(ds), ds, grid)
    got = rows(out)
    np.testing.assert_array_equal([float(r["time"]) for r in got], grid.points)
    np.testing.assert_array_equal([float(r["estimate"]) for r in got], ref.values)


def test_fit_table(tmp_path, sim_file):
    out = tmp_path / "fit.csv"
    assert execute(["fit", "--input", str(sim_file), "--output", str(out)]) == 0
    got = rows(out)
    assert {r["cause"] for r in got} == {"1", "2"}
    assert got[0]["term"] == "treated" and float(got[0]["se"]) > 0


def test_ci_all_methods_agree(tmp_path, sim_file):
    out = tmp_path / "ci.csv"
    assert execute(["ci", "--input", str(sim_file), "--times", "5", "--seed", "1",
                    "--method", "all", "--B", "ebs=200,if=2000,wbs=2000",
                    "--output", str(out)]) == 0
    got = rows(out)
    assert [r["method"] for r in got] == ["EBS", "IF", "WBS-normal", "WBS-poisson",
                                         "WBS-weird"]
    widths = np.array([float(r["upper"]) - float(r["lower"]) for r in got])
    assert widths.max() / widths.min() < 1.5
    for r in got:
        assert float(r["lower"]) <= float(r["estimate"]) <= float(r["upper"])


def test_ci_seed_rules(tmp_path, sim_file, capsys):
    out = tmp_path / "ci.csv"
    assert execute(["ci", "--input", str(sim_file), "--times", "5",
                    "--output", str(out)]) == 2
    assert not out.exists()
    assert execute(["ci", "--input", str(sim_file), "--times", "5", "--method", "if",
                    "--output", str(out)]) == 0
    assert execute(["ci", "--input", str(sim_file), "--method", "if", "--alpha", "1.5"]) == 2


def test_band_output(tmp_path, sim_file):
    out = tmp_path / "band.csv"
    svg = tmp_path / "band.svg"
    assert execute(["band", "--input", str(sim_file), "--seed", "2", "--method", "wbs-normal",
                    "--B", "500", "--band", "1,8", "--output", str(out),
                    "--svg", str(svg)]) == 0
    got = rows(out)
    t = np.array([float(r["time"]) for r in got])
    assert t.min() >= 1 and t.max() <= 8
    assert svg.read_text().lstrip().startswith("<?xml")


def test_ties_are_data_errors(tmp_path, capsys):
    path = tmp_path / "ties.csv"
    lines = ["time,cause,treated,z"]
    rng = np.random.default_rng(0)
    for i in range(40):
        lines.append(f"{1 + i // 2},{1 + i % 2},{i % 3 == 0:d},{rng.normal():.3f}")
    path.write_text("\n".join(lines) + "\n")
    assert execute(["ate", "--input", str(path)]) == 3
    assert err_record(capsys)["error"] == "TiedEventTimesError"
    assert execute(["ate", "--input", str(path), "--jitter"]) == 2
    assert execute(["ate", "--input", str(path), "--jitter", "--seed", "1",
                    "--output", str(tmp_path / "o.csv")]) == 0


def test_parse_error_reports_row(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("time,cause,treated,z\n1,1,0,0.1\n2,0,1,xyz\n")
    assert execute(["fit", "--input", str(path)]) == 3
    assert err_record(capsys)["row"] == 2


def test_numerical_error_exit_code(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    rng = np.random.default_rng(0)
    lines = ["time,cause,treated,flat"]
    for i in range(40):
        lines.append(f"{i + rng.random():.6f},{1 + i % 2},{i % 2},3")
    path.write_text("\n".join(lines) + "\n")
    out = tmp_path / "never.csv"
    assert execute(["fit", "--input", str(path), "--output", str(out)]) == 4
    rec = err_record(capsys)
    assert rec["error"] == "SingularInformationError" and rec["column"] == "flat"
    assert not out.exists()


def test_config_models_and_schema(tmp_path):
    data = tmp_path / "d.csv"
    rng = np.random.default_rng(1)
    buf = io.StringIO()
    buf.write("t,status,arm,x,g\n")
    for i in range(120):
        buf.write(f"{rng.exponential() + i * 1e-9:.9f},{rng.integers(0, 3)},{i % 2},"
                  f"{rng.normal():.4f},{'abc'[i % 3]}\n")
    data.write_text(buf.getvalue())
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "schema": {"time": "t", "cause": "status", "treated": "arm",
                   "categorical": {"g": {"levels": ["a", "b", "c"], "reference": "a"}}},
        "models": {"2": {"columns": ["x"]}}}))
    out = tmp_path / "fit.csv"
    assert execute(["fit", "--input", str(data), "--config", str(cfg),
                    "--output", str(out)]) == 0
    terms = [(r["cause"], r["term"]) for r in rows(out)]
    assert ("1", "g[b]") in terms and ("2", "x") in terms and ("2", "g[b]") not in terms


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert execute(["simulate", "--seed", "1", "--config", str(cfg)]) == 2


def test_coverage_command(tmp_path):
    prefix = tmp_path / "cov" / "report"
    svg = tmp_path / "svg"
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps({"true_ate_n": 5000, "true_ate_reps": 4}))
    args = ["coverage", "--config", str(cfg), "--seed", "3", "--beta", "2", "--sizes", "100",
            "--replications", "2", "--method", "if,wbs-normal", "--B", "200", "--times", "1,5",
            "--svg", str(svg)]
    assert execute(args + ["--output", str(prefix)]) == 0
    got = rows(str(prefix) + ".csv")
    assert len(got) == 2 * 3 and all(r["elapsed_ms"] == "" for r in got)
    assert json.loads((tmp_path / "cov" / "report.json").read_text())["rows"]
    assert (svg / "default_coverage.svg").exists()
    # no wall-clock chart unless timing was requested
    assert not (svg / "default_time.svg").exists()


def test_true_ate_command(tmp_path):
    out = tmp_path / "truth.csv"
    assert execute(["true-ate", "--seed", "0", "--beta", "-2", "--times", "1,5,9",
                    "--n-large", "5000", "--reps", "3", "--output", str(out)]) == 0
    vals = [float(r["ate"]) for r in rows(out)]
    assert len(vals) == 3 and all(v < 0 for v in vals)


def test_console_script_module_entry():
    res = subprocess.run([sys.executable, "-m", "competing_ate.cli", "simulate"],
                         capture_output=True, text=True)
    assert res.returncode == 2
    assert json.loads(res.stderr)["exit_code"] == 2
