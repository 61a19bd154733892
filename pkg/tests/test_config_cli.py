import csv
import json
from pathlib import Path

import numpy as np
import pytest

from subdual.cli import identity_table, main
from subdual.config import Expression, build_problem, load_config, validate
from subdual.errors import ConfigError
from subdual.experiments import execute, sweep_cells

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_filled():
    cfg = validate({})
    assert cfg.data["grid"]["steps"] == 64 and cfg.data["kernel"]["alpha"] == 0.5
    assert cfg.verify == ["basic"] and cfg.kind == "stencil"


def test_lower_bound_message():
    with pytest.raises(ConfigError, match="coefficient lower bound must be positive"):
        validate({"problem": {"a_bounds": [0.0, 2.0]}})


def test_errors_aggregated(tmp_path):
    raw = {"kernel": {"alpha": 1.5, "colour": 1}, "grid": {"steps": "many"},
           "problem": {"a": {"file": "nowhere.csv"}}, "verify": ["bogus"]}
    with pytest.raises(ConfigError) as err:
        validate(raw, tmp_path)
    text = " | ".join(err.value.errors)
    assert len(err.value.errors) >= 5
    for fragment in ("kernel.alpha", "kernel.colour", "grid.steps", "file not found", "bogus"):
        assert fragment in text


def test_parse_error_location(tmp_path):
    path = write(tmp_path, "[kernel]\nalpha = = 3\n")
    with pytest.raises(ConfigError, match=r"line 2"):
        load_config(path)
    with pytest.raises(ConfigError, match="file not found"):
        load_config(tmp_path / "absent.toml")


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open('f')", "[x]", "lambda: 1", "'s'"])
def test_expressions_rejected(text):
    with pytest.raises(ValueError):
        Expression(text, ("x",))


def test_expression_evaluates():
    e = Expression("exp(-t) * sin(pi*x) + (x > 0.5)", ("t", "x"))
    assert e(0.0, 0.75) == pytest.approx(np.sin(0.75 * np.pi) + 1)


def test_table_inputs(tmp_path):
    t, x = np.meshgrid([0.0, 1.0], [0.0, 0.5, 1.0], indexing="ij")
    np.savetxt(tmp_path / "a.csv", np.column_stack([t.ravel(), x.ravel(), 1 + t.ravel() * x.ravel()]), delimiter=",")
    np.savetxt(tmp_path / "phi.csv", [[-1, -1], [0, 0], [1, 1], [10, 10]], delimiter=",")
    kern = np.array([[0.01, 5.0], [0.1, 2.0], [1.0, 1.0], [2.0, 0.8]])
    np.savetxt(tmp_path / "k.csv", kern, delimiter=",")
    path = write(tmp_path, """
[kernel]
type = "tabulated"
file = "k.csv"
[grid]
steps = 8
points = 8
[problem]
nonlinearity = "custom-table"
table = "phi.csv"
a = {file = "a.csv"}
u0 = "1 + x"
""")
    spec = build_problem(load_config(path))
    assert spec.a_values[-1] == pytest.approx(1 + spec.space.axis)
    assert spec.nonlinearity.kind == "table"
    assert not spec.pair.k.bounded


def test_sweep_cells_sorted():
    cfg = validate({"sweep": {"alpha": [0.8, 0.3], "m": [2.0, 1.0]}})
    cells = sweep_cells(cfg)
    assert [(c["alpha"], c["m"]) for c in cells] == [(0.3, 1.0), (0.3, 2.0), (0.8, 1.0), (0.8, 2.0)]


def test_zero_config_run(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "zero.toml"), "--out", str(tmp_path)]) == 0
    for name in ("basic", "basic-alt", "triple", "pme"):
        report = json.loads((tmp_path / f"report_{name}.json").read_text())
        assert report["passed"] and abs(report["margin"]) <= 1e-14
    assert (tmp_path / "trajectory.csv").read_text().startswith("t,x,u")


def test_solver_failure_exit(tmp_path, capsys):
    code = main(["run", "--config", str(CONFIGS / "newton_failure.toml"), "--out", str(tmp_path)])
    out = capsys.readouterr()
    assert code == 2
    assert "solver stage failed" in out.out + out.err


def test_config_failure_exit(tmp_path, capsys):
    path = write(tmp_path, "[problem]\na_bounds = [-1.0, 1.0]\n")
    assert main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "coefficient lower bound must be positive" in err and "config stage failed" in err


def test_failed_estimate_exit(tmp_path, monkeypatch):
    from subdual import experiments
    from subdual.estimates import EstimateReport

    def failing(*args, **kwargs):
        return EstimateReport("basic", 2.0, 1.0, {"lhs": {}, "rhs": {}}, {})

    monkeypatch.setattr(experiments.est, "verify_basic_field", failing)
    path = write(tmp_path, "[grid]\nsteps = 4\npoints = 8\n[problem]\nu0 = \"1\"\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 1
    report = json.loads((tmp_path / "out" / "report_basic.json").read_text())
    assert not report["passed"] and report["margin"] == -1.0


def test_single_cell_sweep_matches_run(tmp_path):
    base = """
verify = ["basic", "pme"]
[kernel]
alpha = 0.4
[grid]
steps = 16
points = 12
[problem]
m = 2
u0 = "1 + 0.5*cos(pi*x)"
a_bounds = [1.0, 1.0]
"""
    run_path = write(tmp_path, base, "single.toml")
    sweep_path = write(tmp_path, base + "\n[sweep]\nalpha = [0.4]\n", "sweep.toml")
    assert main(["run", "--config", str(run_path), "--out", str(tmp_path / "run")]) == 0
    assert main(["sweep", "--config", str(sweep_path), "--out", str(tmp_path / "sweep")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep" / "summary.csv")))
    assert len(rows) == 1
    for name in ("basic", "pme"):
        margin = json.loads((tmp_path / "run" / f"report_{name}.json").read_text())["margin"]
        assert float(rows[0][f"{name}.margin"]) == margin


def test_sweep_grid_and_refinement(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "manufactured.toml"), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    errors = [float(r["max_error"]) for r in rows]
    assert len(rows) == 3 and errors[0] > errors[1] > errors[2]
    timings = json.loads((tmp_path / "timings.json").read_text())
    assert len(timings) == 3 and all(t["runtime"] > 0 for t in timings)


def test_pme_sweep_shape(tmp_path):
    path = write(tmp_path, """
verify = ["basic", "pme"]
[grid]
steps = 8
points = 8
[problem]
u0 = "1 + cos(pi*x)"
a_bounds = [1.0, 1.0]
[sweep]
alpha = [0.3, 0.5, 0.8]
m = [1, 2, 3]
""")
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "summary.csv")))
    assert len(rows) == 9
    keys = [(float(r["alpha"]), float(r["m"])) for r in rows]
    assert keys == sorted(keys)


def test_resolvent_command(tmp_path):
    out = tmp_path / "res.csv"
    assert main(["resolvent", "--alpha", "0.5", "--gamma", "1", "--steps", "64", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t", "s", "r", "h", "k_reg"] and len(rows) == 65


def test_identities_command(capsys):
    assert main(["identities", "--alpha", "0.5", "--steps", "128"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "identity,N,residual" and len(lines) == 6
    rows = identity_table(0.5, 128)
    assert rows[0][2] <= 1e-12 * 128


def test_verify_command(tmp_path):
    out = tmp_path / "r.json"
    assert main(["verify", "--config", str(CONFIGS / "minimal.toml"), "--estimate", "triple", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["estimate"] == "triple" and report["passed"]
    assert {"lhs", "rhs", "margin", "breakdown", "metadata"} <= set(report)


def test_react_and_solve_commands(tmp_path):
    assert main(["react", "--config", str(CONFIGS / "reaction.toml"), "--out", str(tmp_path / "rx")]) == 0
    for suffix in ("c1", "c2", "c3", "c4", "diagnostics"):
        assert (tmp_path / f"rx_{suffix}.csv").exists()
    assert main(["solve", "--config", str(CONFIGS / "minimal.toml"), "--out", str(tmp_path / "u.csv")]) == 0
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 3
    assert main(["react", "--config", str(CONFIGS / "minimal.toml")]) == 2


@pytest.mark.parametrize("name", ["minimal", "pme", "spectral", "reaction"])
def test_shipped_configs_pass(name, tmp_path):
    assert main(["run", "--config", str(CONFIGS / f"{name}.toml"), "--out", str(tmp_path)]) == 0
