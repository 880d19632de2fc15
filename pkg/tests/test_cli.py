from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from curvflow.cli import ConfigError, main, parse_config
from curvflow.energy import PolarGrid, ScalarField


def run_cli(*args: str, env=None) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "curvflow.cli", *args],
                          capture_output=True, text=True, env=env)


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert "constants schema" in capsys.readouterr().out


def test_constants_deterministic(tmp_path):
    assert main(["constants", "--dim", "5", "--outdir", str(tmp_path)]) == 0
    first = (tmp_path / "table.json").read_bytes()
    assert main(["constants", "--dim", "5", "--outdir", str(tmp_path)]) == 0
    assert (tmp_path / "table.json").read_bytes() == first
    tab = json.loads(first)
    assert abs(tab["gamma3_over_gamma2"] - 3) < 1e-12
    assert tab["dim"] == 5 and "c1" in tab and "d2" in tab


def test_config_errors_listed(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "dim": 6,\n  "grid_size": -3\n}\n')
    assert main(["flow", "--config", str(cfg), "--outdir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line 2: dim must be 3,4,5" in err
    assert "line 3: grid_size: must be positive" in err
    assert "missing required key 't_end'" in err


def test_invalid_json_line(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "dim": 3,\n  "t_end" 1\n}\n')
    assert main(["flow", "--config", str(cfg)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_output_confined(tmp_path):
    assert main(["constants", "--dim", "3", "--outdir", str(tmp_path), "--out", "../x.json"]) == 2
    assert not (tmp_path.parent / "x.json").exists()


def test_parse_config_collects_everything():
    with pytest.raises(ConfigError) as e:
        parse_config("shadow", {"dim": 2, "mode": "bad", "extra": 1})
    msgs = e.value.errors
    assert len(msgs) == 5
    assert any("dim must be 3,4,5" in m for m in msgs)


def test_flow_and_gnuplot(tmp_path):
    cfg = tmp_path / "f.json"
    cfg.write_text(json.dumps({"dim": 3, "t_end": 0.1, "grid_size": 64}))
    assert main(["flow", "--config", str(cfg), "--outdir", str(tmp_path), "--emit-gnuplot"]) == 0
    assert (tmp_path / "flow.csv").exists() and (tmp_path / "flow.gp").exists()
    checks = json.loads((tmp_path / "flow.checks.json").read_text())
    assert all(c["passed"] for c in checks.values())


def test_flow_stiffness_exit(tmp_path):
    cfg = tmp_path / "f.json"
    cfg.write_text(json.dumps({"dim": 3, "t_end": 0.1, "grid_size": 64, "dt_init": 1e-13,
                               "dt_max": 1e-13, "method": "imex", "tol": 1e-30}))
    assert main(["flow", "--config", str(cfg), "--outdir", str(tmp_path)]) == 3


def test_shadow(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"dim": 4, "H": 0.5, "t_end": 0.2, "n_out": 5,
                               "bubbles": [{"a": [0.1, 0, 0, 0], "lambda": 500}]}))
    assert main(["shadow", "--config", str(cfg), "--outdir", str(tmp_path),
                 "--out", "traj.csv"]) == 0
    assert len((tmp_path / "traj.csv").read_text().splitlines()) == 6


def test_decompose(tmp_path):
    from curvflow.bubbles import bubble_eval
    from curvflow.decompose import pole
    from curvflow.geometry import ModelSpace
    g = PolarGrid.clustered(3, 1000, 5.0)
    u = 2 * bubble_eval(ModelSpace(3, "sphere"), pole(3), 40.0, g.ambient_points())
    ScalarField(g, u).to_csv(tmp_path / "field.csv")
    assert main(["decompose", "--input", str(tmp_path / "field.csv"), "--dim", "3", "--p", "1",
                 "--outdir", str(tmp_path), "--out", "result.json"]) == 0
    res = json.loads((tmp_path / "result.json").read_text())
    assert res["converged"] and abs(res["ensemble"][0]["lambda"] - 40) < 1e-8


def test_decompose_missing_input(tmp_path):
    assert main(["decompose", "--input", str(tmp_path / "nope.csv"), "--dim", "3",
                 "--outdir", str(tmp_path)]) == 2


def test_check_cond_exit_codes(tmp_path):
    good = {"kind": "polynomial", "monomials": [
        {"coeff": 1.0, "powers": [0, 0, 0, 0]}, {"coeff": 0.1, "powers": [2, 0, 0, 0]},
        {"coeff": 0.1, "powers": [0, 2, 0, 0]}, {"coeff": 0.1, "powers": [0, 0, 2, 0]},
        {"coeff": 0.1, "powers": [0, 0, 0, 2]}]}
    assert main(["check-cond", "--dim", "4", "--K", json.dumps(good), "--outdir", str(tmp_path)]) == 0
    bad = json.loads(json.dumps(good))
    for m in bad["monomials"][1:]:
        m["coeff"] = -0.1
    assert main(["check-cond", "--dim", "4", "--K", json.dumps(bad), "--outdir", str(tmp_path)]) == 1


def test_interactions(tmp_path):
    assert main(["interactions", "--dim", "4", "--outdir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "interactions.json").read_text())
    assert rep["passed"]


def test_threads_env(tmp_path):
    import os
    env = {**os.environ, "CURVFLOW_THREADS": "x"}
    r = run_cli("constants", "--dim", "3", "--outdir", str(tmp_path), env=env)
    assert r.returncode == 2 and "CURVFLOW_THREADS" in r.stderr
    env["CURVFLOW_THREADS"] = "1"
    assert run_cli("constants", "--dim", "3", "--outdir", str(tmp_path), env=env).returncode == 0


def test_fields_roundtrip_exactly(tmp_path):
    g = PolarGrid.uniform(4, 17)
    f = ScalarField(g, 1 + 0.1 * np.sin(g.theta) ** 2)
    f.to_csv(tmp_path / "a.csv")
    assert np.array_equal(ScalarField.from_csv(tmp_path / "a.csv", 4).values, f.values)
