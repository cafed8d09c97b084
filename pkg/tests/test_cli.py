import csv
import json
from pathlib import Path

import numpy as np
import pytest

from finfuel import cli, stopping

import golden

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _cfg(tmp_path, name, **edits):
    tree = json.loads((CONFIGS / f"{name}.json").read_text())
    for key, val in edits.items():
        sec, _, sub = key.partition("__")
        if sub:
            tree.setdefault(sec, {})[sub] = val
        else:
            tree[sec] = val
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(tree))
    return str(path)


def _run(args, tmp_path):
    out = tmp_path / "out"
    return cli.main([*args, "--out", str(out)]), out


@pytest.mark.parametrize("name,line", [
    ("reflecting", "Reflecting, ĉ=-0.5"),
    ("repelling", "Repelling, ĉ=1.5"),
    ("mixed", "Mixed, ĉ=0.666666666667"),
])
def test_regime(tmp_path, capsys, name, line):
    code, out = _run(["regime", "--config", str(CONFIGS / f"{name}.json")], tmp_path)
    assert code == 0
    assert capsys.readouterr().out.startswith(line)
    assert json.loads((out / "regime.json").read_text())["regime"] == name.capitalize()
    assert (out / "thresholds.csv").exists()


def test_boundary_reflecting(tmp_path):
    code, out = _run(["boundary", "--config", str(CONFIGS / "reflecting.json")], tmp_path)
    assert code == 0
    b = stopping.Boundary.from_csv(out / "beta_star.csv")
    assert b.c_grid.size == 201
    assert b(0.5) == pytest.approx(golden.BETA_STAR[0.5], abs=1e-10)
    assert json.loads((out / "boundary_manifest.json").read_text())["rows"] == 201


def test_boundary_refused_in_mixed_regime(tmp_path):
    code, _ = _run(["boundary", "--config", str(CONFIGS / "mixed.json")], tmp_path)
    assert code == 1


def test_value_csv(tmp_path):
    code, out = _run(["value", "--config", str(CONFIGS / "repelling.json"), "--x=-0.5,1.0", "--c", "0.5"], tmp_path)
    assert code == 0
    rows = list(csv.DictReader(open(out / "value.csv")))
    assert [r["region"] for r in rows] == ["inaction", "action"]
    assert float(rows[1]["value"]) == 0.5
    code, _ = _run(["value", "--config", str(CONFIGS / "repelling.json"), "--x", "1", "--c", "1.5"], tmp_path)
    assert code == 1


def test_simulate_immediate_and_determinism(tmp_path):
    cfg = _cfg(tmp_path, "reflecting", sim__n_paths=200, sim__dt=0.005)
    args = ["simulate", "--config", cfg, "--policy", "immediate_full", "--x", "1.5", "--c", "0.2"]
    code, out = _run(args, tmp_path)
    assert code == 0
    res = json.loads((out / "simulate.json").read_text())["results"]["x=1.5,c=0.2"]
    assert res["discounted"]["mean"] == pytest.approx(1.5 * 0.8)
    args = ["simulate", "--config", cfg, "--x", "1.0", "--c", "0.5", "--sscds", "--random-maturity", "--dump-paths", "2"]
    assert _run(args, tmp_path)[0] == 0
    first = (out / "simulate.json").read_bytes()
    assert _run(args, tmp_path)[0] == 0
    assert (out / "simulate.json").read_bytes() == first
    assert (out / "paths_0.csv").exists()


def test_simulate_rejects_unknown_policy(tmp_path):
    code, _ = _run(["simulate", "--config", str(CONFIGS / "reflecting.json"), "--policy", "yolo", "--x", "1", "--c", "0"], tmp_path)
    assert code == 1


@pytest.mark.parametrize("edits", [
    {"cost__kappa": -1.0},
    {"sim__n_pathz": 10},
    {"sim__n_paths": 7},
    {"modle": {}},
])
def test_invalid_configs(tmp_path, edits):
    cfg = _cfg(tmp_path, "reflecting", **edits)
    assert _run(["regime", "--config", cfg], tmp_path)[0] == 1


def test_env_override(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FINFUEL_COST__KAPPA", "4.0")
    monkeypatch.setenv("FINFUEL_COST__FAMILY", "linear_quadratic")
    monkeypatch.setenv("FINFUEL_MODEL__THETA", "1.0")
    code, _ = _run(["regime", "--config", str(CONFIGS / "reflecting.json")], tmp_path)
    assert code == 0 and capsys.readouterr().out.startswith("Repelling")
    monkeypatch.setenv("FINFUEL_SIM__BOGUS", "1")
    assert _run(["regime", "--config", str(CONFIGS / "reflecting.json")], tmp_path)[0] == 1


def test_missing_config_file(tmp_path):
    assert _run(["regime", "--config", str(tmp_path / "nope.json")], tmp_path)[0] == 1


def test_verify_rejects_non_monotone_boundary(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("c,x\n0.0,1.0\n0.5,1.2\n1.0,0.0\n")
    code, out = _run(["verify", "--config", str(CONFIGS / "reflecting.json"), "--boundary-csv", str(bad)], tmp_path)
    assert code == 3
    report = json.loads((out / "verify.json").read_text())
    assert report["passed"] is False


@pytest.mark.slow
def test_verify_rejects_shifted_boundary(tmp_path):
    b = stopping.tabulate_beta(*_refl())
    b.shifted(0.5).to_csv(tmp_path / "shifted.csv")
    cfg = _cfg(tmp_path, "reflecting", sim__n_paths=2000)
    code, out = _run(["verify", "--config", cfg, "--boundary-csv", str(tmp_path / "shifted.csv")], tmp_path)
    assert code == 3
    failed = {c["name"] for c in json.loads((out / "verify.json").read_text())["checks"] if not c["passed"]}
    assert "beta_smooth_fit" in failed


def _refl():
    from conftest import REFL_F, REFL_P

    return REFL_P, REFL_F


def test_explore_mixed(tmp_path):
    cfg = _cfg(tmp_path, "mixed", grid={"n_x": 201, "n_c": 51})
    code, out = _run(["explore-mixed", "--config", cfg], tmp_path)
    assert code == 0
    from finfuel.oracle import ValueSurface

    s = ValueSurface.from_bytes((out / "surface.bin").read_bytes())
    assert s.values.shape == (201, 51)
    assert np.all(s.values[:, -1] == 0.0)
    assert (out / "regions.csv").exists()


def test_explore_on_reflecting_recovers_beta(tmp_path, beta_tab):
    cfg = _cfg(tmp_path, "reflecting", grid={"n_x": 201, "n_c": 51})
    code, out = _run(["explore-mixed", "--config", cfg], tmp_path)
    assert code == 0
    from finfuel.oracle import ValueSurface, region_endpoints

    s = ValueSurface.from_bytes((out / "surface.bin").read_bytes())
    for c, x in region_endpoints(s, "left")[1:-1]:
        assert abs(x - beta_tab(c)) <= 2 * s.grid.dx
