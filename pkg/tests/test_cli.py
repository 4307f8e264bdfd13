import json

import pytest

from polaronlab import acceptance, cli
from polaronlab.acceptance import CriterionReport


def run(tmp_path, sub, cfg, *extra):
    cpath = tmp_path / f"{sub}.toml"
    cpath.write_text(cli.to_toml(cfg))
    out = tmp_path / f"out-{sub}"
    code = cli.main([sub, "--config", str(cpath), "--out", str(out), "--format", "csv", *extra])
    data = json.loads((out / f"{sub.replace('-', '_')}.json").read_text())
    return code, data, out


def test_mass_free_model(tmp_path):
    code, data, _ = run(tmp_path, "mass", {"alpha": 0.0, "solver": {"N_max": 2}})
    assert code == 0
    assert abs(data["outputs"]["m_eff_inverse"]["value"] - 1.0) <= 1e-8
    assert data["config"]["alpha"] == 0.0 and "wall_clock" not in data


def test_kernel_table_sorted(tmp_path):
    code, data, out = run(tmp_path, "kernel", {"dimension": 3, "grid": {"dk": 1.0, "kmax": 2.0}})
    rows = data["outputs"]["kappa_ladder"]
    keys = [(r["kappa"], r["x"], r["t"]) for r in rows]
    assert keys == sorted(keys)
    zero = [r for r in data["outputs"]["model_kernel"] if r["x"] == 0 and r["t"] == 0][0]
    assert zero["W_discrete"] == pytest.approx(data["outputs"]["g_norm2"], rel=1e-15)
    assert (out / "kernel_kappa_ladder.csv").exists()


def test_clt_toy_one_minimum(tmp_path):
    code, data, _ = run(tmp_path, "clt-toy", {})
    assert code == 0
    assert data["outputs"]["classification"] == "one-minimum"
    assert data["outputs"]["verdict"]["verdict"] == "gaussian"


def test_spectrum_and_mc(tmp_path):
    code, data, _ = run(tmp_path, "spectrum", {"solver": {"N_max": 2}})
    assert code == 0 and len(data["outputs"]["energies"]) == 6
    mc = {"sweeps": 200, "burn_in": 20, "chains": 2, "t": 2.0, "T_minus": 0.5, "T_plus": 0.5,
          "lags": [0.2, 0.4, 0.6, 0.8, 1.0, 2.0]}
    code, data, out = run(tmp_path, "mc", {"mc": mc}, "--seed", "17", "--timing")
    assert code == 0 and data["seeds"]["seed"] == 17 and data["config"]["seed"] == 17
    assert "wall_clock" in data
    assert (out / "mc_lags.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    cpath = tmp_path / "bad.toml"
    cpath.write_text("alpah = 1\n[mc]\nsweep = 2\n")
    assert cli.main(["mass", "--config", str(cpath), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "alpah" in err and "mc.sweep" in err


def test_verify_report_and_exit(tmp_path, capsys, monkeypatch):
    code, data, _ = run(tmp_path, "verify", {"verify": {"criteria": [4, 6]}})
    assert code == 0
    assert [c["number"] for c in data["outputs"]["criteria"]] == [4, 6]
    assert all(r["tolerances"] for r in data["outputs"]["reports"])
    assert "criterion 4 [PASS]" in capsys.readouterr().out
    monkeypatch.setitem(acceptance.CRITERIA, 6, lambda: CriterionReport(6, "broken", False, "forced"))
    code, data, _ = run(tmp_path, "verify", {"verify": {"criteria": [6]}})
    assert code == 1 and not data["outputs"]["passed"]


def test_sign_flip_mutation_detected():
    rep = acceptance.criterion_3(alphas=(0.5,), mc_sweeps=20000, mc_chains=3, weight_sign=-1.0)
    assert not rep.passed
