import csv
import json
import math

import numpy as np
import pytest

from edbosonic import cli
from edbosonic.model import MHZ

PARAMS = {"chi_e": "1 MHz", "E_c": "400 MHz", "kappa": "0.5 /ms", "kappa_e": "0.025 /us",
          "kappa_f": "0.05 /us"}


def run(tmp_path, command, cfg, *extra):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"out_{command}"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def read(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_parse_quantity():
    assert cli.parse_quantity("1 MHz", "freq", "x") == pytest.approx(2 * math.pi * 1e6)
    assert cli.parse_quantity("2 us", "time", "x") == pytest.approx(2e-6)
    assert cli.parse_quantity("0.5 /ms", "rate", "x") == pytest.approx(500)
    for bad, kind in (("3", "time"), (3.0, "time"), ("2 MHz", "time"), ("1 us", "rate"),
                      ("x us", "time")):
        with pytest.raises(cli.ConfigError):
            cli.parse_quantity(bad, kind, "field")


def test_parse_params_units():
    p = cli.parse_params({"params": PARAMS})
    assert p.chi_e == pytest.approx(MHZ) and p.chi_f == pytest.approx(2 * MHZ)
    assert p.kappa == pytest.approx(500) and p.kappa_e == pytest.approx(25e3)
    with pytest.raises(cli.ConfigError, match="params"):
        cli.parse_params({})
    with pytest.raises(cli.ConfigError, match="unknown"):
        cli.parse_params({"params": {"chi": "1 MHz"}})


def test_config_hash_canonical():
    a = {"params": {"kappa": "0.5 /ms", "chi_e": "1 MHz"}, "seed": 1}
    b = json.loads('{ "seed": 1,\n "params": {"chi_e": "1 MHz",   "kappa": "0.5 /ms"} }')
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash({**a, "seed": 2})


def test_budget_command(tmp_path):
    cfg = {"budget": {"lifetimes": ["40 us"]}}
    code, out = run(tmp_path, "budget", cfg)
    assert code == cli.EXIT_OK
    rows = read(out / "gain_vs_lifetime_AB.csv")
    assert len(rows) == 1 and float(rows[0]["lifetime_us"]) == pytest.approx(40)
    summary = {r["quantity"]: float(r["value"]) for r in read(out / "budget_summary.csv")}
    assert summary["t_int_us"] == pytest.approx(92)
    assert summary["critical_lifetime_us"] == pytest.approx(91, abs=1)
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["files"]) == {"budget_summary.csv", "gain_vs_lifetime_AB.csv",
                                 "gain_vs_lifetime_B.csv"}


def test_budget_bad_kappa(tmp_path):
    code, _ = run(tmp_path, "budget", {"budget": {"kappa": "0 /ms"}})
    assert code == cli.EXIT_CONFIG
    code, _ = run(tmp_path, "budget", {"budget": {"lifetimes": []}})
    assert code == cli.EXIT_CONFIG


def test_optimize_threshold_zero(tmp_path):
    cfg = {"params": PARAMS, "dims": {"cavity_dim": 8},
           "optimizer": {"gates": ["H"], "threshold": 0, "n_segments": 20, "evaluate": True}}
    code, out = run(tmp_path, "optimize", cfg, "--seed", "5")
    assert code == cli.EXIT_OK
    assert (out / "pulses" / "H.pulse").exists()
    first = (out / "table1.csv").read_text()
    code, out2 = run(tmp_path, "optimize", cfg, "--seed", "5")
    assert (out2 / "table1.csv").read_text() == first
    man = json.loads((out / "manifest.json").read_text())
    assert "pulses/H.pulse" in man["files"] and man["seed"] == 5


def test_optimize_config_errors(tmp_path, capsys):
    code, _ = run(tmp_path, "optimize", {"optimizer": {"gates": ["H"]}})
    assert code == cli.EXIT_CONFIG
    assert "params" in capsys.readouterr().err
    code, _ = run(tmp_path, "optimize", {"params": PARAMS, "optimizer": {"gates": ["Q"]}})
    assert code == cli.EXIT_CONFIG


def test_simulate_lossless_flat(tmp_path):
    lossless = {**PARAMS, "kappa": "0 /ms", "kappa_e": "0 /us", "kappa_f": "0 /us"}
    cfg = {"params": lossless, "dims": {"cavity_dim": 8},
           "schedule": {"strategies": ["ED-A", "ED-AB"], "t_int": "92 us", "n_cycles": 5}}
    code, out = run(tmp_path, "simulate", cfg, "--ideal-unitaries")
    assert code == cli.EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    series = [f for f in man["files"] if f.startswith("lifetime_ED")]
    assert len(series) == 2
    for f in series:
        rows = read(out / f)
        assert all(float(r["fidelity"]) == pytest.approx(1, abs=1e-9) for r in rows)


def test_simulate_needs_pulses(tmp_path):
    cfg = {"params": PARAMS, "dims": {"cavity_dim": 8},
           "schedule": {"strategies": ["ED-A"], "n_cycles": 5}}
    code, _ = run(tmp_path, "simulate", cfg)
    assert code == cli.EXIT_CONFIG
    cfg["schedule"]["pulses"] = str(tmp_path / "nowhere")
    code, _ = run(tmp_path, "simulate", cfg)
    assert code == cli.EXIT_CONFIG


def test_simulate_failed_job_marked(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise KeyboardInterrupt

    monkeypatch.setattr(cli.qec, "run_cycles", boom)
    cfg = {"params": PARAMS, "dims": {"cavity_dim": 8},
           "schedule": {"strategies": ["ED-A"], "n_cycles": 5}}
    code, out = run(tmp_path, "simulate", cfg, "--ideal-unitaries")
    assert code != cli.EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["jobs"][0]["status"] == "failed"


def test_simulate_ideal_outputs(tmp_path):
    cfg = {"params": PARAMS, "dims": {"cavity_dim": 8},
           "schedule": {"strategies": ["ED-AB"], "t_int": ["92 us"], "n_cycles": 40}}
    code, out = run(tmp_path, "simulate", cfg, "--ideal-unitaries")
    assert code == cli.EXIT_OK
    gains = read(out / "gains.csv")
    assert [g["strategy"] for g in gains] == ["physical", "ED-AB"]
    rows = read(out / "lifetime_ED-AB_92us.csv")
    assert len(rows) == 41
    # 17 significant digits survive the round trip
    assert rows[1]["time_us"] == format(92.0, ".17g")


def test_sweep_command(tmp_path):
    cfg = {"params": PARAMS, "dims": {"cavity_dim": 8},
           "schedule": {"strategies": ["ED-A"], "n_cycles": 30},
           "sweep": {"parameter": "kappa_e", "grid": ["0.025 /us", "0.0125 /us"]}}
    code, out = run(tmp_path, "sweep", cfg, "--ideal-unitaries")
    assert code == cli.EXIT_OK
    rows = read(out / "sweep.csv")
    assert len(rows) == 2
    code, _ = run(tmp_path, "sweep", {**cfg, "sweep": {"parameter": "chi"}}, "--ideal-unitaries")
    assert code == cli.EXIT_CONFIG


def test_verify_subset_and_sabotage(tmp_path):
    code, out = run(tmp_path, "verify", {"verify": {"checks": ["ptm_identity",
                                                                "depolarizing_floor"]}})
    assert code == cli.EXIT_OK
    code, out = run(tmp_path, "verify", {"verify": {"checks": ["physical_baseline"],
                                                     "tolerances": {"physical_baseline": 1e-9}}})
    assert code == cli.EXIT_CHECK
    rows = read(out / "verify.csv")
    assert rows[0]["check"] == "physical_baseline" and rows[0]["passed"] == "0"
    code, out = run(tmp_path, "verify", {"verify": {"checks": []}})
    assert code == cli.EXIT_OK and read(out / "verify.csv") == []


@pytest.mark.slow
def test_verify_defaults(tmp_path):
    code, out = run(tmp_path, "verify", {})
    assert code == cli.EXIT_OK
    assert all(r["passed"] == "1" for r in read(out / "verify.csv"))


def test_workers_validation(tmp_path):
    code, _ = run(tmp_path, "budget", {"budget": {}}, "--workers", "0")
    assert code == cli.EXIT_CONFIG
