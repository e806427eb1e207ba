import json

import pytest

from minimax_iv import cli
from minimax_iv.harness.config import OUT_ENV
from minimax_iv.harness.verify import VerifySummary

QUICK = {
    "n_grid": [64, 128],
    "reps": 2,
    "n": 200,
    "estimators": ["penalized_minimax", "dikkala", "both_worlds"],
    "verify": {"random_scenarios": 2, "seeds": 4, "n_values": [50], "misspec_reps": 1, "games": 3,
               "eps_h": [0.1], "eps_g": [0.0]},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(QUICK))
    return str(p)


def test_scenario_command(tmp_path, cfg_path):
    out = tmp_path / "o"
    assert cli.main(["scenario", "--config", cfg_path, "--out", str(out)]) == 0
    sc = json.loads((out / "scenario.json").read_text())
    fam = json.loads((out / "families.json").read_text())
    assert sc["config_hash"] == fam["config_hash"]
    assert len(fam["H"]["members"]) >= 2


def test_fit_command(tmp_path, cfg_path):
    out = tmp_path / "o"
    assert cli.main(["fit", "--config", cfg_path, "--seed", "3", "--out", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert set(fit["fits"]) == {"penalized_minimax", "dikkala", "both_worlds"}
    assert "main_bound" in fit["fits"]["penalized_minimax"]
    assert (out / "dataset.csv").read_text().startswith("x,y,z\n")


def test_rates_command(tmp_path, cfg_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["rates", "--config", cfg_path, "--out", str(out)]) == 0
    assert (out / "rates.csv").exists() and (out / "rates.json").exists()
    assert "l2 slope" in capsys.readouterr().out


def test_verify_command(tmp_path, cfg_path, monkeypatch):
    out = tmp_path / "o"
    code = cli.main(["verify", "--config", cfg_path, "--out", str(out)])
    summary = json.loads((out / "verify.json").read_text())
    assert code == (0 if summary["ok"] else 1)
    failing = VerifySummary({"saddle": {"pass": 0, "fail": 1, "unmet": 0}}, "h")
    monkeypatch.setattr(cli, "verify_suite", lambda cfg: failing)
    assert cli.main(["verify", "--config", cfg_path, "--out", str(out)]) == 1


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_grid": [10, 5]}))
    assert cli.main(["rates", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text("{not json")
    assert cli.main(["verify", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"scenario": {"fixture": "W9"}}))
    assert cli.main(["scenario", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_output_directory_precedence(tmp_path, monkeypatch, cfg_path):
    monkeypatch.chdir(tmp_path)
    cfg = json.loads(open(cfg_path).read())
    cfg["out_dir"] = str(tmp_path / "from_config")
    p = tmp_path / "c2.json"
    p.write_text(json.dumps(cfg))
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert cli.main(["scenario", "--config", str(p)]) == 0
    assert (tmp_path / "from_config" / "scenario.json").exists()
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "from_env"))
    assert cli.main(["scenario", "--config", str(p)]) == 0
    assert (tmp_path / "from_env" / "scenario.json").exists()
    assert cli.main(["scenario", "--config", str(p), "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "scenario.json").exists()
    monkeypatch.delenv(OUT_ENV)
    assert cli.main(["scenario", "--config", cfg_path]) == 0
    assert (tmp_path / "results" / "scenario.json").exists()


def test_rates_output_is_deterministic(tmp_path, cfg_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["rates", "--config", cfg_path, "--out", str(a)])
    cli.main(["rates", "--config", cfg_path, "--out", str(b)])
    assert (a / "rates.json").read_bytes() == (b / "rates.json").read_bytes()
    assert (a / "rates.csv").read_bytes() == (b / "rates.csv").read_bytes()
