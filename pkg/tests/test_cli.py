import csv
import json

import pytest

from riscf import cli, experiments
from riscf.config import save_config

from test_experiments import tiny_base


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    save_config(tiny_base(), path)
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_writes_csv(scenario_file, tmp_path, capsys):
    out = tmp_path / "run.csv"
    code = cli.main(["run", "--config", str(scenario_file), "--out", str(out), "--trials", "2",
                     "--variant", "f1", "--variant", "noris"])
    assert code == 0
    rows = _rows(out)
    assert [r["variant"] for r in rows] == ["f1", "f1", "noris", "noris"]
    assert all(float(r["wsr"]) > 0 for r in rows)
    assert rows[0]["runtime_s"] == ""
    assert "wsr=" in capsys.readouterr().out


def test_run_rejects_invalid_config(tmp_path, capsys):
    doc = tiny_base().to_dict()
    doc["noise_power"] = -1.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", "--config", str(path)]) == 2
    assert "noise_power" in capsys.readouterr().err


def test_run_reports_failed_cell(scenario_file, monkeypatch):
    def broken(cfg, cs):
        raise RuntimeError("boom")

    monkeypatch.setattr(experiments, "run", broken)
    assert cli.main(["run", "--config", str(scenario_file)]) == 1


def test_sweep_from_file(tmp_path, capsys):
    doc = {
        "scenario": tiny_base().to_dict(),
        "sweep": {"variable": "bs_power", "values": [-5, 0], "trials": 1, "variants": ["f1", "f3:2"]},
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", str(path), "--out", str(out), "--json"]) == 0
    assert len(_rows(out)) == 4
    assert len(_rows(experiments.summary_path(out))) == 4
    assert (tmp_path / "sweep.json").exists()
    assert "mean=" in capsys.readouterr().out


def test_sweep_needs_variable(capsys):
    assert cli.main(["sweep"]) == 2
    assert cli.main(["sweep", "--var", "wavelength", "--values", "1"]) == 2


def test_validate(scenario_file, tmp_path, capsys):
    assert cli.main(["validate", "--config", str(scenario_file)]) == 0
    assert "ok" in capsys.readouterr().out
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps({"scenario": "fig4", "sweep": {"variable": "user_distance_L", "values": [30]}}))
    assert cli.main(["validate", "--config", str(sweep)]) == 0
    sweep.write_text(json.dumps({"scenario": "fig4", "sweep": {"variable": "nope", "values": [30]}}))
    assert cli.main(["validate", "--config", str(sweep)]) == 1
    assert cli.main(["validate", "--config", str(tmp_path / "missing.json")]) == 2


def test_number_parsing():
    assert cli._number("3") == 3 and isinstance(cli._number("3"), int)
    assert cli._number("2.5") == 2.5
