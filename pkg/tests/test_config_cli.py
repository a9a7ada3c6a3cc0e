import copy
import json

import numpy as np
import pytest

from pdmp.cli import EXIT_CFL, EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from pdmp.config import (AUTO_DT_FRACTION, bundled_config, config_to_dict, load_config,
                         resolve_config)
from pdmp.model import ConfigurationError


@pytest.fixture
def relax4_data():
    return json.loads(bundled_config("relax4_cfl").read_text())


def _write(tmp_path, data, name="run"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return path


def test_bundled_relax4():
    cfg = load_config("relax4_cfl")
    assert cfg.grid.K == 1000
    assert cfg.grid.dx == 4000 / 999
    assert abs(cfg.dt_max - 0.250063) <= 1e-5
    assert not cfg.dt_auto


def test_missing_dt_is_filled_from_cfl(relax4_data):
    del relax4_data["time"]["dt"]
    cfg = resolve_config(relax4_data)
    assert cfg.dt_auto
    assert cfg.dt == pytest.approx(AUTO_DT_FRACTION * cfg.dt_max, rel=1e-15)


def test_row_stochastic_q_rejected(relax4_data):
    relax4_data["model"]["q"] = [[0.5, 0.5, 0.0, 0.0], [0.2, 0.2, 0.6, 0.0],
                               [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    with pytest.raises(ConfigurationError, match="jump.column"):
        resolve_config(relax4_data)


def test_schema_errors_carry_pointer(relax4_data):
    relax4_data["model"]["states"][2]["mu"] = "fast"
    with pytest.raises(ConfigurationError, match="/model/states/2/mu"):
        resolve_config(relax4_data)


def test_parse_error_reported(relax4_data):
    relax4_data["model"]["states"][0]["drift"] = "-0.001*y"
    with pytest.raises(ConfigurationError, match="unknown identifier"):
        resolve_config(relax4_data)


def test_snapshot_beyond_horizon(relax4_data):
    relax4_data["snapshots"] = [600.0]
    with pytest.raises(ConfigurationError, match="snapshots"):
        resolve_config(relax4_data)


@pytest.mark.parametrize("name", ["relax4_cfl", "relax4_unstable", "relax4_evolution",
                                  "telegraph_compare", "telegraph_convergence"])
def test_round_trip(name):
    cfg = load_config(name)
    data = config_to_dict(cfg)
    again = resolve_config(copy.deepcopy(data), cfg.name)
    assert config_to_dict(again) == data
    assert again.grid == cfg.grid and again.dt == cfg.dt and again.T == cfg.T
    np.testing.assert_array_equal(again.model.jump, cfg.model.jump)
    assert again.model.drift_strings() == cfg.model.drift_strings()


def test_cli_cfl(capsys):
    assert main(["cfl", "--config", "relax4_cfl"]) == EXIT_OK
    assert "dt_max = 0.250063" in capsys.readouterr().out


def test_cli_cfl_unbounded(tmp_path, capsys):
    data = {"model": {"states": [{"drift": "0", "mu": 0}], "q": [[1]]},
            "grid": {"domain": [0, 1], "k": 11}, "time": {"T": 1.0},
            "initial": {"steps": [[{"w": 1, "x0": 0.5}]]}}
    assert main(["cfl", "--config", str(_write(tmp_path, data))]) == EXIT_OK
    assert "dt_max = unbounded" in capsys.readouterr().out


def test_cli_missing_config(tmp_path):
    assert main(["cfl", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG


def test_cli_invalid_config(tmp_path, relax4_data, capsys):
    relax4_data["model"]["states"][1]["mu"] = -4
    assert main(["cfl", "--config", str(_write(tmp_path, relax4_data))]) == EXIT_CONFIG
    assert "rates" in capsys.readouterr().err


def test_cli_cfl_refusal(tmp_path, relax4_data):
    relax4_data["time"]["dt"] = 0.5
    relax4_data["time"]["T"] = 5.0
    relax4_data["snapshots"] = []
    assert main(["solve", "--config", str(_write(tmp_path, relax4_data)), "--out", str(tmp_path)]) == EXIT_CFL


def test_cli_override_fails_checks(tmp_path, relax4_data, capsys):
    relax4_data["time"].update(dt=0.5, T=100.0, allow_cfl_violation=True)
    relax4_data["snapshots"] = []
    assert main(["solve", "--config", str(_write(tmp_path, relax4_data)), "--out", str(tmp_path)]) == EXIT_CHECK
    assert "CHECK monotone FAIL" in capsys.readouterr().out


def test_cli_solve_writes_csv(tmp_path, relax4_data, capsys):
    relax4_data["time"]["T"] = 10.0
    relax4_data["snapshots"] = [0.0, 5.0]
    relax4_data["name"] = "short"
    path = _write(tmp_path, relax4_data, "short")
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    files = sorted(p.name for p in tmp_path.glob("short_t*.csv"))
    assert files == ["short_t0.csv", "short_t10.csv", "short_t5.csv"]
    lines = (tmp_path / "short_t10.csv").read_text().splitlines()
    assert lines[0] == "x,F_1,F_2,F_3,F_4,p_1,p_2,p_3,p_4,F_total,p_total"
    table = np.loadtxt(tmp_path / "short_t10.csv", delimiter=",", skiprows=1)
    assert table.shape == (1000, 11)
    assert table[-1, 9] == pytest.approx(1.0, abs=1e-9)
    assert np.all(table[:, 10] >= 0)


def test_cli_zero_horizon_single_snapshot(tmp_path, relax4_data):
    relax4_data["time"]["T"] = 0.0
    relax4_data["snapshots"] = []
    relax4_data["name"] = "zero"
    path = _write(tmp_path, relax4_data, "zero")
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK
    assert [p.name for p in tmp_path.glob("zero_t*.csv")] == ["zero_t0.csv"]


def test_cli_simulate_and_compare(tmp_path, capsys):
    data = json.loads(bundled_config("telegraph_compare").read_text())
    data["mc"]["n"] = 20000
    data["mc"]["ks_tol"] = 0.05
    data["name"] = "tele"
    path = _write(tmp_path, data, "tele")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK
    header = (tmp_path / "tele_ensemble.csv").read_text().splitlines()[:2]
    assert header[0].startswith("# seed=7 N=20000 T=20")
    assert header[1] == "endpoint,end_state"
    capsys.readouterr()
    assert main(["compare", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 3


def test_cli_convergence(capsys):
    assert main(["convergence", "--config", "telegraph_convergence"]) == EXIT_OK
    assert "CHECK convergence_order PASS" in capsys.readouterr().out
