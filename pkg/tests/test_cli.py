import json

from fblmpc.cli import main
from fblmpc.scenario import dump_scenario, default_scenario


def _short_config(tmp_path, **changes):
    path = tmp_path / "scenario.cfg"
    path.write_text(dump_scenario(default_scenario().replace(mission_cap=3, **changes)))
    return str(path)


def test_run_writes_trace(tmp_path, capsys):
    cfg = _short_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--seed", "1", "--out", str(out), "--format", "csv"]) == 0
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok" and status["summary"]["steps"] == 3
    text = (out / "trace.csv").read_text()
    assert text.startswith("# schema_version=1\nt,r_x")


def test_run_json_to_stdout(tmp_path, capsys):
    assert main(["run", "--config", _short_config(tmp_path), "--disturbance", "6"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["scheme"] == "online-mpc" and doc["termination"] == "step-cap"


def test_fixed_path_baseline(tmp_path, capsys):
    assert main(["baseline", "--config", _short_config(tmp_path), "--scheme", "bf-zf"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["steps"] == 3 and 0 <= doc["satisfaction_pct"] <= 100


def test_sweep_to_directory(tmp_path, capsys):
    out = tmp_path / "sw"
    argv = ["sweep", "--config", _short_config(tmp_path), "--param", "p_com_max", "--values", "5,10",
            "--scheme", "bf-mrt", "--fixed-trajectory", "--out", str(out)]
    assert main(argv) == 0
    assert json.loads(capsys.readouterr().out)["failures"] == 0
    doc = json.loads((out / "sweep.json").read_text())
    assert [a["sweep_value"] for a in doc["aggregates"] if a["metric"] == "sum_rate"] == [5.0, 10.0]


def test_error_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "error" and err["kind"] == "config-unreadable"
    bad = tmp_path / "bad.cfg"
    bad.write_text("error_prob = 2\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert json.loads(capsys.readouterr().err)["kind"] == "config"
    assert main(["sweep", "--param", "bogus"]) == 2
    assert main(["run", "--scheme", "bf-zf", "--config", _short_config(tmp_path)]) == 2
    assert main(["sweep", "--values", "1"]) == 2
