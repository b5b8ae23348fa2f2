import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from isoflow import __version__, cli


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_defaults_resolve_for_every_command():
    for command in cli.COMMANDS:
        params, seed = cli.resolve_config(command, {})
        assert seed == 0
        assert set(params) == set(cli.SCHEMA[command])


def test_unknown_and_invalid_keys_reported_together():
    with pytest.raises(cli.ConfigError) as err:
        cli.resolve_config("flow", {"bogus": "1", "other": "2", "dt": "-1"}, seed="x")
    msgs = " ".join(err.value.problems)
    assert "'bogus'" in msgs and "'other'" in msgs and "dt=" in msgs and "seed=" in msgs
    assert len(err.value.problems) == 4


def test_precedence_file_then_set_then_flag(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lambda = 3.0\nmu = 4.0\nnu = 0.5\nsamples = 200\n")
    out = tmp_path / "o"
    code = cli.main(["equilibrium", "--config", str(cfg), "--set", "mu=5.0", "--set", "nu=0.7",
                     "--nu", "0.9", "--out", str(out)])
    assert code == 0
    p = _manifest(out)["params"]
    assert (p["lambda"], p["mu"], p["nu"], p["samples"]) == (3.0, 5.0, 0.9, 200)


def test_config_errors_exit_2(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["flow", "--set", "nope=1", "--set", "dt=abc", "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "nope" in err and "dt=" in err
    assert not out.exists()
    assert cli.main(["flow", "--config", str(tmp_path / "missing.cfg"), "--out", str(out)]) == 2
    assert cli.main(["flow", "--set", "novalue", "--out", str(out)]) == 2


def test_guard_exit_3_keeps_failed_manifest(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["fpde", "--set", "max_steps=100", "--set", "n_theta=64", "--out", str(out)])
    assert code == 3
    m = _manifest(out)
    assert m["status"] == "failed" and m["error_type"] == "ConvergenceError"
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]
    assert cli.main(["flow", "--dt", "0.5", "--out", str(tmp_path / "f")]) == 3


def test_manifest_contents(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["equilibrium", "--seed", "0x10", "--set", "samples=100", "--out", str(out)]) == 0
    m = _manifest(out)
    assert m["command"] == "equilibrium" and m["seed"] == 16 and m["version"] == __version__
    assert m["status"] == "ok" and m["wall_clock_seconds"] >= 0
    assert m["outputs"] == ["density.csv", "summary.json"]
    assert "started_at" in m


def test_flow_outputs_follow_closed_form(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["flow", "--t-final", "2.0", "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["max_theta_error"] < 1e-8
    assert s["max_azimuth_error"] < 1e-8
    with open(out / "trajectory.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "t"


def test_figures_ground_state_averages(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["figures", "--which", "4", "--set", "samples=2000", "--out", str(out)]) == 0
    data = np.loadtxt(out / "thermal_averages.csv", delimiter=",", skiprows=1)
    T, qc, qm, se, a = data[0]
    assert np.isclose(T, 0.02)
    assert np.isclose(qc, 0.9, atol=1e-6)
    assert np.isclose(a, 1.0, atol=1e-6)
    assert np.all(data[:, 4] >= data[:, 1])


def test_thermalize_histogram(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["thermalize", "--paths", "200", "--t-final", "0.5", "--out", str(out)]) == 0
    with open(out / "histogram.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["bin_lo", "bin_hi", "empirical", "predicted"]
    assert np.isclose(sum(float(r[2]) for r in rows[1:]), 1.0)
    assert np.isclose(sum(float(r[3]) for r in rows[1:]), 1.0)


def test_module_entry_point_version():
    res = subprocess.run([sys.executable, "-m", "isoflow", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert __version__ in res.stdout
