import json

import numpy as np
import pytest

from mfcloads import cli
from mfcloads.io import read_csv, write_csv
from mfcloads.series import TimeSeries


def run(args, tmp_path, capsys=None):
    return cli.main([*args, "--out", str(tmp_path)])


def test_steady_json(tmp_path):
    assert run(["steady"], tmp_path) == 0
    data = json.loads((tmp_path / "steady.json").read_text())
    assert data["n_out_st"] == pytest.approx(1 / 26, abs=1e-15)
    assert data["meta"]["config"]["model"]["r"] == 100.0


def test_spectrum_contains_reference_rows(tmp_path):
    assert run(["spectrum", "--svg"], tmp_path) == 0
    meta, cols, rows = read_csv(tmp_path / "spectrum.csv")
    lam = {(r[1], float(r[2]), r[7]): complex(float(r[3]), float(r[4])) for r in rows
           if r[7] == "true"}
    assert lam[("-", 0.0, "true")] == pytest.approx(0.014 - 6.0j, rel=0.05)
    assert lam[("-", 200.0, "true")] == pytest.approx(0.93, rel=0.05)
    assert lam[("+", 0.0, "true")] == pytest.approx(0.055 - 12j, rel=0.05)
    assert (tmp_path / "spectrum.svg").exists()
    assert meta["version"] == cli.__version__


def test_simulate_byte_identical(tmp_path):
    args = ["simulate", "--n_devices=3000", "--t_end=1", "--seed=17"]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    meta, cols, rows = read_csv(tmp_path / "a" / "simulate.csv")
    assert meta["seed"] == 17 and cols[:2] == ["t", "n_up"]


def test_artifact_reproducible_from_header(tmp_path):
    assert cli.main(["simulate", "--n_devices=2000", "--t_end=0.5", "--seed=3",
                     "--out", str(tmp_path / "a")]) == 0
    meta, _, _ = read_csv(tmp_path / "a" / "simulate.csv")
    import yaml
    (tmp_path / "echo.yaml").write_text(yaml.safe_dump(meta["config"]))
    assert cli.main(["simulate", "--config", str(tmp_path / "echo.yaml"),
                     "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == \
        (tmp_path / "b" / "simulate.csv").read_bytes()


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["steady"]) == 0
    assert (tmp_path / "env" / "steady.json").exists()


def test_pde_and_fit(tmp_path):
    assert run(["pde", "--t_end=25", "--s=200", "--cells_per_band=100", "--svg"], tmp_path) == 0
    assert run(["fit", f"--fit.input={tmp_path / 'pde.csv'}", "--t_min=5", "--s=200", "--svg"],
               tmp_path) == 0
    rep = json.loads((tmp_path / "fit.json").read_text())
    assert rep["fit"]["rate"] == pytest.approx(0.93, rel=0.15)
    assert rep["comparison"]["rate_ok"]


def test_sweep(tmp_path):
    assert run(["sweep", "--r=[2,10,100]", "--s=[20]", "--svg"], tmp_path) == 0
    _, cols, rows = read_csv(tmp_path / "regime_map.csv")
    assert [r[2] for r in rows] == ["SLOWER", "FASTER", "SUPER_RELAXATION"]


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  r: [1\n")
    assert run(["steady", "--config", str(bad)], tmp_path) == cli.EXIT_CONFIG
    assert "line" in capsys.readouterr().err
    bad.write_text("model:\n  rr: 1\n")
    assert run(["steady", "--config", str(bad)], tmp_path) == cli.EXIT_CONFIG
    assert "model.rr" in capsys.readouterr().err
    assert run(["steady", "--bogus=1"], tmp_path) == cli.EXIT_CONFIG
    assert run(["steady", "--r=-5"], tmp_path) == cli.EXIT_CONFIG
    assert run(["simulate", "--n_devices=abc"], tmp_path) == cli.EXIT_CONFIG
    bad.write_text("mode: pde\n")
    assert run(["steady", "--config", str(bad)], tmp_path) == cli.EXIT_CONFIG


def test_solver_failure_code(tmp_path):
    t = np.linspace(0, 1, 3)
    TimeSeries(t, 0.5 + t, t).to_csv(tmp_path / "short.csv")
    assert run(["fit", f"--fit.input={tmp_path / 'short.csv'}"], tmp_path) == cli.EXIT_SOLVER


def test_validate_exit_codes(tmp_path, monkeypatch):
    from mfcloads import validation
    assert run(["validate", "--criteria=[1]"], tmp_path) == 0
    monkeypatch.setattr(validation, "CHECKS",
                        (("always fails", lambda: (False, {})),))
    assert run(["validate"], tmp_path) == cli.EXIT_VALIDATION


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["a", "b"], [[0.1, 1 / 3], [np.nan, 2]], ["k: 1"])
    meta, cols, rows = read_csv(path)
    assert meta == {"k": 1} and float(rows[0][1]) == 1 / 3 and rows[1][0] == "nan"
