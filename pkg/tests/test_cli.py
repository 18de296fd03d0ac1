import json
import math

import numpy as np
import pytest

from slowfast import artifacts
from slowfast.cli import main, run
from slowfast.config import ExperimentConfig, load_config, make_config
from slowfast.errors import ConfigError

SMALL = dict(basis_size=8, T=1 / 16, dt_macro=1 / 64, epsilon_ladder=[1 / 8, 1 / 16, 1 / 32], samples=16, seed=3)


def _write(tmp_path, name="cfg.json", **values):
    p = tmp_path / name
    p.write_text(json.dumps(values))
    return p


def test_config_rejects_unknown_and_invalid_fields():
    with pytest.raises(ConfigError) as err:
        make_config(model_name="tanh", colour="red", T=-1.0)
    assert set(err.value.problems) == {"colour", "T"}
    with pytest.raises(ConfigError) as err:
        make_config(epsilon_ladder=[0.1, 0.2])
    assert "epsilon_ladder" in err.value.problems
    with pytest.raises(ConfigError):
        make_config(micro_substeps=0)
    assert make_config(micro_substeps=12).micro_substeps == 12


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_overrides_and_hashes(tmp_path):
    p = _write(tmp_path, seed=1, output_dir="a")
    cfg = load_config(p, seed=9, output_dir=None)
    assert cfg.seed == 9 and cfg.output_dir == "a"
    assert cfg.config_hash() == ExperimentConfig(seed=9, output_dir="a").config_hash()
    assert cfg.config_hash() != load_config(p).config_hash()
    assert len(cfg.content_id()) == 40


def test_exit_code_for_schema_violation(tmp_path):
    out = tmp_path / "out"
    code, report = run("simulate", _write(tmp_path, basis_size=-4, output_dir=str(out)), None)
    assert code == 2
    assert "basis_size" in report["problems"]
    code, _ = run("plot", _write(tmp_path, name="ok.json"), str(out))
    assert code == 2


def test_check_model_tanh(tmp_path):
    code, report = run("check-model", _write(tmp_path, model_name="tanh", kappa=1.0), str(tmp_path / "o"))
    assert code == 0
    assert report["strict"] is True
    assert report["margin"] == pytest.approx(math.pi**2 - 1.0, rel=1e-10)
    saved = json.loads((tmp_path / "o" / "dissipativity.json").read_text())
    assert saved["strict"] is True


def test_simulate_zero_model_mode_one_decays(tmp_path):
    cfg = _write(tmp_path, model_name="zero", basis_size=8, T=0.25, dt_macro=1 / 32, epsilon_ladder=[0.1])
    code, _ = run("simulate", cfg, str(tmp_path / "o"))
    assert code == 0
    rows = [r for r in artifacts.read_csv(tmp_path / "o" / "trajectory.csv") if r["mode"] == "1"]
    t = np.array([float(r["t"]) for r in rows])
    x1 = np.array([float(r["x_k"]) for r in rows])
    np.testing.assert_allclose(x1, x1[0] * np.exp(-math.pi**2 * t), rtol=1e-13)
    assert set(rows[0]) == {"t", "mode", "x_k", "y_k"}
    side = json.loads((tmp_path / "o" / "trajectory.json").read_text())
    assert side["seed"] == 20240611


def test_manifest_alone_reproduces_the_run(tmp_path):
    cfg = _write(tmp_path, **SMALL)
    assert run("strong-order", cfg, str(tmp_path / "a"), seed=None, threads=None)[0] in (0, 3)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest) >= {"config", "config_hash", "content_id", "seed", "versions", "created"}
    replay = _write(tmp_path, name="replay.json", **{**manifest["config"], "output_dir": str(tmp_path / "b")})
    run("strong-order", replay, None)
    a = (tmp_path / "a" / "error_table.csv").read_bytes()
    b = (tmp_path / "b" / "error_table.csv").read_bytes()
    assert a == b
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config_hash"] != manifest["config_hash"]


def test_order_band_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, **SMALL, slope_band=[5.0, 6.0])
    code, report = run("strong-order", cfg, str(tmp_path / "o"))
    assert code == 3
    assert report["error"] == "acceptance_band"
    assert isinstance(report["slope"], float)
    assert json.loads((tmp_path / "o" / "error.json").read_text())["exit_code"] == 3
    assert (tmp_path / "o" / "error_table.csv").exists()


def test_weak_inconclusive_is_not_a_failure(tmp_path):
    cfg = _write(tmp_path, **SMALL, phi_name="constant")
    code, report = run("weak-order", cfg, str(tmp_path / "o"))
    assert code == 0
    assert report["status"] == "inconclusive"
    rows = artifacts.read_csv(tmp_path / "o" / "error_table.csv")
    assert [r["excluded_flag"] for r in rows] == ["1", "1", "1"]
    table = artifacts.read_error_table(tmp_path / "o" / "error_table.csv")
    assert [r.epsilon for r in table.rows] == SMALL["epsilon_ladder"]


def test_hasminskii_command_zero_model(tmp_path):
    cfg = _write(tmp_path, **SMALL, model_name="zero")
    code, report = run("hasminskii", cfg, str(tmp_path / "o"))
    # all gaps are exactly zero, so no row is usable for a fit
    assert code == 3
    rows = artifacts.read_csv(tmp_path / "o" / "error_table.csv")
    assert all(float(r["error"]) == 0.0 for r in rows)


def test_fbar_and_averaged_commands(tmp_path):
    cfg = _write(tmp_path, model_name="linear", basis_size=8, fbar_horizon=2.0, fbar_ensemble=4, T=0.125, dt_macro=1 / 64)
    code, report = run("fbar", cfg, str(tmp_path / "f"))
    assert code == 0 and "oracle_distance" in report
    header = (tmp_path / "f" / "fbar.csv").read_text().splitlines()[0]
    assert header == "mode,value,standard_error"
    code, _ = run("averaged", cfg, str(tmp_path / "a"))
    assert code == 0
    assert len(artifacts.read_csv(tmp_path / "a" / "averaged.csv")) == 9 * 8


def test_mixing_command(tmp_path):
    cfg = _write(tmp_path, model_name="linear", basis_size=8, mixing_ensemble=200, mixing_time_grid=[0.0, 0.1, 0.2, 0.3])
    code, report = run("mixing", cfg, str(tmp_path / "o"))
    assert code == 0
    assert report["verdict"] in ("mixing confirmed", "not confirmed", "inconclusive")
    assert (tmp_path / "o" / "mixing.csv").read_text().startswith("t,ftilde_norm,standard_error\n")
    assert "decay_rate" in json.loads((tmp_path / "o" / "mixing.json").read_text())


def test_blow_up_exit_code(tmp_path, monkeypatch):
    from slowfast import cli
    from slowfast.errors import EvaluationError

    def boom(cfg):
        raise EvaluationError("trajectory produced non-finite values")

    monkeypatch.setattr(cli, "strong_error_ladder", boom)
    code, report = run("strong-order", _write(tmp_path, **SMALL), str(tmp_path / "o"))
    assert code == 4 and report["error"] == "numerical_blowup"


def test_byte_identical_csv_on_rerun(tmp_path):
    cfg = _write(tmp_path, **SMALL)
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / d), "-q"]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_main_reports_on_stderr(tmp_path, capsys):
    code = main(["check-model", "--config", str(_write(tmp_path, basis_size=0)), "--output", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and "basis_size" in err["problems"]
