import json

import pytest

from micromacro.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main, parse_values
from micromacro.errors import ConfigurationError


@pytest.fixture(autouse=True)
def no_profiles(monkeypatch):
    monkeypatch.delenv("MICROMACRO_PROFILES", raising=False)


def manifest(directory, prefix="run"):
    return json.loads((directory / f"{prefix}-manifest.json").read_text())


def test_run_writes_tables_and_manifest(base_config, write_config, tmp_path):
    out = tmp_path / "out"
    assert main(["--output-dir", str(out), "run", str(write_config(base_config))]) == EXIT_OK
    trajectory = (out / "run-trajectory.csv").read_text().splitlines()
    assert trajectory[0].startswith("step,t,dt_used,halvings,status")
    assert len(trajectory) == 3
    assert (out / "run-ensemble.csv").exists()
    record = manifest(out)
    assert record["exit_status"] == 0
    assert record["seed"] == 7
    assert record["failures"] == []
    assert str(out / "run-trajectory.csv") in record["outputs"]


def test_run_is_deterministic(base_config, write_config, tmp_path):
    config = str(write_config(base_config))
    main(["--output-dir", str(tmp_path / "a"), "run", config])
    main(["--output-dir", str(tmp_path / "b"), "run", config])
    first = (tmp_path / "a" / "run-trajectory.csv").read_bytes()
    assert first == (tmp_path / "b" / "run-trajectory.csv").read_bytes()
    assert (tmp_path / "a" / "run-ensemble.csv").read_bytes() == (
        tmp_path / "b" / "run-ensemble.csv"
    ).read_bytes()


def test_missing_key_exits_with_configuration_status(base_config, write_config, tmp_path):
    del base_config["macro"]["dt"]
    out = tmp_path / "out"
    assert main(["--output-dir", str(out), "run", str(write_config(base_config))]) == EXIT_CONFIG
    record = manifest(out)
    assert record["exit_status"] == EXIT_CONFIG
    assert "macro.dt" in record["failures"][0]
    assert record["config"] == {}


def test_failed_matching_keeps_partial_trajectory(base_config, write_config, tmp_path):
    base_config["solver"] = {"max_iter": 1}
    out = tmp_path / "out"
    assert main(["--output-dir", str(out), "run", str(write_config(base_config))]) == EXIT_FAILED
    assert (out / "run-trajectory.csv").exists()
    assert "MatchFailed" in manifest(out)["failures"][0]


def test_prefix_names_the_files(base_config, write_config, tmp_path):
    base_config["output"] = {"prefix": "diffusion"}
    out = tmp_path / "out"
    assert main(["--output-dir", str(out), "run", str(write_config(base_config))]) == EXIT_OK
    assert (out / "diffusion-trajectory.csv").exists()
    assert manifest(out, "diffusion")["exit_status"] == 0


def test_particle_sweep(base_config, write_config, tmp_path):
    base_config["sweep"] = {"bootstrap_replicates": 10}
    out = tmp_path / "out"
    argv = ["--output-dir", str(out), "sweep", str(write_config(base_config))]
    assert main(argv + ["--axis", "particles", "--values", "100,200"]) == EXIT_OK
    rows = (out / "run-sweep-particles.csv").read_text().splitlines()
    assert rows[0].startswith("value,error_sin1,error_cos1,error_bump")
    assert len(rows) == 3


def test_unknown_sweep_axis(base_config, write_config, tmp_path):
    argv = ["--output-dir", str(tmp_path), "sweep", str(write_config(base_config))]
    assert main(argv + ["--axis", "temperature", "--values", "1"]) == EXIT_CONFIG


def test_widening_gaussian_oracle(base_config, write_config, tmp_path):
    argv = ["--output-dir", str(tmp_path), "oracle", str(write_config(base_config))]
    assert main(argv + ["--probe", "widening-gaussian"]) == EXIT_OK
    rows = (tmp_path / "run-oracle-widening-gaussian.csv").read_text().splitlines()
    assert rows[0] == "dt,entropy,tv,ratio,closed_form,slope,limit,expected_limit"
    assert len(rows) == 5


def test_unknown_oracle_name(base_config, write_config, tmp_path):
    argv = ["--output-dir", str(tmp_path), "oracle", str(write_config(base_config))]
    assert main(argv + ["--probe", "nothing"]) == EXIT_CONFIG


def test_moment_gain(base_config, write_config, tmp_path):
    argv = ["--output-dir", str(tmp_path), "moment-gain", str(write_config(base_config))]
    assert main(argv) == EXIT_OK
    rows = (tmp_path / "run-moment-gain.csv").read_text().splitlines()
    assert rows[0] == "index,candidate,target,gain,selected"
    assert len(rows) == 4
    assert sum(row.endswith(",1") for row in rows[1:]) == 1


def test_moment_gain_needs_candidates(base_config, write_config, tmp_path):
    base_config["moment_gain"] = {"candidates": []}
    argv = ["--output-dir", str(tmp_path), "moment-gain", str(write_config(base_config))]
    assert main(argv) == EXIT_CONFIG
    assert "moment_gain.candidates" in manifest(tmp_path)["failures"][0]


def test_parse_values():
    assert parse_values("0.1, 0.05,") == [0.1, 0.05]
    with pytest.raises(ConfigurationError):
        parse_values("a,b")
    with pytest.raises(ConfigurationError):
        parse_values(" , ")


def test_step_collapse_keeps_partial_trajectory(base_config, write_config, tmp_path):
    base_config["macro"] = {"dt": 0.2, "horizon": 0.2}
    base_config["ensemble"]["initial"] = {"kind": "point", "mean": 0.5}
    base_config["adaptive"] = {"max_halvings": 0}
    base_config["solver"] = {"lambda_cap": 5.0}
    out = tmp_path / "out"
    assert main(["--output-dir", str(out), "run", str(write_config(base_config))]) == EXIT_FAILED
    assert (out / "run-trajectory.csv").exists()
    record = manifest(out)
    assert record["exit_status"] == EXIT_FAILED
    assert record["failures"][0].startswith("StepCollapse")
    assert "infeasible" in record["failures"][0]
