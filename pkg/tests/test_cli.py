import subprocess
import sys

import pytest

from semcom_alloc.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from semcom_alloc.config import DdpgHyper, SystemConfig, dump_config

FAST = DdpgHyper(hidden=(8, 8), batch=8, warmup_episodes=1, steps_per_episode=5, train_episodes=1)


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(SystemConfig(users=2, ddpg=FAST)))
    return path


def test_train_then_evaluate(tmp_path, small_cfg):
    out = tmp_path / "t"
    assert main(["train", "--config", str(small_cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    assert {p.name for p in out.iterdir()} >= {"config.yaml", "agent.json", "train_metrics.csv"}
    ev = tmp_path / "e"
    assert main(["evaluate", "--config", str(small_cfg), "--agent", str(out / "agent.json"),
                 "--runs", "2", "--out", str(ev)]) == EXIT_OK
    assert (ev / "evaluate.csv").exists()


def test_sweeps_write_files(tmp_path, small_cfg):
    out = tmp_path / "s"
    assert main(["sweep-power", "--config", str(small_cfg), "--values", "0,10", "--runs", "2",
                 "--policy", "random", "--out", str(out)]) == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"sweep_power_random.csv", "sweep_power_random_runs.csv",
                                               "sweep_power_random.dat"}
    assert main(["sweep-users", "--config", str(small_cfg), "--values", "1,2", "--runs", "1",
                 "--out", str(out), "--quiet"]) == EXIT_OK
    assert (out / "sweep_users_agent.csv").exists()


def test_oracle_subcommand(tmp_path, small_cfg):
    out = tmp_path / "o"
    assert main(["oracle", "--config", str(small_cfg), "--steps", "2", "--out", str(out)]) == EXIT_OK
    assert len((out / "oracle.csv").read_text().splitlines()) == 3


def test_config_error_exit(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("users: many\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["sweep-power", "--values", "a,b", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["evaluate", "--policy", "agent", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_runtime_error_exit(tmp_path, small_cfg):
    assert main(["evaluate", "--config", str(small_cfg), "--agent", str(tmp_path / "none.json"),
                 "--out", str(tmp_path)]) == EXIT_RUNTIME
    big = tmp_path / "big.yaml"
    big.write_text(dump_config(SystemConfig(users=4, ddpg=FAST)))
    assert main(["oracle", "--config", str(big), "--steps", "1", "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_verify_exit_codes(monkeypatch):
    from semcom_alloc import checks

    assert main(["verify", "--only", "2", "3"]) == EXIT_OK
    monkeypatch.setattr(checks, "run_check", lambda n: checks.CheckResult(n, "stub", False, "forced"))
    assert main(["verify", "--only", "2"]) == EXIT_CHECK


def test_module_entry_point(tmp_path, small_cfg):
    proc = subprocess.run([sys.executable, "-m", "semcom_alloc", "train", "--config", str(tmp_path / "missing.yaml"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "config error" in proc.stderr
