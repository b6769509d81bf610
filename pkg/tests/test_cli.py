"""CLI subcommands: exit codes, output, and the record/replay/run flows."""

import json
import socket

import pytest
import yaml

from teleop.cli import (
    ENV_CONSOLE_PORT,
    ENV_PROBE_ENDPOINT,
    ENV_STATE_ENDPOINT,
    RunManifest,
    TeleopNode,
    _default_console_port,
    _default_probe_endpoint,
    _default_state_endpoint,
    main,
)
from teleop.config import serialize_config

from conftest import CONFIG_DIR, SCENARIO_DIR, free_port, make_mini_follower, make_mini_leader

G1_LEADER = str(CONFIG_DIR / "g1_leader.yaml")
G1_FOLLOWER = str(CONFIG_DIR / "g1_follower_locomanip.yaml")


@pytest.fixture
def mini_pair_files(tmp_path):
    leader = tmp_path / "leader.yaml"
    follower = tmp_path / "follower.yaml"
    leader.write_text(serialize_config(make_mini_leader()))
    follower.write_text(serialize_config(make_mini_follower()))
    return str(leader), str(follower)


# -- endpoint defaults --------------------------------------------------------------


def test_env_overrides(monkeypatch):
    monkeypatch.setenv(ENV_STATE_ENDPOINT, "10.0.0.7:4242")
    monkeypatch.setenv(ENV_PROBE_ENDPOINT, "10.0.0.7:4243")
    monkeypatch.setenv(ENV_CONSOLE_PORT, "9999")
    assert _default_state_endpoint() == "10.0.0.7:4242"
    assert _default_probe_endpoint() == "10.0.0.7:4243"
    assert _default_console_port() == 9999


def test_manifest_validation(mini_pair_files):
    leader, follower = mini_pair_files
    with pytest.raises(ValueError, match="rate_hz"):
        RunManifest(leader, follower, rate_hz=5.0).validate()
    with pytest.raises(ValueError, match="duration"):
        RunManifest(leader, follower, duration_s=0.0).validate()


# -- validate -----------------------------------------------------------------------


def test_validate_leader_only(capsys):
    assert main(["validate", G1_LEADER]) == 0
    out = capsys.readouterr().out
    assert "ok" in out and "leader" in out


def test_validate_pair_prints_mapping_summary(capsys):
    assert main(["validate", G1_LEADER, G1_FOLLOWER]) == 0
    out = capsys.readouterr().out
    assert "follower" in out
    assert "14 mapped" in out


def test_validate_missing_file(capsys):
    assert main(["validate", "/no/such/config.yaml"]) == 1
    assert "error:" in capsys.readouterr().err


def test_validate_broken_config(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("role: leader\nlimbs: {not: [a, list\n")
    assert main(["validate", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


# -- scenario -----------------------------------------------------------------------


def test_scenario_missing_file(capsys):
    assert main(["scenario", "/no/such/scenario.yaml"]) == 2
    assert "usage error" in capsys.readouterr().err


def test_scenario_pass_prints_events(capsys):
    assert main(["scenario", str(SCENARIO_DIR / "fullbody.yaml")]) == 0
    out = capsys.readouterr().out
    assert "session_activated" in out
    assert "PASS" in out


def test_scenario_failure_exit_code(tmp_path, capsys):
    doc = yaml.safe_load((SCENARIO_DIR / "fullbody.yaml").read_text())
    doc["name"] = "doomed"
    doc["assertions"] = [{"kind": "final_phase", "expect": "idle"}]
    # configs are referenced relative to the script, so keep it next to them
    script = SCENARIO_DIR / "_doomed_tmp.yaml"
    script.write_text(yaml.safe_dump(doc))
    try:
        assert main(["scenario", str(script)]) == 1
        err = capsys.readouterr().err
        assert "FAIL doomed" in err
    finally:
        script.unlink()


def test_scenario_log_dir(tmp_path, capsys):
    log_dir = tmp_path / "logs"
    assert main(
        ["scenario", str(SCENARIO_DIR / "crawl.yaml"), "--log-dir", str(log_dir)]
    ) == 0
    assert (log_dir / "events.log").is_file()
    assert (log_dir / "trajectory.log").is_file()


# -- record / replay ----------------------------------------------------------------


def test_record_then_replay(mini_pair_files, tmp_path, capsys):
    leader, follower = mini_pair_files
    out = tmp_path / "sweep.chtrace"
    assert main(
        [
            "record",
            "--leader", leader,
            "--source", "synth:sine:0.2:0.5",
            "--rate", "100",
            "--duration", "0.5",
            "--out", str(out),
        ]
    ) == 0
    assert "recorded 50 frames" in capsys.readouterr().out
    assert out.is_file()

    assert main(
        ["replay", str(out), "--leader", leader, "--follower", follower]
    ) == 0
    text = capsys.readouterr().out
    assert "replayed 50 frames" in text
    assert "final phase idle" in text  # a sine sweep never closes the grippers


def test_record_unknown_source(mini_pair_files, tmp_path, capsys):
    leader, _ = mini_pair_files
    rc = main(
        [
            "record",
            "--leader", leader,
            "--source", "synth:warble",
            "--out", str(tmp_path / "x.chtrace"),
        ]
    )
    assert rc == 1
    assert "unknown synth kind" in capsys.readouterr().err


def test_replay_corrupt_trace(mini_pair_files, tmp_path, capsys):
    leader, follower = mini_pair_files
    bad = tmp_path / "bad.chtrace"
    bad.write_bytes(b"garbage, no header newline")
    rc = main(["replay", str(bad), "--leader", leader, "--follower", follower])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# -- bench-latency ------------------------------------------------------------------


def test_bench_latency_report(tmp_path, capsys):
    report = tmp_path / "latency.json"
    endpoint = f"127.0.0.1:{free_port()}"
    rc = main(
        [
            "bench-latency",
            "--duration", "0.3",
            "--rate", "200",
            "--endpoint", endpoint,
            "--report", str(report),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "latency over" in out
    doc = json.loads(report.read_text())
    for key in ("mean_ms", "median_ms", "p99_ms", "n_sent", "n_received"):
        assert key in doc
    assert doc["n_received"] > 0


def test_bench_latency_dead_endpoint(tmp_path, capsys):
    # occupy the port with a socket that never echoes; the bench cannot bind
    # its own echo there and times out with too few samples
    mute = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    mute.bind(("127.0.0.1", 0))
    endpoint = f"127.0.0.1:{mute.getsockname()[1]}"
    try:
        rc = main(
            [
                "bench-latency",
                "--duration", "0.2",
                "--rate", "100",
                "--endpoint", endpoint,
                "--report", str(tmp_path / "r.json"),
            ]
        )
    finally:
        mute.close()
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# -- run ----------------------------------------------------------------------------


def test_run_smoke(mini_pair_files, tmp_path, monkeypatch, capsys):
    leader, follower = mini_pair_files
    monkeypatch.setenv(ENV_PROBE_ENDPOINT, f"127.0.0.1:{free_port()}")
    log_dir = tmp_path / "logs"
    rc = main(
        [
            "run",
            "--leader", leader,
            "--follower", follower,
            "--source", "synth:hold",
            "--endpoint", f"127.0.0.1:{free_port()}",
            "--rate", "100",
            "--duration", "0.5",
            "--log-dir", str(log_dir),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "node up:" in out
    assert "shutdown:" in out
    assert (log_dir / "events.log").exists()


def test_node_start_stop_releases_ports(mini_pair_files, monkeypatch):
    leader, follower = mini_pair_files
    monkeypatch.setenv(ENV_PROBE_ENDPOINT, f"127.0.0.1:{free_port()}")
    manifest = RunManifest(
        leader=leader,
        follower=follower,
        endpoint=f"127.0.0.1:{free_port()}",
        rate_hz=100.0,
    )
    node = TeleopNode(manifest)
    with node:
        import time

        time.sleep(0.3)
        assert node.ticks > 10
    ticks = node.ticks
    # everything unbound: an immediate restart on the same ports must work
    node2 = TeleopNode(manifest)
    with node2:
        pass
    assert ticks > 0


def test_argument_validation_exits_2(mini_pair_files, capsys):
    leader, follower = mini_pair_files
    with pytest.raises(SystemExit) as err:
        main(["record", "--leader", leader, "--rate", "0", "--out", "x.chtrace"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == 2
