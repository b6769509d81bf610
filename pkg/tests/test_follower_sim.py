"""Follower sim: joint tracking, exact-arc base integration, scenario runner."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teleop.config import serialize_config
from teleop.follower_sim import (
    FollowerState,
    ScriptError,
    TrackingParams,
    initial_state,
    load_scenario,
    run_scenario,
    step_follower,
    wrap_angle,
)
from teleop.leader_source import Trace, save_trace, schema_fingerprint
from teleop.locomotion import VelocityCommand
from teleop.session import CommandSet

from conftest import SCENARIO_DIR, make_mini_follower, make_mini_leader


def vel_cmd(vx=0.0, vy=0.0, wz=0.0, targets=None, grippers=None):
    return CommandSet(
        stamp_ns=0,
        targets=targets,
        grippers=grippers,
        velocity=VelocityCommand(vx, vy, wz),
        torques=np.zeros(0),
    )


@pytest.fixture
def sim():
    cfg = make_mini_follower()
    return cfg, initial_state(cfg), TrackingParams.from_config(cfg)


# -- angle wrapping ---------------------------------------------------------------


def test_wrap_angle_interval():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(2 * math.pi) == pytest.approx(0.0)


@settings(max_examples=200, deadline=None)
@given(theta=st.floats(-50.0, 50.0), k=st.integers(-5, 5))
def test_wrap_angle_periodic(theta, k):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi + 1e-12
    assert abs(wrap_angle(theta + 2 * math.pi * k) - w) < 1e-9


# -- joint tracking ----------------------------------------------------------------


def test_dt_bounds(sim):
    cfg, state, params = sim
    for dt in (0.0, -0.01, 0.11):
        with pytest.raises(ValueError):
            step_follower(state, vel_cmd(), dt, params)


def test_none_command_holds_exactly(sim):
    cfg, state, params = sim
    nxt = step_follower(state, vel_cmd(), 0.01, params)
    assert np.array_equal(nxt.joints, state.joints)
    assert np.array_equal(nxt.grippers, state.grippers)
    assert nxt.time_ns == 10_000_000


def test_exponential_approach(sim):
    cfg, state, params = sim
    n = len(cfg.schema())
    target = np.zeros(n)
    target[0] = 0.02  # small enough that the vel cap stays inactive
    nxt = step_follower(state, vel_cmd(targets=target), 0.01, params)
    expect = 0.02 * (1.0 - math.exp(-0.01 / 0.05))
    assert nxt.joints[0] == pytest.approx(expect, rel=1e-9)


def test_velocity_cap_engages(sim):
    cfg, state, params = sim
    n = len(cfg.schema())
    target = np.zeros(n)
    target[0] = 1.4
    nxt = step_follower(state, vel_cmd(targets=target), 0.01, params)
    cap = float(params.vel_cap[0]) * 0.01
    assert nxt.joints[0] == pytest.approx(cap)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_tracking_respects_cap_and_limits(data):
    cfg = make_mini_follower()
    state, params = initial_state(cfg), TrackingParams.from_config(cfg)
    n = len(cfg.schema())
    q = state.joints
    for _ in range(10):
        target = np.array([data.draw(st.floats(-5, 5)) for _ in range(n)])
        nxt = step_follower(
            FollowerState(q, state.grippers, state.base_pose, state.base_orientation),
            vel_cmd(targets=target),
            0.01,
            params,
        )
        assert np.all(np.abs(nxt.joints - q) <= params.vel_cap * 0.01 + 1e-12)
        assert np.all(nxt.joints >= params.low - 1e-12)
        assert np.all(nxt.joints <= params.high + 1e-12)
        q = nxt.joints


def test_grippers_clip(sim):
    cfg, state, params = sim
    nxt = step_follower(state, vel_cmd(grippers=np.array([1.7, -0.4])), 0.01, params)
    assert np.array_equal(nxt.grippers, [1.0, 0.0])


def test_orientation_command_normalized(sim):
    cfg, state, params = sim
    cmd = vel_cmd()
    cmd = CommandSet(
        stamp_ns=0,
        targets=None,
        grippers=None,
        velocity=VelocityCommand(),
        torques=np.zeros(0),
        base_orientation=np.array([2.0, 0.0, 0.0, 0.0]),
    )
    nxt = step_follower(state, cmd, 0.01, params)
    assert np.allclose(nxt.base_orientation, [1.0, 0.0, 0.0, 0.0])


# -- base integration ---------------------------------------------------------------


def test_straight_line_hand_check(sim):
    cfg, state, params = sim
    for _ in range(10):
        state = step_follower(state, vel_cmd(vx=0.5), 0.01, params)
    assert state.base_pose[0] == pytest.approx(0.05, abs=1e-12)
    assert state.base_pose[1] == pytest.approx(0.0, abs=1e-12)
    assert state.base_pose[2] == pytest.approx(0.0, abs=1e-12)


def test_pure_rotation_keeps_position(sim):
    cfg, state, params = sim
    for _ in range(100):
        state = step_follower(state, vel_cmd(wz=1.0), 0.01, params)
    assert state.base_pose[0] == pytest.approx(0.0, abs=1e-12)
    assert state.base_pose[1] == pytest.approx(0.0, abs=1e-12)
    assert state.base_pose[2] == pytest.approx(1.0, abs=1e-9)


def test_quarter_circle_arc(sim):
    # vx with constant wz traces a circle of radius vx/wz; 100 ticks of
    # wz = pi/2 rad/s at 100 Hz is exactly a quarter turn
    cfg, state, params = sim
    vx, wz = 0.4, math.pi / 2
    for _ in range(100):
        state = step_follower(state, vel_cmd(vx=vx, wz=wz), 0.01, params)
    r = vx / wz
    assert state.base_pose[0] == pytest.approx(r, abs=1e-9)
    assert state.base_pose[1] == pytest.approx(r, abs=1e-9)
    assert state.base_pose[2] == pytest.approx(math.pi / 2, abs=1e-9)


def euler_reference(cmds, dt, substeps=100):
    """Independent fine-step Euler integrator used as the oracle."""
    x = y = th = 0.0
    dtf = dt / substeps
    k = np.arange(substeps)
    for vx, vy, wz in cmds:
        ths = th + wz * dtf * k
        x += dtf * float(np.sum(vx * np.cos(ths) - vy * np.sin(ths)))
        y += dtf * float(np.sum(vx * np.sin(ths) + vy * np.cos(ths)))
        th += wz * dt
    return x, y, th


def test_base_integration_matches_fine_reference(sim):
    cfg, state, params = sim
    rng = np.random.default_rng(42)
    n_ticks = 1000  # 10 s at 100 Hz
    cmds = np.stack(
        [
            rng.uniform(-0.6, 0.6, n_ticks),
            rng.uniform(-0.4, 0.4, n_ticks),
            rng.uniform(-1.0, 1.0, n_ticks),
        ],
        axis=1,
    )
    for vx, vy, wz in cmds:
        state = step_follower(state, vel_cmd(vx=vx, vy=vy, wz=wz), 0.01, params)
    rx, ry, rth = euler_reference(cmds, 0.01)
    err = math.hypot(state.base_pose[0] - rx, state.base_pose[1] - ry)
    assert err < 1e-3, f"drift {err:.2e} m vs 100x finer reference"
    assert abs(wrap_angle(rth) - state.base_pose[2]) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_base_integration_random_twists(data):
    cfg = make_mini_follower()
    state, params = initial_state(cfg), TrackingParams.from_config(cfg)
    cmds = [
        (
            data.draw(st.floats(-0.6, 0.6)),
            data.draw(st.floats(-0.4, 0.4)),
            data.draw(st.floats(-1.0, 1.0)),
        )
        for _ in range(50)
    ]
    for vx, vy, wz in cmds:
        state = step_follower(state, vel_cmd(vx=vx, vy=vy, wz=wz), 0.01, params)
    rx, ry, _ = euler_reference(cmds, 0.01)
    assert math.hypot(state.base_pose[0] - rx, state.base_pose[1] - ry) < 1e-4


# -- scenario runner -----------------------------------------------------------------


@pytest.fixture
def mini_scenario_doc(tmp_path):
    (tmp_path / "leader.yaml").write_text(serialize_config(make_mini_leader()))
    (tmp_path / "follower.yaml").write_text(serialize_config(make_mini_follower()))
    return {
        "name": "mini",
        "leader": "leader.yaml",
        "follower": "follower.yaml",
        "rate_hz": 100.0,
        "duration_s": 3.6,
        "source": {
            "kind": "gesture_script",
            "events": [
                {"at": 0.1, "triggers": [1.0, 1.0]},
                {"at": 3.3, "triggers": [0.0, 0.0]},
            ],
        },
        "assertions": [
            {"kind": "events", "expect": ["session_activated none", "sync_complete none"]},
            {"kind": "final_phase", "expect": "active"},
            {"kind": "displacement_during", "phase": "idle", "dist_max": 0.0},
            {"kind": "joint_holds", "joint": "f_left_hip_roll", "value": "home"},
        ],
        "_dir": tmp_path,
    }


def test_scenario_runs_and_passes(mini_scenario_doc):
    report = run_scenario(mini_scenario_doc)
    assert report.passed, report.failures
    assert len(report.events) == 2
    assert report.events[0].log_line().endswith("session_activated\tnone")


def test_scenario_failure_reported(mini_scenario_doc):
    mini_scenario_doc["assertions"] = [{"kind": "final_phase", "expect": "idle"}]
    report = run_scenario(mini_scenario_doc)
    assert not report.passed
    assert "final_phase" in report.failures[0]


def test_scenario_unknown_assertion_kind(mini_scenario_doc):
    mini_scenario_doc["assertions"] = [{"kind": "nonsense"}]
    report = run_scenario(mini_scenario_doc)
    assert any("unknown assertion" in f for f in report.failures)


def test_scenario_write_logs(mini_scenario_doc, tmp_path):
    report = run_scenario(mini_scenario_doc)
    out = tmp_path / "logs"
    report.write_logs(out)
    lines = (out / "events.log").read_text().splitlines()
    assert lines == report.event_lines()
    traj = (out / "trajectory.log").read_text().splitlines()
    assert traj[0].startswith("# time_ns")
    assert len(traj) == 1 + 360


def test_scenario_determinism(mini_scenario_doc):
    a = run_scenario(mini_scenario_doc)
    b = run_scenario(mini_scenario_doc)
    assert a.event_lines() == b.event_lines()
    assert np.array_equal(a.final_state.joints, b.final_state.joints)
    assert np.array_equal(a.final_state.base_pose, b.final_state.base_pose)


def test_empty_trace_gives_empty_report(mini_scenario_doc, tmp_path):
    leader = make_mini_leader()
    schema = leader.schema()
    trace = Trace(
        joints=schema.names,
        n_grippers=2,
        rate_hz=100.0,
        fingerprint=schema_fingerprint(schema),
        frames=[],
    )
    save_trace(trace, tmp_path / "empty.chtrace")
    mini_scenario_doc["source"] = {"kind": "trace", "path": "empty.chtrace"}
    mini_scenario_doc["assertions"] = [
        {"kind": "events", "expect": []},
        {"kind": "final_phase", "expect": "idle"},
    ]
    report = run_scenario(mini_scenario_doc)
    assert report.passed
    assert report.events == [] and report.trajectory == []


def test_load_scenario_missing_keys(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("leader: a.yaml\nfollower: b.yaml\n")
    with pytest.raises(ScriptError):
        load_scenario(p)
    with pytest.raises(ScriptError):
        load_scenario(tmp_path / "missing.yaml")


def test_scenario_rejects_bad_rate(mini_scenario_doc):
    mini_scenario_doc["rate_hz"] = 5.0
    with pytest.raises(ScriptError):
        run_scenario(mini_scenario_doc)


def test_scenario_unknown_source(mini_scenario_doc):
    mini_scenario_doc["source"] = {"kind": "telepathy"}
    with pytest.raises(ScriptError):
        run_scenario(mini_scenario_doc)


def test_shipped_scenarios_pass():
    for name in ("locomanip.yaml", "fullbody.yaml", "crawl.yaml"):
        report = run_scenario(SCENARIO_DIR / name)
        assert report.passed, f"{name}: {report.failures}"
