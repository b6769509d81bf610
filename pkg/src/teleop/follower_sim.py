"""Kinematic follower robot and the scenario regression runner.

The simulator stands in for the physical humanoid: joints track their
targets with a first-order response under velocity caps and hard limits,
grippers track trigger commands, and the planar base integrates velocity
commands the way the embedded walking controller would consume them.

Scenarios replay a synthetic or recorded leader stream through the full
stack (codec included) on a simulated clock, producing deterministic
trajectory and event logs plus pass/fail assertion results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import leader_source as _source
from .config import ConfigError, DeviceConfig, JointSchema, load_config
from .session import CommandSet, GestureEvent, Session, SessionPhase
from .transport import decode_frame, encode_frame, make_frame

DEFAULT_TRACKING_TAU_S = 0.05
_TWO_PI = 2.0 * math.pi


class ScriptError(ValueError):
    """Scenario file is malformed or references missing resources."""


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - theta) % _TWO_PI


@dataclass(frozen=True, eq=False)
class FollowerState:
    """Simulated actuator state plus the planar base pose.

    base_pose is (x, y, heading) in the world frame; base_orientation is the
    torso quaternion used by the floating-base crawling mode.
    """

    joints: np.ndarray
    grippers: np.ndarray
    base_pose: np.ndarray
    base_orientation: np.ndarray
    time_ns: int = 0


def initial_state(cfg: DeviceConfig) -> FollowerState:
    schema = cfg.schema()
    return FollowerState(
        joints=schema.home.copy(),
        grippers=np.zeros(len(cfg.gripper_names())),
        base_pose=np.zeros(3),
        base_orientation=np.array([1.0, 0.0, 0.0, 0.0]),
        time_ns=0,
    )


@dataclass(frozen=True, eq=False)
class TrackingParams:
    """First-order actuator model: per-joint time constant and velocity cap."""

    tau: np.ndarray
    vel_cap: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def validate(self) -> None:
        if np.any(self.tau <= 0):
            raise ValueError("tracking time constants must be > 0")
        if np.any(self.vel_cap <= 0):
            raise ValueError("velocity caps must be > 0")

    @classmethod
    def from_config(
        cls, cfg: DeviceConfig, tau_s: float = DEFAULT_TRACKING_TAU_S
    ) -> "TrackingParams":
        schema = cfg.schema()
        n = len(schema)
        return cls(
            tau=np.full(n, tau_s),
            vel_cap=schema.vel_max.copy(),
            low=schema.low.copy(),
            high=schema.high.copy(),
        )


def _integrate_base(pose: np.ndarray, vx: float, vy: float, wz: float, dt: float):
    """Advance the planar pose under a constant body twist for dt.

    The closed-form arc keeps coarse steps consistent with a fine-step
    reference; with |wz| ~ 0 it degenerates to the straight-line update.
    """
    x, y, theta = float(pose[0]), float(pose[1]), float(pose[2])
    d = wz * dt
    if abs(wz) < 1e-9:
        bx, by = vx * dt, vy * dt
    else:
        s, c = math.sin(d), math.cos(d)
        bx = (vx * s + vy * (c - 1.0)) / wz
        by = (vx * (1.0 - c) + vy * s) / wz
    ct, st = math.cos(theta), math.sin(theta)
    return np.array(
        [x + bx * ct - by * st, y + bx * st + by * ct, wrap_angle(theta + d)]
    )


def step_follower(
    state: FollowerState, cmd: CommandSet, dt: float, params: TrackingParams
) -> FollowerState:
    """One simulation tick: first-order joint tracking, base integration.

    Joint response q' = target + (q - target)*exp(-dt/tau), with the per-tick
    move capped at vel_cap*dt and the result clamped to limits. A None target
    or gripper command holds the current value.
    """
    if not 0 < dt <= 0.1:
        raise ValueError(f"dt {dt} outside (0, 0.1] s")
    q = state.joints
    target = q if cmd.targets is None else np.asarray(cmd.targets, dtype=float)
    decay = np.exp(-dt / params.tau)
    moved = target + (q - target) * decay
    step = np.clip(moved - q, -params.vel_cap * dt, params.vel_cap * dt)
    joints = np.clip(q + step, params.low, params.high)
    grippers = (
        state.grippers
        if cmd.grippers is None
        else np.clip(np.asarray(cmd.grippers, dtype=float), 0.0, 1.0)
    )
    v = cmd.velocity
    base_pose = _integrate_base(state.base_pose, v.vx, v.vy, v.wz, dt)
    orientation = state.base_orientation
    if cmd.base_orientation is not None:
        quat = np.asarray(cmd.base_orientation, dtype=float)
        orientation = quat / np.linalg.norm(quat)
    return FollowerState(
        joints=joints,
        grippers=grippers,
        base_pose=base_pose,
        base_orientation=orientation,
        time_ns=state.time_ns + int(round(dt * 1e9)),
    )


# --- scenarios ------------------------------------------------------------------


@dataclass
class ScenarioReport:
    """Everything a scenario run produced, ready for assertion and logging."""

    name: str
    rate_hz: float
    duration_s: float
    events: list[GestureEvent]
    failures: list[str]
    final_state: FollowerState
    final_phase: SessionPhase
    joint_names: tuple[str, ...]
    joint_home: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trajectory: list[tuple[int, np.ndarray, np.ndarray, str]] = field(
        default_factory=list, repr=False
    )

    @property
    def passed(self) -> bool:
        return not self.failures

    def event_lines(self) -> list[str]:
        return [e.log_line() for e in self.events]

    def write_logs(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "events.log", "w", encoding="utf-8") as f:
            for line in self.event_lines():
                f.write(line + "\n")
        with open(directory / "trajectory.log", "w", encoding="utf-8") as f:
            f.write(
                "# time_ns\t" + " ".join(self.joint_names)
                + "\tbase_x\tbase_y\tbase_heading\tphase\n"
            )
            for t_ns, joints, base, phase in self.trajectory:
                q = " ".join(f"{v:.6f}" for v in joints)
                f.write(
                    f"{t_ns}\t{q}\t{base[0]:.6f}\t{base[1]:.6f}"
                    f"\t{base[2]:.6f}\t{phase}\n"
                )


def _build_source(
    spec: dict, schema: JointSchema, n_grippers: int, base_dir: Path
) -> _source.Provider | None:
    kind = spec.get("kind")
    if kind == "hold":
        return _source.Hold(schema, n_grippers=n_grippers)
    if kind == "sine":
        return _source.SineSweep(
            schema,
            amplitude=float(spec.get("amplitude", 0.1)),
            frequency_hz=float(spec.get("frequency_hz", 0.5)),
            joints=spec.get("joints"),
            n_grippers=n_grippers,
        )
    if kind == "gesture_script":
        events = spec.get("events")
        if not isinstance(events, list):
            raise ScriptError("gesture_script source needs an events list")
        return _source.GestureScript(schema, events, n_grippers=n_grippers)
    if kind == "trace":
        path = base_dir / spec.get("path", "")
        if not path.is_file():
            raise ScriptError(f"trace file not found: {path}")
        trace = _source.load_trace(path)
        try:
            return _source.replay(trace, schema, speed=float(spec.get("speed", 1.0)))
        except _source.EmptyTrace:
            return None
    raise ScriptError(f"unknown source kind: {kind!r}")


def _check_assertion(spec: dict, report: ScenarioReport) -> str | None:
    kind = spec.get("kind")
    if kind == "events":
        expect = [str(s) for s in spec.get("expect", [])]
        got = [f"{e.kind.value} {e.side.value}" for e in report.events]
        if got != expect:
            return f"events: expected {expect}, got {got}"
        return None
    if kind == "final_phase":
        expect = str(spec.get("expect", "active"))
        if report.final_phase.value != expect:
            return f"final_phase: expected {expect}, got {report.final_phase.value}"
        return None
    if kind == "final_base":
        x, y, _ = report.final_state.base_pose
        dist = math.hypot(float(x), float(y))
        checks = {
            "x_min": float(x) >= spec.get("x_min", -math.inf),
            "x_max": float(x) <= spec.get("x_max", math.inf),
            "y_min": float(y) >= spec.get("y_min", -math.inf),
            "y_max": float(y) <= spec.get("y_max", math.inf),
            "dist_min": dist >= spec.get("dist_min", 0.0),
            "dist_max": dist <= spec.get("dist_max", math.inf),
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            return (
                f"final_base: {bad} violated at x={float(x):.4f} "
                f"y={float(y):.4f} dist={dist:.4f}"
            )
        return None
    if kind == "joint_holds":
        joint = spec.get("joint")
        if joint not in report.joint_names:
            return f"joint_holds: unknown joint {joint!r}"
        idx = report.joint_names.index(joint)
        tol = float(spec.get("tol", 1e-9))
        value = spec.get("value", "home")
        ref = float(report.joint_home[idx]) if value == "home" else float(value)
        for t_ns, joints, _, _ in report.trajectory:
            if abs(float(joints[idx]) - ref) > tol:
                return (
                    f"joint_holds: {joint} left {ref:.6f} at t={t_ns} "
                    f"(value {float(joints[idx]):.6f}, tol {tol})"
                )
        return None
    if kind == "displacement_during":
        phase = str(spec.get("phase", "idle"))
        total = 0.0
        prev = None
        for _, _, base, ph in report.trajectory:
            if prev is not None and ph == phase:
                total += math.hypot(
                    float(base[0] - prev[0]), float(base[1] - prev[1])
                )
            prev = base
        if total < spec.get("dist_min", 0.0):
            return (
                f"displacement_during {phase}: moved {total:.4f} m, "
                f"expected >= {spec['dist_min']}"
            )
        if total > spec.get("dist_max", math.inf):
            return (
                f"displacement_during {phase}: moved {total:.4f} m, "
                f"expected <= {spec['dist_max']}"
            )
        return None
    return f"unknown assertion kind: {kind!r}"


def load_scenario(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ScriptError(f"scenario file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ScriptError(f"{path}: {e}") from e
    if not isinstance(doc, dict):
        raise ScriptError(f"{path}: scenario must be a mapping")
    for key in ("leader", "follower", "source"):
        if key not in doc:
            raise ScriptError(f"{path}: missing required key '{key}'")
    doc["_dir"] = path.parent
    return doc


def run_scenario(script, tracking_tau_s: float = DEFAULT_TRACKING_TAU_S) -> ScenarioReport:
    """Run one scenario end to end on a simulated clock.

    Frames pass through the wire codec each tick, so the run covers
    encode/decode as well as session and simulator behavior. Identical
    scripts produce byte-identical logs.
    """
    doc = load_scenario(script) if not isinstance(script, dict) else script
    base_dir = Path(doc.get("_dir", "."))
    try:
        leader = load_config(base_dir / doc["leader"])
        follower = load_config(base_dir / doc["follower"])
    except (ConfigError, OSError) as e:
        raise ScriptError(str(e)) from e
    rate_hz = float(doc.get("rate_hz", 100.0))
    if not 10 <= rate_hz <= 1000:
        raise ScriptError(f"rate_hz {rate_hz} outside [10, 1000]")
    duration_s = float(doc.get("duration_s", 10.0))
    if duration_s < 0:
        raise ScriptError("duration_s must be >= 0")
    schema = leader.schema()
    n_grippers = len(leader.gripper_names())
    source_spec = doc.get("source")
    if not isinstance(source_spec, dict):
        raise ScriptError("source must be a mapping with a 'kind'")
    try:
        provider = _build_source(source_spec, schema, n_grippers, base_dir)
    except (ValueError, KeyError) as e:
        raise ScriptError(f"source: {e}") from e

    session = Session(leader, follower)
    state = session.initial_state()
    fstate = initial_state(follower)
    params = TrackingParams.from_config(follower, tau_s=tracking_tau_s)
    params.validate()
    fsch = follower.schema()

    dt = 1.0 / rate_hz
    n_ticks = int(round(duration_s * rate_hz)) if provider is not None else 0
    events: list[GestureEvent] = []
    failures: list[str] = []
    trajectory: list[tuple[int, np.ndarray, np.ndarray, str]] = []
    limit_violation_logged = False
    for k in range(1, n_ticks + 1):
        t = k * dt
        s = provider.sample(t)
        frame = make_frame(
            seq=k,
            stamp_ns=int(round(t * 1e9)),
            positions=s.positions,
            velocities=s.velocities,
            triggers=s.triggers,
            quat=s.quat,
        )
        frame = decode_frame(encode_frame(frame))
        state, tick_events, cmd = session.step(state, frame, fstate, dt)
        fstate = step_follower(fstate, cmd, dt, params)
        events.extend(tick_events)
        if not limit_violation_logged and (
            np.any(fstate.joints < fsch.low - 1e-12)
            or np.any(fstate.joints > fsch.high + 1e-12)
        ):
            failures.append(f"joint limits violated at tick {k}")
            limit_violation_logged = True
        trajectory.append(
            (
                fstate.time_ns,
                fstate.joints.copy(),
                fstate.base_pose.copy(),
                state.phase.value,
            )
        )

    report = ScenarioReport(
        name=str(doc.get("name", "scenario")),
        rate_hz=rate_hz,
        duration_s=duration_s,
        events=events,
        failures=failures,
        final_state=fstate,
        final_phase=state.phase,
        joint_names=fsch.names,
        joint_home=fsch.home.copy(),
        trajectory=trajectory,
    )
    for spec in doc.get("assertions", []) or []:
        if not isinstance(spec, dict):
            report.failures.append(f"malformed assertion: {spec!r}")
            continue
        failure = _check_assertion(spec, report)
        if failure:
            report.failures.append(failure)
    return report
