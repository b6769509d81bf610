"""Leader state providers: synthetic generators, trace replay, recording.

A provider produces the leader device's state as a pure function of session
time, so tests and scenarios are deterministic. Three synthetic kinds cover
the common cases (hold a pose, sine sweep, scripted gestures); a recorded
trace can be replayed bit-exact because trace files reuse the wire codec.
"""

from __future__ import annotations

import bisect
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import JointSchema
from .feedback import LimitViolation
from .retarget import euler_to_quat
from .transport import StateFrame, decode_frame, encode_frame, make_frame

TRACE_FORMAT = "chtrace"
TRACE_VERSION = 1
TRACE_SUFFIX = ".chtrace"


class EmptyTrace(ValueError):
    """Replay requested from a trace with no samples."""


class TraceFormatError(ValueError):
    """Trace file header or frame stream is malformed."""


@dataclass(frozen=True, eq=False)
class SourceSample:
    """One provider output: the leader state at a given session time."""

    positions: np.ndarray
    velocities: np.ndarray
    triggers: np.ndarray
    quat: np.ndarray


def schema_fingerprint(schema: JointSchema) -> str:
    """Stable digest of the joint layout, stored in trace headers."""
    blob = json.dumps(
        {
            "names": list(schema.names),
            "low": [float(v) for v in schema.low],
            "high": [float(v) for v in schema.high],
        },
        sort_keys=True,
    ).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class Provider:
    """Base leader-state provider; subclasses fill in _positions/_velocities."""

    def __init__(self, schema: JointSchema, n_grippers: int, duration_s: float | None):
        self.schema = schema
        self.n_grippers = n_grippers
        self.duration_s = duration_s

    def sample(self, t: float) -> SourceSample:
        raise NotImplementedError


class Hold(Provider):
    """Constant pose, constant triggers, identity orientation."""

    def __init__(
        self,
        schema: JointSchema,
        pose: np.ndarray | None = None,
        triggers: np.ndarray | None = None,
        n_grippers: int = 0,
        duration_s: float | None = None,
    ):
        if triggers is not None:
            n_grippers = len(triggers)
        super().__init__(schema, n_grippers, duration_s)
        self._pose = (
            schema.home.copy() if pose is None else np.asarray(pose, dtype=float)
        )
        if self._pose.shape != schema.home.shape:
            raise ValueError(
                f"pose length {len(self._pose)} != schema {len(schema)}"
            )
        if np.any(self._pose < schema.low) or np.any(self._pose > schema.high):
            raise LimitViolation("hold pose outside joint limits")
        self._triggers = (
            np.zeros(n_grippers) if triggers is None else np.asarray(triggers, float)
        )
        self._zero = np.zeros(len(schema))
        self._quat = np.array([1.0, 0.0, 0.0, 0.0])

    def sample(self, t: float) -> SourceSample:
        return SourceSample(self._pose, self._zero, self._triggers, self._quat)


class SineSweep(Provider):
    """Sinusoid around home on selected joints, analytic velocities."""

    def __init__(
        self,
        schema: JointSchema,
        amplitude: float,
        frequency_hz: float,
        joints: list[str] | None = None,
        n_grippers: int = 0,
        duration_s: float | None = None,
    ):
        super().__init__(schema, n_grippers, duration_s)
        if frequency_hz <= 0:
            raise ValueError("frequency_hz must be > 0")
        self.amplitude = float(amplitude)
        self.frequency_hz = float(frequency_hz)
        names = schema.names if joints is None else tuple(joints)
        self._mask = np.zeros(len(schema))
        for n in names:
            if n not in schema.index:
                raise KeyError(f"unknown joint '{n}'")
            self._mask[schema.index[n]] = 1.0
        swept = self._mask > 0
        low_ok = schema.home[swept] - abs(amplitude) >= schema.low[swept]
        high_ok = schema.home[swept] + abs(amplitude) <= schema.high[swept]
        if not (np.all(low_ok) and np.all(high_ok)):
            bad = [
                schema.names[i]
                for i in np.flatnonzero(swept)
                if not (
                    schema.home[i] - abs(amplitude) >= schema.low[i]
                    and schema.home[i] + abs(amplitude) <= schema.high[i]
                )
            ]
            raise LimitViolation(f"sweep amplitude {amplitude} exceeds limits on {bad}")
        self._triggers = np.zeros(n_grippers)
        self._quat = np.array([1.0, 0.0, 0.0, 0.0])

    def sample(self, t: float) -> SourceSample:
        w = 2.0 * math.pi * self.frequency_hz
        pos = self.schema.home + self.amplitude * math.sin(w * t) * self._mask
        vel = self.amplitude * w * math.cos(w * t) * self._mask
        return SourceSample(pos, vel, self._triggers, self._quat)


@dataclass(frozen=True)
class _Segment:
    t0: float
    t1: float
    v0: float
    v1: float

    def value(self, t: float) -> float:
        if self.t1 <= self.t0 or t >= self.t1:
            return self.v1
        f = (t - self.t0) / (self.t1 - self.t0)
        return self.v0 + f * (self.v1 - self.v0)

    def slope(self, t: float) -> float:
        if self.t1 <= self.t0 or not (self.t0 <= t < self.t1):
            return 0.0
        return (self.v1 - self.v0) / (self.t1 - self.t0)


class _Channel:
    """Piecewise-linear scalar signal built from timed ramp events."""

    def __init__(self, initial: float):
        self.initial = initial
        self.segments: list[_Segment] = []

    def add_ramp(self, at: float, to: float, over: float) -> None:
        v_start = self.value(at)
        kept = []
        for seg in self.segments:
            if seg.t0 >= at:
                continue
            if seg.t1 > at:
                seg = _Segment(seg.t0, at, seg.v0, v_start)
            kept.append(seg)
        kept.append(_Segment(at, at + max(over, 0.0), v_start, to))
        self.segments = kept

    def value(self, t: float) -> float:
        out = self.initial
        for seg in self.segments:
            if t < seg.t0:
                break
            out = seg.value(t)
        return out

    def slope(self, t: float) -> float:
        for seg in self.segments:
            if seg.t0 <= t < seg.t1:
                return seg.slope(t)
        return 0.0


class GestureScript(Provider):
    """Timed gripper and joint events, e.g. "close both grippers for 3 s".

    Events (dicts, applied in time order):
      {"at": s, "triggers": [..]}                 step trigger values
      {"at": s, "joint": name, "to": v, "over": s} linear joint ramp
      {"at": s, "rpy": [r, p, y], "over": s}       linear orientation ramp
    """

    def __init__(
        self,
        schema: JointSchema,
        events: list[dict],
        n_grippers: int,
        duration_s: float | None = None,
    ):
        super().__init__(schema, n_grippers, duration_s)
        self._joints = {
            name: _Channel(float(schema.home[i]))
            for name, i in schema.index.items()
        }
        self._rpy = [_Channel(0.0) for _ in range(3)]
        self._trigger_times: list[float] = []
        self._trigger_values: list[np.ndarray] = []
        for ev in sorted(events, key=lambda e: float(e.get("at", 0.0))):
            at = float(ev.get("at", 0.0))
            if at < 0:
                raise ValueError("event times must be >= 0")
            if "triggers" in ev:
                values = np.asarray(ev["triggers"], dtype=float)
                if len(values) != n_grippers:
                    raise ValueError(
                        f"trigger event has {len(values)} values, device has "
                        f"{n_grippers} grippers"
                    )
                if np.any(values < 0) or np.any(values > 1):
                    raise ValueError("trigger values must be in [0, 1]")
                self._trigger_times.append(at)
                self._trigger_values.append(values)
            elif "joint" in ev:
                name = ev["joint"]
                if name not in self._joints:
                    raise KeyError(f"unknown joint '{name}'")
                to = float(ev["to"])
                i = schema.index[name]
                if not schema.low[i] <= to <= schema.high[i]:
                    raise LimitViolation(
                        f"ramp target {to} outside limits of '{name}'"
                    )
                self._joints[name].add_ramp(at, to, float(ev.get("over", 0.0)))
            elif "rpy" in ev:
                rpy = [float(v) for v in ev["rpy"]]
                if len(rpy) != 3:
                    raise ValueError("rpy event needs three angles")
                over = float(ev.get("over", 0.0))
                for ch, v in zip(self._rpy, rpy):
                    ch.add_ramp(at, v, over)
            else:
                raise ValueError(f"unrecognized script event: {ev}")

    def sample(self, t: float) -> SourceSample:
        pos = np.array([self._joints[n].value(t) for n in self.schema.names])
        vel = np.array([self._joints[n].slope(t) for n in self.schema.names])
        k = bisect.bisect_right(self._trigger_times, t) - 1
        triggers = (
            self._trigger_values[k] if k >= 0 else np.zeros(self.n_grippers)
        )
        roll, pitch, yaw = (ch.value(t) for ch in self._rpy)
        quat = np.asarray(euler_to_quat(roll, pitch, yaw), dtype=float)
        return SourceSample(pos, vel, triggers, quat)


# --- traces -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trace:
    """A recorded leader stream: schema header plus ordered frames."""

    joints: tuple[str, ...]
    n_grippers: int
    rate_hz: float
    fingerprint: str
    frames: tuple[StateFrame, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        last = -1
        for f in self.frames:
            if f.stamp_ns <= last:
                raise ValueError("trace timestamps must be strictly increasing")
            last = f.stamp_ns
            if len(f.positions) != len(self.joints):
                raise ValueError(
                    f"frame seq {f.seq} has {len(f.positions)} joints, header "
                    f"says {len(self.joints)}"
                )
            if len(f.triggers) != self.n_grippers:
                raise ValueError(
                    f"frame seq {f.seq} has {len(f.triggers)} triggers, header "
                    f"says {self.n_grippers}"
                )

    def duration_s(self) -> float:
        if not self.frames:
            return 0.0
        return (self.frames[-1].stamp_ns - self.frames[0].stamp_ns) / 1e9


def _trace_header(trace: Trace) -> str:
    return json.dumps(
        {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "fingerprint": trace.fingerprint,
            "rate_hz": trace.rate_hz,
            "joints": list(trace.joints),
            "grippers": trace.n_grippers,
        },
        sort_keys=True,
    )


def save_trace(trace: Trace, path) -> None:
    trace.validate()
    with open(path, "wb") as f:
        f.write(_trace_header(trace).encode() + b"\n")
        for frame in trace.frames:
            f.write(encode_frame(frame))


def _read_exact(f: io.BufferedReader, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TraceFormatError("trace file truncated mid-frame")
    return data


def load_trace(path) -> Trace:
    with open(path, "rb") as f:
        header_line = f.readline()
        if not header_line.endswith(b"\n"):
            raise TraceFormatError("missing trace header line")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"bad trace header: {e}") from e
        if header.get("format") != TRACE_FORMAT:
            raise TraceFormatError("not a trace file")
        if header.get("version") != TRACE_VERSION:
            raise TraceFormatError(
                f"unsupported trace version {header.get('version')}"
            )
        frames = []
        while True:
            head = f.read(23)
            if not head:
                break
            if len(head) != 23:
                raise TraceFormatError("trace file truncated mid-frame")
            n_joints = int.from_bytes(head[20:22], "little")
            n_grippers = head[22]
            body_len = 4 * (2 * n_joints + n_grippers) + 16 + 4
            frames.append(decode_frame(head + _read_exact(f, body_len)))
        trace = Trace(
            joints=tuple(header["joints"]),
            n_grippers=int(header["grippers"]),
            rate_hz=float(header["rate_hz"]),
            fingerprint=str(header["fingerprint"]),
            frames=tuple(frames),
        )
    try:
        trace.validate()
    except ValueError as e:
        raise TraceFormatError(str(e)) from e
    return trace


def record(
    provider: Provider,
    path,
    rate_hz: float,
    duration_s: float | None = None,
    schema: JointSchema | None = None,
) -> Trace:
    """Sample a provider onto a time grid and write the trace file.

    The schema check happens before anything is written, so a mismatched
    provider fails at open time.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be > 0")
    schema = schema or provider.schema
    if tuple(schema.names) != tuple(provider.schema.names):
        raise ValueError(
            "provider schema does not match the requested recording schema"
        )
    if duration_s is None:
        duration_s = provider.duration_s
    if duration_s is None or duration_s <= 0:
        raise ValueError("recording needs a positive duration")
    dt = 1.0 / rate_hz
    n = max(1, int(round(duration_s * rate_hz)))
    frames = []
    for k in range(n):
        t = k * dt
        s = provider.sample(t)
        frames.append(
            make_frame(
                seq=k + 1,
                stamp_ns=int(round(t * 1e9)) + 1,
                positions=s.positions,
                velocities=s.velocities,
                triggers=s.triggers,
                quat=s.quat,
            )
        )
    trace = Trace(
        joints=tuple(schema.names),
        n_grippers=provider.n_grippers,
        rate_hz=rate_hz,
        fingerprint=schema_fingerprint(schema),
        frames=tuple(frames),
    )
    save_trace(trace, path)
    return trace


class TraceReplay(Provider):
    """Zero-order-hold replay of a trace, optionally time-scaled.

    sample(t) returns the last recorded sample at or before t*speed
    (relative to the first frame); velocities come from finite differences
    of the recorded positions.
    """

    def __init__(self, trace: Trace, schema: JointSchema, speed: float = 1.0):
        if speed <= 0:
            raise ValueError("speed must be > 0")
        if not trace.frames:
            raise EmptyTrace("trace has no samples")
        if tuple(schema.names) != tuple(trace.joints):
            raise ValueError("trace schema does not match the device schema")
        super().__init__(
            schema, trace.n_grippers, duration_s=trace.duration_s() / speed
        )
        self.trace = trace
        self.speed = float(speed)
        self._t0 = trace.frames[0].stamp_ns
        self._times = [(f.stamp_ns - self._t0) / 1e9 for f in trace.frames]
        self._fd_vel = [np.zeros(len(schema))]
        for prev, cur in zip(trace.frames, trace.frames[1:]):
            dt = (cur.stamp_ns - prev.stamp_ns) / 1e9
            self._fd_vel.append(
                (cur.positions.astype(float) - prev.positions.astype(float)) / dt
            )

    def sample(self, t: float) -> SourceSample:
        k = bisect.bisect_right(self._times, t * self.speed) - 1
        k = max(0, min(k, len(self.trace.frames) - 1))
        f = self.trace.frames[k]
        return SourceSample(
            positions=f.positions.astype(float),
            velocities=self._fd_vel[k] * self.speed,
            triggers=f.triggers.astype(float),
            quat=f.quat.astype(float),
        )


def replay(trace: Trace, schema: JointSchema, speed: float = 1.0) -> TraceReplay:
    return TraceReplay(trace, schema, speed)
