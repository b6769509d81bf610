"""WebSocket bridge between the control stack and the browser console.

Browsers cannot speak the datagram wire format, so the bridge exposes a
local WebSocket endpoint instead: leader input messages come in (making the
bridge a drop-in leader state provider) and console state messages go out at
a fixed rate. Messages are single-line JSON records; the first message on
every connection describes the leader joint schema so the console can build
its controls without a copy of the config file.

Plain HTTP GETs on the same port serve the console's static assets when a
build directory is configured, so one port covers both the page and its
socket.
"""

from __future__ import annotations

import json
import mimetypes
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import DeviceConfig
from .leader_source import SourceSample
from .session import GestureEvent, SessionParams

DEFAULT_CONSOLE_PORT = 47557
DEFAULT_STATE_RATE_HZ = 30.0
_EVENT_RING = 256


@dataclass(frozen=True)
class ConsoleStateMessage:
    """One outbound console update; mirrors the session and follower state."""

    stamp_ns: int
    phase: str
    arming_progress_s: float
    sync_progress: float
    left_arm_active: bool
    right_arm_active: bool
    left_leg_joystick: bool
    right_leg_joystick: bool
    follower_joints: list[float]
    follower_grippers: list[float]
    base_pose: list[float]
    base_orientation: list[float]
    torques: list[float]
    velocity: list[float]
    stale: bool
    latency_ms: float | None = None
    events: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {"type": "state", **asdict(self)}
        return json.dumps(doc, separators=(",", ":"))


def _event_dict(event: GestureEvent) -> dict:
    return {
        "stamp_ns": event.stamp_ns,
        "kind": event.kind.value,
        "side": event.side.value,
    }


class ConsoleBridge:
    """Serves the console endpoint and doubles as a leader state provider.

    sample() returns the latest browser input (home pose until one arrives),
    publish() hands the bridge the state to fan out to every connection.
    Start/stop manage the server thread; also usable as a context manager.
    """

    def __init__(
        self,
        leader: DeviceConfig,
        host: str = "127.0.0.1",
        port: int = DEFAULT_CONSOLE_PORT,
        state_rate_hz: float = DEFAULT_STATE_RATE_HZ,
        static_dir: str | Path | None = None,
        params: SessionParams | None = None,
    ):
        if state_rate_hz <= 0:
            raise ValueError("state_rate_hz must be > 0")
        self.host = host
        self.port = port
        self.state_rate_hz = state_rate_hz
        self.static_dir = None if static_dir is None else Path(static_dir)
        params = params or SessionParams()
        self.schema = leader.schema()
        self.n_grippers = len(leader.gripper_names())
        self.duration_s = None
        self._gripper_names = leader.gripper_names()
        self._input_lock = threading.Lock()
        self._positions = self.schema.home.copy()
        self._triggers = np.zeros(self.n_grippers)
        self._quat = np.array([1.0, 0.0, 0.0, 0.0])
        self._last_input_ns = 0
        self._inputs_received = 0
        self._state_lock = threading.Lock()
        self._state_json: str | None = None
        self._events: deque[tuple[int, dict]] = deque(maxlen=_EVENT_RING)
        self._next_event_id = 1
        self._server = None
        self._thread: threading.Thread | None = None
        self._stopping = threading.Event()
        limb_of = {
            j.name: (limb.name, limb.kind.value)
            for limb in leader.limbs
            for j in limb.joints
        }
        self._schema_json = json.dumps(
            {
                "type": "schema",
                "joints": [
                    {
                        "name": n,
                        "min": float(self.schema.low[i]),
                        "max": float(self.schema.high[i]),
                        "home": float(self.schema.home[i]),
                        "limb": limb_of[n][0],
                        "kind": limb_of[n][1],
                    }
                    for i, n in enumerate(self.schema.names)
                ],
                "grippers": list(self._gripper_names),
                "hold_s": {
                    "activate": params.activation_hold_s,
                    "toggle": params.toggle_hold_s,
                },
                "state_rate_hz": state_rate_hz,
            },
            separators=(",", ":"),
        )

    # -- provider interface ------------------------------------------------------

    def sample(self, t: float) -> SourceSample:
        with self._input_lock:
            return SourceSample(
                positions=self._positions.copy(),
                velocities=np.zeros(len(self.schema)),
                triggers=self._triggers.copy(),
                quat=self._quat.copy(),
            )

    def input_age_s(self) -> float | None:
        with self._input_lock:
            if self._inputs_received == 0:
                return None
            return (time.monotonic_ns() - self._last_input_ns) / 1e9

    # -- control-loop interface ----------------------------------------------------

    def publish(self, message: ConsoleStateMessage, events=()) -> None:
        # the writer attaches events a given connection has not yet seen
        with self._state_lock:
            for event in events:
                self._events.append((self._next_event_id, _event_dict(event)))
                self._next_event_id += 1
            self._state_json = message.to_json()

    # -- server plumbing -------------------------------------------------------------

    def _apply_input(self, doc: dict) -> str | None:
        positions = doc.get("positions")
        if positions is None or len(positions) != len(self.schema):
            return f"positions must have {len(self.schema)} entries"
        triggers = doc.get("triggers", [])
        if len(triggers) != self.n_grippers:
            return f"triggers must have {self.n_grippers} entries"
        quat = doc.get("quat", [1.0, 0.0, 0.0, 0.0])
        if len(quat) != 4:
            return "quat must have 4 entries (w, x, y, z)"
        try:
            positions = np.asarray(positions, dtype=float)
            triggers = np.clip(np.asarray(triggers, dtype=float), 0.0, 1.0)
            quat = np.asarray(quat, dtype=float)
        except (TypeError, ValueError):
            return "non-numeric input values"
        if not np.all(np.isfinite(positions)) or not np.all(np.isfinite(quat)):
            return "input values must be finite"
        norm = float(np.linalg.norm(quat))
        if norm < 1e-9:
            return "quat must be non-zero"
        positions = np.clip(positions, self.schema.low, self.schema.high)
        with self._input_lock:
            self._positions = positions
            self._triggers = triggers
            self._quat = quat / norm
            self._last_input_ns = time.monotonic_ns()
            self._inputs_received += 1
        return None

    def _writer(self, ws, closed: threading.Event) -> None:
        from websockets.exceptions import ConnectionClosed

        period = 1.0 / self.state_rate_hz
        last_event_id = 0
        next_send = time.monotonic()
        while not self._stopping.is_set() and not closed.is_set():
            now = time.monotonic()
            if now < next_send:
                time.sleep(min(period, next_send - now))
                continue
            next_send = now + period
            with self._state_lock:
                payload = self._state_json
                fresh = [e for i, e in self._events if i > last_event_id]
                if self._events:
                    last_event_id = max(last_event_id, self._events[-1][0])
            if payload is None:
                continue
            if fresh:
                doc = json.loads(payload)
                doc["events"] = fresh
                payload = json.dumps(doc, separators=(",", ":"))
            try:
                ws.send(payload)
            except ConnectionClosed:
                return
            except OSError:
                return

    def _handler(self, ws) -> None:
        from websockets.exceptions import ConnectionClosed

        closed = threading.Event()
        ws.send(self._schema_json)
        writer = threading.Thread(
            target=self._writer, args=(ws, closed), daemon=True
        )
        writer.start()
        try:
            for raw in ws:
                try:
                    doc = json.loads(raw)
                except json.JSONDecodeError:
                    ws.send(json.dumps({"type": "error", "error": "bad json"}))
                    continue
                kind = doc.get("type")
                if kind == "leader_input":
                    error = self._apply_input(doc)
                    if error:
                        ws.send(json.dumps({"type": "error", "error": error}))
                elif kind == "ping":
                    ws.send(json.dumps({"type": "pong", "t": doc.get("t")}))
                else:
                    ws.send(
                        json.dumps(
                            {"type": "error", "error": f"unknown type {kind!r}"}
                        )
                    )
        except ConnectionClosed:
            pass
        finally:
            closed.set()
            writer.join(timeout=1.0)

    def _process_request(self, connection, request):
        # WebSocket handshakes pass through; plain GETs get the console page
        if "Upgrade" in request.headers:
            return None
        if self.static_dir is None:
            return connection.respond(
                200, "teleop console bridge; connect over WebSocket\n"
            )
        from websockets.datastructures import Headers
        from websockets.http11 import Response

        rel = request.path.split("?", 1)[0].lstrip("/") or "index.html"
        root = self.static_dir.resolve()
        target = (root / rel).resolve()
        if root not in target.parents or not target.is_file():
            return connection.respond(404, "not found\n")
        body = target.read_bytes()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return Response(
            200,
            "OK",
            Headers(
                [
                    ("Content-Type", ctype),
                    ("Content-Length", str(len(body))),
                    ("Cache-Control", "no-store"),
                ]
            ),
            body,
        )

    def start(self) -> "ConsoleBridge":
        from websockets.sync.server import serve

        if self._server is not None:
            raise RuntimeError("bridge already started")
        self._stopping.clear()
        self._server = serve(
            self._handler,
            self.host,
            self.port,
            process_request=self._process_request,
        )
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._server is not None:
            self._server.shutdown()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def __enter__(self) -> "ConsoleBridge":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def console_state_message(
    stamp_ns: int,
    session_state,
    follower_state,
    cmd,
    stale: bool,
    latency_ms: float | None = None,
) -> ConsoleStateMessage:
    """Assemble the outbound record from one control tick's values."""
    velocity = cmd.velocity
    return ConsoleStateMessage(
        stamp_ns=stamp_ns,
        phase=session_state.phase.value,
        arming_progress_s=round(session_state.arming_progress_s, 4),
        sync_progress=round(session_state.sync_progress, 4),
        left_arm_active=session_state.left_arm_active,
        right_arm_active=session_state.right_arm_active,
        left_leg_joystick=session_state.left_leg_joystick,
        right_leg_joystick=session_state.right_leg_joystick,
        follower_joints=[round(float(v), 5) for v in follower_state.joints],
        follower_grippers=[round(float(v), 4) for v in follower_state.grippers],
        base_pose=[round(float(v), 5) for v in follower_state.base_pose],
        base_orientation=[round(float(v), 6) for v in follower_state.base_orientation],
        torques=[round(float(v), 4) for v in cmd.torques],
        velocity=[
            round(velocity.vx, 4),
            round(velocity.vy, 4),
            round(velocity.wz, 4),
        ],
        stale=stale,
        latency_ms=None if latency_ms is None else round(latency_ms, 2),
    )
