"""Command line entry point.

Subcommands: validate (config lint), run (live leader/follower node),
bench-latency (loopback probe), scenario (regression runner), record and
replay (trace tooling). Endpoint defaults honor the TELEOP_STATE_ENDPOINT,
TELEOP_PROBE_ENDPOINT and TELEOP_CONSOLE_PORT environment variables.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import follower_sim as _sim
from . import leader_source as _source
from . import transport as _transport
from .config import (
    ConfigError,
    DeviceConfig,
    MappingError,
    load_config,
    validate_mapping,
)
from .console_bridge import (
    DEFAULT_CONSOLE_PORT,
    ConsoleBridge,
    console_state_message,
)
from .feedback import LimitViolation
from .session import Session
from .transport import (
    DEFAULT_PROBE_PORT,
    DEFAULT_STATE_PORT,
    EchoServer,
    InsufficientSamples,
    Subscriber,
    TransportError,
    publish_loop,
)

ENV_STATE_ENDPOINT = "TELEOP_STATE_ENDPOINT"
ENV_PROBE_ENDPOINT = "TELEOP_PROBE_ENDPOINT"
ENV_CONSOLE_PORT = "TELEOP_CONSOLE_PORT"


def _default_state_endpoint() -> str:
    return os.environ.get(ENV_STATE_ENDPOINT, f"127.0.0.1:{DEFAULT_STATE_PORT}")


def _default_probe_endpoint() -> str:
    return os.environ.get(ENV_PROBE_ENDPOINT, f"127.0.0.1:{DEFAULT_PROBE_PORT}")


def _default_console_port() -> int:
    return int(os.environ.get(ENV_CONSOLE_PORT, DEFAULT_CONSOLE_PORT))


@dataclass
class RunManifest:
    """Everything cmd_run needs to assemble a node."""

    leader: str
    follower: str
    source: str = "synth:hold"
    endpoint: str = ""
    rate_hz: float = 100.0
    log_dir: str | None = None
    console: bool = False
    console_port: int = DEFAULT_CONSOLE_PORT
    console_assets: str | None = None
    duration_s: float | None = None
    staleness_timeout_s: float = _transport.DEFAULT_STALENESS_TIMEOUT_S

    def validate(self) -> None:
        if not 10 <= self.rate_hz <= 1000:
            raise ValueError(f"rate_hz {self.rate_hz} outside [10, 1000]")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ValueError("duration must be > 0 seconds")
        if self.console_assets is not None and not Path(self.console_assets).is_dir():
            raise ValueError(f"console assets dir not found: {self.console_assets}")


def _build_source(spec: str, leader: DeviceConfig, bridge: ConsoleBridge | None):
    schema = leader.schema()
    n_grippers = len(leader.gripper_names())
    if spec == "console":
        if bridge is None:
            raise ValueError("console source requires the console bridge")
        return bridge
    if spec.startswith("synth:"):
        parts = spec.split(":")
        kind = parts[1] if len(parts) > 1 else "hold"
        if kind == "hold":
            return _source.Hold(schema, n_grippers=n_grippers)
        if kind == "sine":
            amplitude = float(parts[2]) if len(parts) > 2 else 0.1
            frequency = float(parts[3]) if len(parts) > 3 else 0.5
            return _source.SineSweep(
                schema, amplitude, frequency, n_grippers=n_grippers
            )
        raise ValueError(f"unknown synth kind '{kind}' (use hold or sine)")
    if spec.startswith("replay:"):
        path = spec.split(":", 1)[1]
        trace = _source.load_trace(path)
        return _source.replay(trace, schema)
    raise ValueError(
        f"unknown source '{spec}' (use synth:hold, synth:sine[:amp:hz], "
        "replay:PATH, or console)"
    )


class TeleopNode:
    """The live topology: publisher, subscriber, control loop, console bridge.

    start() brings every thread up (rolling back on partial failure) and
    stop() tears them all down; repeated start/stop leaves nothing bound.
    """

    def __init__(self, manifest: RunManifest):
        manifest.validate()
        self.manifest = manifest
        self.leader = load_config(manifest.leader)
        self.follower = load_config(manifest.follower)
        self.session = Session(self.leader, self.follower)
        self.endpoint = manifest.endpoint or _default_state_endpoint()
        self._stop = threading.Event()
        self.bridge: ConsoleBridge | None = None
        self.echo: EchoServer | None = None
        self.subscriber: Subscriber | None = None
        self._threads: list[threading.Thread] = []
        self.ticks = 0
        self._event_file = None

    def start(self) -> "TeleopNode":
        m = self.manifest
        self._stop.clear()
        try:
            if m.console or m.source == "console":
                assets = m.console_assets
                if assets is None:
                    probe = Path("frontend") / "dist"
                    assets = str(probe) if probe.is_dir() else None
                self.bridge = ConsoleBridge(
                    self.leader,
                    port=m.console_port,
                    static_dir=assets,
                    params=self.session.params,
                ).start()
            source = _build_source(m.source, self.leader, self.bridge)
            self.echo = EchoServer(_default_probe_endpoint()).start()
            self.subscriber = Subscriber(
                self.endpoint, staleness_timeout_s=m.staleness_timeout_s
            ).start()
            if m.log_dir:
                log_dir = Path(m.log_dir)
                log_dir.mkdir(parents=True, exist_ok=True)
                self._event_file = open(
                    log_dir / "events.log", "w", encoding="utf-8"
                )
            publisher = threading.Thread(
                target=publish_loop,
                args=(source, self.endpoint, m.rate_hz, self._stop),
                name="teleop-publisher",
                daemon=True,
            )
            control = threading.Thread(
                target=self._control_loop, name="teleop-control", daemon=True
            )
            self._threads = [publisher, control]
            publisher.start()
            control.start()
        except BaseException:
            self.stop()
            raise
        return self

    def _control_loop(self) -> None:
        m = self.manifest
        dt = 1.0 / m.rate_hz
        period_ns = int(round(1e9 / m.rate_hz))
        state = self.session.initial_state()
        fstate = _sim.initial_state(self.follower)
        params = _sim.TrackingParams.from_config(self.follower)
        assert self.subscriber is not None
        cell = self.subscriber.cell
        next_tick = time.monotonic_ns() + period_ns
        while not self._stop.is_set():
            now = time.monotonic_ns()
            if now < next_tick:
                time.sleep(min(dt, (next_tick - now) / 1e9))
                continue
            next_tick += period_ns
            frame, stale = cell.snapshot()
            state, events, cmd = self.session.step(state, frame, fstate, dt, stale=stale)
            fstate = _sim.step_follower(fstate, cmd, dt, params)
            self.ticks += 1
            if self._event_file is not None:
                for event in events:
                    self._event_file.write(event.log_line() + "\n")
                if events:
                    self._event_file.flush()
            if self.bridge is not None:
                latency_ms = None
                if frame is not None:
                    latency_ms = (time.monotonic_ns() - frame.stamp_ns) / 1e6
                self.bridge.publish(
                    console_state_message(
                        stamp_ns=time.monotonic_ns(),
                        session_state=state,
                        follower_state=fstate,
                        cmd=cmd,
                        stale=stale,
                        latency_ms=latency_ms,
                    ),
                    events,
                )

    def stop(self) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._threads = []
        if self.subscriber is not None:
            self.subscriber.stop()
            self.subscriber = None
        if self.echo is not None:
            self.echo.stop()
            self.echo = None
        if self.bridge is not None:
            self.bridge.stop()
            self.bridge = None
        if self._event_file is not None:
            self._event_file.close()
            self._event_file = None

    def __enter__(self) -> "TeleopNode":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# --- subcommands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        leader = load_config(args.leader)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"{args.leader}: ok ({leader.role.value}, {len(leader.limbs)} limbs, "
          f"{len(leader.schema())} joints)")
    if args.follower is None:
        return 0
    try:
        follower = load_config(args.follower)
        report = validate_mapping(leader, follower)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"{args.follower}: ok ({follower.role.value}, {len(follower.limbs)} limbs, "
          f"{len(follower.schema())} joints)")
    print(report.summary(follower))
    return 0


def cmd_run(args) -> int:
    manifest = RunManifest(
        leader=args.leader,
        follower=args.follower,
        source=args.source,
        endpoint=args.endpoint or _default_state_endpoint(),
        rate_hz=args.rate,
        log_dir=args.log_dir,
        console=args.console,
        console_port=args.console_port,
        console_assets=args.console_assets,
        duration_s=args.duration,
    )
    manifest.validate()
    node = TeleopNode(manifest)
    stop = threading.Event()

    def _on_signal(signum, _frame):
        stop.set()

    previous = {}
    for sig in (signal.SIGINT, signal.SIGTERM):
        previous[sig] = signal.signal(sig, _on_signal)
    try:
        node.start()
        print(
            f"node up: endpoint {node.endpoint}, rate {manifest.rate_hz} Hz"
            + (f", console :{manifest.console_port}" if node.bridge else ""),
            flush=True,
        )
        deadline = (
            None
            if manifest.duration_s is None
            else time.monotonic() + manifest.duration_s
        )
        while not stop.is_set():
            if deadline is not None and time.monotonic() >= deadline:
                break
            stop.wait(0.1)
    finally:
        node.stop()
        for sig, handler in previous.items():
            signal.signal(sig, handler)
    print(f"shutdown: {node.ticks} control ticks")
    return 0


def cmd_bench_latency(args) -> int:
    endpoint = args.endpoint or _default_probe_endpoint()
    echo = None
    try:
        echo = EchoServer(endpoint).start()
    except OSError:
        echo = None  # something (a running node) already serves the endpoint
    try:
        report = _transport.latency_probe(endpoint, args.duration, args.rate)
    except InsufficientSamples as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        if echo is not None:
            echo.stop()
    doc = report.as_dict()
    print(
        f"latency over {endpoint}: mean {doc['mean_ms']:.3f} ms, "
        f"median {doc['median_ms']:.3f} ms, p99 {doc['p99_ms']:.3f} ms, "
        f"loss {report.loss_fraction:.1%} ({report.n_received}/{report.n_sent})"
    )
    out = Path(args.report)
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"report written to {out}")
    return 0


def cmd_scenario(args) -> int:
    if not Path(args.script).is_file():
        print(f"usage error: no such scenario file: {args.script}", file=sys.stderr)
        return 2
    report = _sim.run_scenario(args.script)
    for line in report.event_lines():
        print(line)
    if args.log_dir:
        report.write_logs(args.log_dir)
    if report.failures:
        for failure in report.failures:
            print(f"FAIL {report.name}: {failure}", file=sys.stderr)
        return 1
    print(f"PASS {report.name}: {len(report.events)} events over "
          f"{report.duration_s:.1f} s")
    return 0


def cmd_record(args) -> int:
    leader = load_config(args.leader)
    provider = _build_source(args.source, leader, None)
    trace = _source.record(
        provider, args.out, rate_hz=args.rate, duration_s=args.duration
    )
    print(f"recorded {len(trace.frames)} frames to {args.out}")
    return 0


def cmd_replay(args) -> int:
    leader = load_config(args.leader)
    follower = load_config(args.follower)
    trace = _source.load_trace(args.trace)
    provider = _source.replay(trace, leader.schema(), speed=args.speed)
    session = Session(leader, follower)
    state = session.initial_state()
    fstate = _sim.initial_state(follower)
    params = _sim.TrackingParams.from_config(follower)
    rate_hz = args.rate or trace.rate_hz
    dt = 1.0 / rate_hz
    n = int(round((provider.duration_s or 0.0) * rate_hz)) + 1
    events = []
    for k in range(1, n + 1):
        t = k * dt
        s = provider.sample(t)
        frame = _transport.make_frame(
            seq=k,
            stamp_ns=int(round(t * 1e9)),
            positions=s.positions,
            velocities=s.velocities,
            triggers=s.triggers,
            quat=s.quat,
        )
        state, tick_events, cmd = session.step(state, frame, fstate, dt)
        fstate = _sim.step_follower(fstate, cmd, dt, params)
        events.extend(tick_events)
    for event in events:
        print(event.log_line())
    print(
        f"replayed {len(trace.frames)} frames ({n} ticks at {rate_hz:g} Hz): "
        f"final phase {state.phase.value}, base at "
        f"({fstate.base_pose[0]:.3f}, {fstate.base_pose[1]:.3f})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleop",
        description="Leader-follower whole-body teleoperation stack.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="lint configs and the joint mapping")
    p.add_argument("leader", help="leader config path")
    p.add_argument("follower", nargs="?", help="follower config path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a live leader/follower node")
    p.add_argument("--leader", required=True)
    p.add_argument("--follower", required=True)
    p.add_argument(
        "--source",
        default="synth:hold",
        help="synth:hold | synth:sine[:amp:hz] | replay:PATH | console",
    )
    p.add_argument("--endpoint", default=None, help="state UDP endpoint")
    p.add_argument("--rate", type=float, default=100.0, help="control rate Hz")
    p.add_argument("--duration", type=float, default=None, help="stop after N s")
    p.add_argument("--log-dir", default=None)
    p.add_argument("--console", action="store_true", help="serve the console bridge")
    p.add_argument("--console-port", type=int, default=_default_console_port())
    p.add_argument(
        "--console-assets",
        default=None,
        help="static dir served over HTTP on the console port "
        "(default: frontend/dist when present)",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench-latency", help="measure loopback one-way latency")
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--endpoint", default=None, help="probe UDP endpoint")
    p.add_argument("--report", default="latency_report.json")
    p.set_defaults(func=cmd_bench_latency)

    p = sub.add_parser("scenario", help="run a scripted regression scenario")
    p.add_argument("script", help="scenario YAML path")
    p.add_argument("--log-dir", default=None)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("record", help="record a synthetic source to a trace")
    p.add_argument("--leader", required=True)
    p.add_argument("--source", default="synth:sine:0.2:0.5")
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--out", required=True, help="trace output path (.chtrace)")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="replay a trace through the stack")
    p.add_argument("trace", help="trace path (.chtrace)")
    p.add_argument("--leader", required=True)
    p.add_argument("--follower", required=True)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=None)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "rate", None) is not None and args.rate <= 0:
        parser.error("--rate must be > 0")
    if getattr(args, "duration", None) is not None and args.duration <= 0:
        parser.error("--duration must be > 0")
    if getattr(args, "speed", None) is not None and args.speed <= 0:
        parser.error("--speed must be > 0")
    try:
        return args.func(args)
    except (
        ConfigError,
        MappingError,
        _sim.ScriptError,
        _source.EmptyTrace,
        _source.TraceFormatError,
        LimitViolation,
        TransportError,
        ValueError,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
