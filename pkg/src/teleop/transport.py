"""UDP state transport: binary frame codec, latest-value cell, latency probe.

Wire layout (little-endian), one frame per datagram:

    magic(2) | version(1) | flags(1) | seq(u64) | stamp_ns(u64) |
    n_joints(u16) | n_grippers(u8) | positions(f32 * n) | velocities(f32 * n) |
    triggers(f32 * g) | quat(f32 * 4, wxyz) | crc32(u32, IEEE, all prior bytes)

Fresh state beats reliable delivery: there is no retransmission, receivers
keep only the newest sequence number, and stale or duplicate frames are
dropped and counted. Frame values are quantized to float32 at construction so
encode/decode round-trips are exact.

The decoder checks the CRC before any structural field so that any single
corrupted bit in a well-formed datagram surfaces as BadCrc.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

DEFAULT_STATE_PORT = 47555
DEFAULT_PROBE_PORT = 47556
DEFAULT_STALENESS_TIMEOUT_S = 0.2

MAGIC = b"\xa5\x5a"
VERSION = 1
_HEADER = struct.Struct("<2sBBQQHB")  # 23 bytes
_CRC = struct.Struct("<I")
MIN_FRAME_LEN = _HEADER.size + 4 * 4 + _CRC.size  # empty frame: 43 bytes


class TransportError(Exception):
    pass


class EncodeError(TransportError):
    pass


class DecodeError(TransportError):
    pass


class BadMagic(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class BadCrc(DecodeError):
    pass


class BadLength(DecodeError):
    pass


class FrameInvariantError(DecodeError):
    """Decoded fields violate StateFrame invariants (e.g. non-unit quaternion)."""


class InsufficientSamples(TransportError):
    pass


def parse_endpoint(endpoint: str, default_port: int = DEFAULT_STATE_PORT) -> tuple[str, int]:
    """Split a 'host:port' string; a bare host gets the default port."""
    host, _, port = endpoint.rpartition(":")
    if not host:
        return endpoint, default_port
    return host, int(port)


@dataclass(frozen=True, eq=False)
class StateFrame:
    """Timestamped leader snapshot; array fields are float32 in schema order."""

    seq: int
    stamp_ns: int
    positions: np.ndarray
    velocities: np.ndarray
    triggers: np.ndarray
    quat: np.ndarray  # (w, x, y, z)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateFrame):
            return NotImplemented
        return (
            self.seq == other.seq
            and self.stamp_ns == other.stamp_ns
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.velocities, other.velocities)
            and np.array_equal(self.triggers, other.triggers)
            and np.array_equal(self.quat, other.quat)
        )

    __hash__ = None  # type: ignore[assignment]

    def validate(self) -> None:
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 1:
            raise FrameInvariantError("positions and velocities must match 1-d shapes")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise FrameInvariantError("joint values must be finite")
        if self.triggers.size and (
            not np.all(np.isfinite(self.triggers))
            or np.any(self.triggers < 0.0)
            or np.any(self.triggers > 1.0)
        ):
            raise FrameInvariantError("gripper triggers must be within [0, 1]")
        if self.quat.shape != (4,) or not np.all(np.isfinite(self.quat)):
            raise FrameInvariantError("quaternion must be 4 finite components")
        norm = float(np.sqrt(np.dot(self.quat.astype(float), self.quat.astype(float))))
        if abs(norm - 1.0) > 1e-6:
            raise FrameInvariantError(f"quaternion norm {norm} deviates from 1")
        if self.seq < 0 or self.stamp_ns < 0:
            raise FrameInvariantError("seq and stamp_ns must be non-negative")


def make_frame(
    seq: int,
    stamp_ns: int,
    positions,
    velocities=None,
    triggers=(),
    quat=(1.0, 0.0, 0.0, 0.0),
) -> StateFrame:
    """Build a validated StateFrame, quantizing all values to float32."""
    positions = np.asarray(positions, dtype=np.float32)
    if velocities is None:
        velocities = np.zeros_like(positions)
    q = np.asarray(quat, dtype=float)
    n = math.sqrt(float(np.dot(q, q)))
    if n > 0:
        q = q / n
    frame = StateFrame(
        seq=int(seq),
        stamp_ns=int(stamp_ns),
        positions=positions,
        velocities=np.asarray(velocities, dtype=np.float32),
        triggers=np.asarray(triggers, dtype=np.float32),
        quat=q.astype(np.float32),
    )
    frame.validate()
    return frame


def encode_frame(frame: StateFrame) -> bytes:
    """Serialize a frame to the wire layout. Assumes frame invariants hold."""
    n = frame.positions.size
    g = frame.triggers.size
    if n > 0xFFFF:
        raise EncodeError(f"joint count {n} exceeds 65535")
    if g > 0xFF:
        raise EncodeError(f"gripper count {g} exceeds 255")
    body = b"".join(
        (
            _HEADER.pack(MAGIC, VERSION, 0, frame.seq, frame.stamp_ns, n, g),
            frame.positions.astype("<f4").tobytes(),
            frame.velocities.astype("<f4").tobytes(),
            frame.triggers.astype("<f4").tobytes(),
            frame.quat.astype("<f4").tobytes(),
        )
    )
    return body + _CRC.pack(zlib.crc32(body))


def decode_frame(data: bytes) -> StateFrame:
    """Parse and validate one datagram; never raises anything but DecodeError."""
    if len(data) < MIN_FRAME_LEN:
        raise BadLength(f"datagram of {len(data)} bytes is below minimum {MIN_FRAME_LEN}")
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[: -_CRC.size]) != crc:
        raise BadCrc("crc32 mismatch")
    magic, version, _flags, seq, stamp_ns, n, g = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    expected = _HEADER.size + 4 * (2 * n + g + 4) + _CRC.size
    if len(data) != expected:
        raise BadLength(f"datagram is {len(data)} bytes, layout implies {expected}")
    off = _HEADER.size
    floats = np.frombuffer(data, dtype="<f4", count=2 * n + g + 4, offset=off)
    frame = StateFrame(
        seq=seq,
        stamp_ns=stamp_ns,
        positions=floats[:n].copy(),
        velocities=floats[n : 2 * n].copy(),
        triggers=floats[2 * n : 2 * n + g].copy(),
        quat=floats[2 * n + g :].copy(),
    )
    frame.validate()
    return frame


class LatestCell:
    """Single-writer latest-value cell with staleness tracking.

    offer() accepts only frames with a strictly greater seq; readers get the
    newest frame without ever blocking the writer. Staleness is judged from
    the local receive time so a skewed sender clock cannot mask link loss.
    """

    def __init__(
        self,
        staleness_timeout_s: float = DEFAULT_STALENESS_TIMEOUT_S,
        clock=time.monotonic_ns,
    ):
        self._lock = threading.Lock()
        self._clock = clock
        self._frame: StateFrame | None = None
        self._recv_ns = 0
        self.staleness_timeout_s = staleness_timeout_s
        self.accepted = 0
        self.drops = 0

    def offer(self, frame: StateFrame) -> bool:
        """Store the frame if newer than the current one; count it otherwise."""
        with self._lock:
            if self._frame is not None and frame.seq <= self._frame.seq:
                self.drops += 1
                return False
            self._frame = frame
            self._recv_ns = self._clock()
            self.accepted += 1
            return True

    def latest(self) -> StateFrame | None:
        with self._lock:
            return self._frame

    def age_ns(self, now_ns: int | None = None) -> int | None:
        """Nanoseconds since the newest frame arrived; None if none ever did."""
        with self._lock:
            if self._frame is None:
                return None
            return (self._clock() if now_ns is None else now_ns) - self._recv_ns

    def stale(self, now_ns: int | None = None) -> bool:
        age = self.age_ns(now_ns)
        return age is None or age > self.staleness_timeout_s * 1e9

    def snapshot(self) -> tuple[StateFrame | None, bool]:
        return self.latest(), self.stale()


@dataclass
class PublishStats:
    sent: int = 0
    dropped: int = 0  # injected drops plus OS-level send failures
    intervals_ns: list[int] = field(default_factory=list)

    def jitter_ns(self) -> float:
        if len(self.intervals_ns) < 2:
            return 0.0
        return float(np.std(self.intervals_ns))


def publish_loop(
    source,
    endpoint: str,
    rate_hz: float,
    stop: threading.Event,
    *,
    send_hook=None,
    max_frames: int | None = None,
) -> PublishStats:
    """Sample ``source`` at rate_hz and send one frame per tick until stopped.

    ``source.sample(t)`` supplies (positions, velocities, triggers, quat) for
    elapsed seconds t. seq increases by one per tick even when a send fails,
    so receiver-side seq gaps equal the sender's drop count. ``send_hook``
    (frame, payload) -> bool can veto sends for loss-injection tests.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be > 0")
    addr = parse_endpoint(endpoint)
    period_ns = int(round(1e9 / rate_hz))
    stats = PublishStats()
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        t0 = time.monotonic_ns()
        last_send_ns = None
        seq = 0
        while not stop.is_set():
            if max_frames is not None and seq >= max_frames:
                break
            now = time.monotonic_ns()
            sample = source.sample((now - t0) / 1e9)
            frame = make_frame(
                seq,
                now,
                sample.positions,
                sample.velocities,
                sample.triggers,
                sample.quat,
            )
            payload = encode_frame(frame)
            wanted = send_hook is None or send_hook(frame, payload)
            if wanted:
                try:
                    sock.sendto(payload, addr)
                    stats.sent += 1
                    if last_send_ns is not None:
                        stats.intervals_ns.append(now - last_send_ns)
                    last_send_ns = now
                except OSError:
                    stats.dropped += 1
            else:
                stats.dropped += 1
            seq += 1
            next_tick = t0 + seq * period_ns
            delay = next_tick - time.monotonic_ns()
            if delay > 0:
                stop.wait(delay / 1e9)
    finally:
        sock.close()
    return stats


class Subscriber:
    """Receive thread feeding a LatestCell from a bound UDP endpoint."""

    def __init__(
        self,
        endpoint: str,
        cell: LatestCell | None = None,
        staleness_timeout_s: float = DEFAULT_STALENESS_TIMEOUT_S,
    ):
        self.cell = cell or LatestCell(staleness_timeout_s)
        self._addr = parse_endpoint(endpoint)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._sock: socket.socket | None = None
        self.received = 0
        self.decode_errors = 0

    def start(self) -> "Subscriber":
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(self._addr)
        self._sock.settimeout(0.05)
        self._thread = threading.Thread(target=self._run, name="teleop-subscriber", daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        assert self._sock is not None
        while not self._stop.is_set():
            try:
                data, _ = self._sock.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                frame = decode_frame(data)
            except DecodeError:
                self.decode_errors += 1
                continue
            self.received += 1
            self.cell.offer(frame)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self) -> "Subscriber":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


@dataclass(frozen=True)
class LatencySample:
    seq: int
    send_ns: int
    recv_ns: int
    one_way_ns: int


@dataclass
class LatencyReport:
    mean_ns: float
    median_ns: float
    p99_ns: float
    loss_fraction: float
    n_sent: int
    n_received: int

    def as_dict(self) -> dict:
        return {
            "mean_ms": self.mean_ns / 1e6,
            "median_ms": self.median_ns / 1e6,
            "p99_ms": self.p99_ns / 1e6,
            "loss_fraction": self.loss_fraction,
            "n_sent": self.n_sent,
            "n_received": self.n_received,
        }


class EchoServer:
    """UDP echo endpoint for the latency probe."""

    def __init__(self, endpoint: str):
        self._addr = parse_endpoint(endpoint, DEFAULT_PROBE_PORT)
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._sock: socket.socket | None = None

    def start(self) -> "EchoServer":
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(self._addr)
        self._sock.settimeout(0.05)
        self._thread = threading.Thread(target=self._run, name="teleop-echo", daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        assert self._sock is not None
        while not self._stop.is_set():
            try:
                data, addr = self._sock.recvfrom(1024)
                self._sock.sendto(data, addr)
            except socket.timeout:
                continue
            except OSError:
                break

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self) -> "EchoServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


_PROBE = struct.Struct("<QQ")


def latency_probe(
    endpoint: str, duration_s: float, rate_hz: float
) -> LatencyReport:
    """Measure one-way latency against a UDP echo endpoint.

    Sends timestamped probes at rate_hz for duration_s and halves the echoed
    round trip, so the figure is valid on a single clock without a handshake.
    Raises InsufficientSamples when nothing can be measured or loss > 50%.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be > 0")
    n_probes = int(duration_s * rate_hz)
    if n_probes < 1:
        raise InsufficientSamples("probe window shorter than one sample period")
    addr = parse_endpoint(endpoint, DEFAULT_PROBE_PORT)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.settimeout(0.05)
    samples: list[LatencySample] = []
    recv_done = threading.Event()

    def _receiver() -> None:
        while not recv_done.is_set():
            try:
                data, _ = sock.recvfrom(1024)
            except socket.timeout:
                continue
            except OSError:
                return
            recv_ns = time.monotonic_ns()
            if len(data) != _PROBE.size:
                continue
            seq, send_ns = _PROBE.unpack(data)
            rtt = recv_ns - send_ns
            samples.append(LatencySample(seq, send_ns, recv_ns, rtt // 2))

    rx = threading.Thread(target=_receiver, name="teleop-probe-rx", daemon=True)
    rx.start()
    period_ns = int(round(1e9 / rate_hz))
    t0 = time.monotonic_ns()
    try:
        for seq in range(n_probes):
            sock.sendto(_PROBE.pack(seq, time.monotonic_ns()), addr)
            delay = t0 + (seq + 1) * period_ns - time.monotonic_ns()
            if delay > 0:
                time.sleep(delay / 1e9)
        time.sleep(0.2)  # drain in-flight echoes
    finally:
        recv_done.set()
        rx.join(timeout=2.0)
        sock.close()
    if not samples:
        raise InsufficientSamples(f"no echoes received for {n_probes} probes")
    loss = 1.0 - len(samples) / n_probes
    if loss > 0.5:
        raise InsufficientSamples(f"loss {loss:.0%} exceeds 50%")
    one_way = np.array([s.one_way_ns for s in samples], dtype=float)
    return LatencyReport(
        mean_ns=float(one_way.mean()),
        median_ns=float(np.median(one_way)),
        p99_ns=float(np.percentile(one_way, 99)),
        loss_fraction=loss,
        n_sent=n_probes,
        n_received=len(samples),
    )
