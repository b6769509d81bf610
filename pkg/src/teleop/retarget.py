"""Direct joint controller: leader-to-follower joint mapping and IMU commands.

Joint vectors are plain float arrays ordered by the device's flattened joint
schema. Mapped follower joints get sign * leader_position + offset clamped to
their limits; unmapped follower joints are commanded to their home position.

Orientation uses unit quaternions (w, x, y, z) and intrinsic Z-Y-X euler
angles (yaw, pitch, roll). At gimbal lock (|pitch| within 1e-3 of pi/2) roll
is set to zero and the full twist folded into yaw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import config as _config

if TYPE_CHECKING:
    from .config import DeviceConfig
    from .transport import StateFrame

# Pitch distance to +-pi/2 below which the yaw/roll split is degenerate and
# we fold the twist into yaw.  Snapping throws away up to ~margin of true
# rotation while the generic branch loses ~1e-16/margin to conditioning, so
# 1e-7 keeps both comfortably under the 1e-6 reconstruction guarantee.
GIMBAL_LOCK_MARGIN = 1e-7
UNIT_QUAT_TOL = 1e-6


class NonUnitQuaternion(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic Z-Y-X decomposition: yaw about Z, then pitch, then roll."""

    roll: float
    pitch: float
    yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


def _check_unit(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise NonUnitQuaternion(f"quaternion must have 4 components, got {q.shape}")
    norm = math.sqrt(float(np.dot(q, q)))
    if abs(norm - 1.0) > UNIT_QUAT_TOL:
        raise NonUnitQuaternion(f"quaternion norm {norm} deviates from 1")
    return q


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_to_euler(q) -> EulerAngles:
    """Decompose a unit quaternion into intrinsic Z-Y-X euler angles.

    Near gimbal lock the yaw/roll pair is degenerate; roll is reported as 0
    and the remaining twist goes into yaw, so the recomposed rotation matches
    the input even though individual angles are conventional.
    """
    q = _check_unit(q)
    w, x, y, z = q
    # R = Rz(yaw) @ Ry(pitch) @ Rx(roll); R[2,0] = -sin(pitch)
    sinp = 2.0 * (w * y - z * x)
    sinp = max(-1.0, min(1.0, sinp))
    pitch = math.asin(sinp)
    if abs(pitch) > math.pi / 2 - GIMBAL_LOCK_MARGIN:
        # fold the twist into yaw: with roll := 0, R11 = cos(yaw), R01 = -sin(yaw)
        r11 = 1 - 2 * (x * x + z * z)
        r01 = 2 * (x * y - w * z)
        return EulerAngles(0.0, pitch, math.atan2(-r01, r11))
    roll = math.atan2(2.0 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    yaw = math.atan2(2.0 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return EulerAngles(roll, pitch, yaw)


def euler_to_quat(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for intrinsic Z-Y-X euler angles."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


@dataclass(frozen=True, eq=False)
class ResolvedMapping:
    """Index-level mapping precomputed from a validated config pair.

    Immutable; shared read-only by the per-tick control path.
    """

    n_leader: int
    follower_names: tuple[str, ...]
    leader_idx: np.ndarray  # into the leader joint vector
    follower_idx: np.ndarray  # into the follower joint vector
    sign: np.ndarray
    offset: np.ndarray
    low: np.ndarray  # follower limits / home, full schema
    high: np.ndarray
    home: np.ndarray
    imu_mode: _config.ImuMode
    torso_idx: np.ndarray | None  # follower indices of (yaw, roll, pitch) joints


def resolve_mapping(leader: "DeviceConfig", follower: "DeviceConfig") -> ResolvedMapping:
    """Validate the pair and bake the mapping down to index arrays."""
    _config.validate_mapping(leader, follower)
    mapping = follower.mapping
    assert mapping is not None
    lsch, fsch = leader.schema(), follower.schema()
    leader_idx = np.array([lsch.index[p.leader] for p in mapping.pairs], dtype=int)
    follower_idx = np.array([fsch.index[p.follower] for p in mapping.pairs], dtype=int)
    torso_idx = None
    if mapping.torso_joints is not None:
        torso_idx = np.array([fsch.index[n] for n in mapping.torso_joints], dtype=int)
    return ResolvedMapping(
        n_leader=len(lsch.names),
        follower_names=fsch.names,
        leader_idx=leader_idx,
        follower_idx=follower_idx,
        sign=np.array([float(p.sign) for p in mapping.pairs]),
        offset=np.array([p.offset for p in mapping.pairs]),
        low=fsch.low.copy(),
        high=fsch.high.copy(),
        home=fsch.home.copy(),
        imu_mode=mapping.imu_mode,
        torso_idx=torso_idx,
    )


@dataclass
class RetargetOutput:
    """Follower joint targets plus the orientation command for this tick."""

    targets: np.ndarray
    torso_command: EulerAngles | None = None
    base_orientation: np.ndarray | None = None
    clamped: tuple[str, ...] = ()


def map_joints_batch(
    positions: np.ndarray, rm: ResolvedMapping
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized mapping of (..., n_leader) positions to follower targets.

    Returns (targets, clamped_mask) with shapes (..., n_follower).
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape[-1] != rm.n_leader:
        raise SchemaMismatch(
            f"leader frame has {positions.shape[-1]} joints, schema expects {rm.n_leader}"
        )
    targets = np.broadcast_to(rm.home, positions.shape[:-1] + rm.home.shape).copy()
    targets[..., rm.follower_idx] = rm.sign * positions[..., rm.leader_idx] + rm.offset
    clipped = np.clip(targets, rm.low, rm.high)
    clamped = clipped != targets
    return clipped, clamped


def map_joints(frame: "StateFrame", rm: ResolvedMapping) -> RetargetOutput:
    """Map one leader frame's joints onto follower targets (no IMU handling)."""
    targets, clamped = map_joints_batch(frame.positions, rm)
    names = tuple(rm.follower_names[i] for i in np.flatnonzero(clamped))
    return RetargetOutput(targets=targets, clamped=names)


def imu_to_command(
    orientation, rm: ResolvedMapping
) -> tuple[EulerAngles | None, np.ndarray | None]:
    """IMU orientation as (torso_command, base_orientation) per the imu mode."""
    mode = rm.imu_mode
    if mode is _config.ImuMode.DISABLED:
        return None, None
    if mode is _config.ImuMode.FLOATING_BASE:
        return None, _check_unit(orientation).copy()
    return quat_to_euler(orientation), None


def retarget(frame: "StateFrame", rm: ResolvedMapping) -> RetargetOutput:
    """Full per-tick retarget: joint mapping plus the IMU orientation command."""
    out = map_joints(frame, rm)
    torso_cmd, base_quat = imu_to_command(frame.quat, rm)
    out.torso_command = torso_cmd
    out.base_orientation = base_quat
    if rm.imu_mode is _config.ImuMode.TORSO_JOINTS:
        assert rm.torso_idx is not None and torso_cmd is not None
        raw = np.array([torso_cmd.yaw, torso_cmd.roll, torso_cmd.pitch])
        clipped = np.clip(raw, rm.low[rm.torso_idx], rm.high[rm.torso_idx])
        out.targets[rm.torso_idx] = clipped
        extra = tuple(
            rm.follower_names[rm.torso_idx[i]]
            for i in range(3)
            if clipped[i] != raw[i]
        )
        out.clamped = tuple(n for n in out.clamped if n not in extra) + extra
    elif rm.imu_mode is _config.ImuMode.FLOATING_BASE and rm.torso_idx is not None:
        # waist joints stay fixed at home while the base takes the orientation
        out.targets[rm.torso_idx] = rm.home[rm.torso_idx]
    return out
