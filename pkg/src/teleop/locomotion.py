"""Locomotion controller: joystick-leg hip angles to planar base velocity.

When a leg is engaged as a joystick, its hip roll/pitch/yaw deflections from
the neutral pose captured at engagement map to lateral (vy), forward (vx) and
rotational (wz) velocity. The deadband is subtracted from the error rather
than gated, so the output is continuous at the deadband edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class JoystickCalibration:
    """Deadband, per-axis gains and saturation for hip-joystick control.

    ``neutral`` is the (roll, pitch, yaw) hip pose treated as zero stick
    deflection; it is recaptured every time the joystick is engaged.
    """

    deadband: float = 0.05
    roll_gain: float = 1.0
    pitch_gain: float = 1.0
    yaw_gain: float = 1.0
    vx_max: float = 0.6
    vy_max: float = 0.4
    wz_max: float = 1.0
    neutral: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        if self.deadband < 0:
            raise ValueError("deadband must be >= 0")
        for name in ("roll_gain", "pitch_gain", "yaw_gain"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("vx_max", "vy_max", "wz_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class VelocityCommand:
    """Planar base velocity: forward vx [m/s], left vy [m/s], ccw wz [rad/s]."""

    vx: float = 0.0
    vy: float = 0.0
    wz: float = 0.0
    stamp_ns: int = 0

    def is_zero(self) -> bool:
        return self.vx == 0.0 and self.vy == 0.0 and self.wz == 0.0


def _axis(error: float, deadband: float, gain: float, limit: float) -> float:
    # piecewise-linear deadband: shift the error so output is continuous
    if abs(error) <= deadband:
        return 0.0
    v = gain * (error - math.copysign(deadband, error))
    return max(-limit, min(limit, v))


def hip_to_velocity(
    hip_roll: float,
    hip_pitch: float,
    hip_yaw: float,
    cal: JoystickCalibration,
    engaged: bool,
    stamp_ns: int = 0,
) -> VelocityCommand:
    """Map hip deflections to a saturated velocity command.

    Disengaged legs always command exactly zero velocity. Axis mapping:
    roll -> vy, pitch -> vx, yaw -> wz.
    """
    if not engaged:
        return VelocityCommand(0.0, 0.0, 0.0, stamp_ns)
    n_roll, n_pitch, n_yaw = cal.neutral
    vy = _axis(hip_roll - n_roll, cal.deadband, cal.roll_gain, cal.vy_max)
    vx = _axis(hip_pitch - n_pitch, cal.deadband, cal.pitch_gain, cal.vx_max)
    wz = _axis(hip_yaw - n_yaw, cal.deadband, cal.yaw_gain, cal.wz_max)
    return VelocityCommand(vx, vy, wz, stamp_ns)


def capture_neutral(
    hip_roll: float, hip_pitch: float, hip_yaw: float, cal: JoystickCalibration
) -> JoystickCalibration:
    """Return a calibration with neutral set to the hip pose at engagement."""
    return replace(cal, neutral=(hip_roll, hip_pitch, hip_yaw))
