"""Adaptive force feedback: phase-scaled spring torques toward a base pose.

Each leader joint carries a virtual spring pulling it toward a base position.
The emitted torque is the restoring torque -m * k * (q - q_base), i.e. the
negative gradient of the spring potential 0.5 * m * k * (q - q_base)^2,
clamped per joint. The multiplier m depends on the teleoperation phase so a
deactivated arm is pulled back noticeably harder than an arm under control.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Mapping

import numpy as np

if TYPE_CHECKING:  # only for annotations; avoids an import cycle at runtime
    from .config import DeviceConfig
    from .session import SessionState


class FeedbackPhase(Enum):
    IDLE = "idle"
    SYNCHRONIZING = "synchronizing"
    NORMAL_ACTIVE = "normal_active"
    DEACTIVATED_ARM = "deactivated_arm"


DEFAULT_MULTIPLIERS: Mapping[FeedbackPhase, float] = {
    FeedbackPhase.IDLE: 0.0,
    FeedbackPhase.SYNCHRONIZING: 0.5,
    FeedbackPhase.NORMAL_ACTIVE: 1.0,
    FeedbackPhase.DEACTIVATED_ARM: 3.0,
}


class UnknownLimb(KeyError):
    """A feedback query referenced a limb absent from the device config."""


class LimitViolation(ValueError):
    """A base pose was set outside the joint limits."""


class SchemaMismatch(ValueError):
    """Joint vector length disagrees with the expected schema."""


@dataclass(frozen=True)
class GainSchedule:
    """Per-phase multiplier on the spring torques."""

    multipliers: dict[FeedbackPhase, float] = field(
        default_factory=lambda: dict(DEFAULT_MULTIPLIERS)
    )

    def multiplier(self, phase: FeedbackPhase) -> float:
        return self.multipliers[phase]

    def validate(self) -> None:
        for phase in FeedbackPhase:
            if phase not in self.multipliers:
                raise ValueError(f"missing multiplier for phase {phase.value}")
            if self.multipliers[phase] < 0:
                raise ValueError(f"multiplier for {phase.value} must be >= 0")
        if self.multipliers[FeedbackPhase.DEACTIVATED_ARM] < self.multipliers[
            FeedbackPhase.NORMAL_ACTIVE
        ]:
            raise ValueError(
                "deactivated_arm multiplier must be >= normal_active multiplier"
            )


@dataclass(frozen=True)
class FeedbackConfig:
    """Spring constants and the gain schedule, as read from a device config.

    ``stiffness`` is either one scalar for every joint or a per-joint-name map;
    joints absent from the map get zero stiffness.
    """

    stiffness: float | dict[str, float] = 2.0
    tau_max: float = 1.5
    schedule: GainSchedule = field(default_factory=GainSchedule)

    def stiffness_for(self, joint_names) -> np.ndarray:
        if isinstance(self.stiffness, dict):
            return np.array(
                [self.stiffness.get(n, 0.0) for n in joint_names], dtype=float
            )
        return np.full(len(joint_names), float(self.stiffness))

    def validate(self) -> None:
        values = (
            self.stiffness.values()
            if isinstance(self.stiffness, dict)
            else [self.stiffness]
        )
        for k in values:
            if k < 0:
                raise ValueError("stiffness must be >= 0")
        if self.tau_max <= 0:
            raise ValueError("tau_max must be > 0")
        self.schedule.validate()


@dataclass(frozen=True)
class SpringParams:
    """Diagonal stiffness and base pose for one limb's joints."""

    k: np.ndarray
    q_base: np.ndarray
    tau_max: float = 1.5


def bias_torque(
    q: np.ndarray,
    params: SpringParams,
    phase: FeedbackPhase,
    schedule: GainSchedule,
) -> np.ndarray:
    """Restoring torque -m(phase) * k * (q - q_base), clamped to +-tau_max."""
    q = np.asarray(q, dtype=float)
    if q.shape != params.q_base.shape:
        raise SchemaMismatch(
            f"joint vector length {q.shape} != spring params {params.q_base.shape}"
        )
    tau = -schedule.multiplier(phase) * params.k * (q - params.q_base)
    return np.clip(tau, -params.tau_max, params.tau_max)


def phase_of(state: "SessionState", limb: str, cfg: "DeviceConfig") -> FeedbackPhase:
    """Feedback phase for one limb given the current session state."""
    spec = cfg.find_limb(limb)
    if spec is None:
        raise UnknownLimb(limb)
    phase_name = state.phase.name
    if phase_name == "SYNCHRONIZING":
        return FeedbackPhase.SYNCHRONIZING
    if phase_name != "ACTIVE":
        return FeedbackPhase.IDLE
    if spec.kind.name == "ARM" and not state.arm_active(spec.side()):
        return FeedbackPhase.DEACTIVATED_ARM
    return FeedbackPhase.NORMAL_ACTIVE


def set_base_pose(
    params: SpringParams,
    q: np.ndarray,
    low: np.ndarray,
    high: np.ndarray,
) -> SpringParams:
    """Replace the base pose, e.g. to freeze a deactivated arm's return target."""
    q = np.asarray(q, dtype=float)
    if q.shape != params.q_base.shape:
        raise SchemaMismatch(
            f"base pose length {q.shape} != spring params {params.q_base.shape}"
        )
    if np.any(q < low) or np.any(q > high):
        bad = [i for i in range(len(q)) if q[i] < low[i] or q[i] > high[i]]
        raise LimitViolation(f"base pose outside joint limits at indices {bad}")
    return replace(params, q_base=q.copy())
