"""Teleoperation session state machine.

The session advances through Idle, Arming, Synchronizing and Active. Holding
both grippers closed for three seconds arms and activates a session; the
follower then synchronizes to the leader pose under a per-joint velocity
limit before live tracking begins. In joystick leg mode, holding a single
gripper for one second toggles that side between normal arm teleoperation
and leg-as-joystick locomotion (the arm is deactivated while its leg drives
base velocity, and reactivated by the same gesture).

One owner advances the machine at the control rate via Session.step, reading
the transport's latest frame. States and emitted command sets are immutable
values; a stale link freezes timers, holds the last commands, and forces
zero base velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import feedback as _feedback
from . import retarget as _retarget
from .config import DeviceConfig, LimbKind, Side
from .feedback import SpringParams, bias_torque, phase_of
from .locomotion import (
    JoystickCalibration,
    VelocityCommand,
    capture_neutral,
    hip_to_velocity,
)
from .transport import StateFrame

DEFAULT_ACTIVATION_HOLD_S = 3.0
DEFAULT_TOGGLE_HOLD_S = 1.0
DEFAULT_CLOSE_THRESHOLD = 0.8
DEFAULT_RELEASE_THRESHOLD = 0.6
DEFAULT_SYNC_EPSILON = 0.02
DEFAULT_SYNC_VEL_FRACTION = 0.25


class SessionPhase(Enum):
    IDLE = "idle"
    ARMING = "arming"
    SYNCHRONIZING = "synchronizing"
    ACTIVE = "active"


class GestureKind(Enum):
    SESSION_ACTIVATED = "session_activated"
    SYNC_COMPLETE = "sync_complete"
    JOYSTICK_ENGAGED = "joystick_engaged"
    JOYSTICK_RELEASED = "joystick_released"


@dataclass(frozen=True)
class GestureEvent:
    kind: GestureKind
    side: Side
    stamp_ns: int

    def log_line(self) -> str:
        return f"{self.stamp_ns}\t{self.kind.value}\t{self.side.value}"


@dataclass(frozen=True)
class SessionParams:
    """Gesture timing and synchronization constants.

    Trigger hysteresis: a gripper counts as closed once its trigger reaches
    close_threshold and stays closed until it drops below release_threshold,
    so hold timers do not flap on sensor noise near the threshold.
    """

    activation_hold_s: float = DEFAULT_ACTIVATION_HOLD_S
    toggle_hold_s: float = DEFAULT_TOGGLE_HOLD_S
    close_threshold: float = DEFAULT_CLOSE_THRESHOLD
    release_threshold: float = DEFAULT_RELEASE_THRESHOLD
    sync_epsilon: float = DEFAULT_SYNC_EPSILON
    sync_vel_fraction: float = DEFAULT_SYNC_VEL_FRACTION

    def validate(self) -> None:
        if self.activation_hold_s <= 0 or self.toggle_hold_s <= 0:
            raise ValueError("hold durations must be > 0")
        if not 0 <= self.release_threshold < self.close_threshold <= 1:
            raise ValueError(
                "thresholds must satisfy 0 <= release < close <= 1, got "
                f"release={self.release_threshold} close={self.close_threshold}"
            )
        if self.sync_epsilon <= 0:
            raise ValueError("sync_epsilon must be > 0")
        if not 0 < self.sync_vel_fraction <= 1:
            raise ValueError("sync_vel_fraction must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class SessionState:
    """Full mode state of a session; advanced only by Session.step.

    hold_timers/closed/toggle_consumed align with the leader's gripper order.
    Timers are integer nanoseconds so N ticks of dt accumulate exactly, with
    no float drift at the 3.0 s / 1.0 s gesture boundaries. Arrays are never
    mutated in place; step returns a fresh state.
    """

    phase: SessionPhase = SessionPhase.IDLE
    arming_progress_ns: int = 0
    sync_progress: float = 0.0
    left_leg_joystick: bool = False
    right_leg_joystick: bool = False
    left_arm_active: bool = True
    right_arm_active: bool = True
    hold_timers: tuple[int, ...] = ()
    closed: tuple[bool, ...] = ()
    toggle_consumed: tuple[bool, ...] = ()
    engaged_order: tuple[Side, ...] = ()
    joystick_cals: dict[Side, JoystickCalibration] = field(default_factory=dict)
    sync_reference: np.ndarray | None = None
    sync_initial_error: float = 0.0
    last_targets: np.ndarray | None = None
    q_base: np.ndarray | None = None

    @property
    def arming_progress_s(self) -> float:
        return self.arming_progress_ns / 1e9

    def arm_active(self, side: Side) -> bool:
        if side is Side.LEFT:
            return self.left_arm_active
        if side is Side.RIGHT:
            return self.right_arm_active
        return True

    def leg_joystick(self, side: Side) -> bool:
        if side is Side.LEFT:
            return self.left_leg_joystick
        if side is Side.RIGHT:
            return self.right_leg_joystick
        return False

    def check(self) -> None:
        """State invariant: a joystick-engaged side has its arm deactivated."""
        if self.left_leg_joystick and self.left_arm_active:
            raise AssertionError("left side is joystick-engaged with an active arm")
        if self.right_leg_joystick and self.right_arm_active:
            raise AssertionError("right side is joystick-engaged with an active arm")


@dataclass(frozen=True, eq=False)
class CommandSet:
    """Immutable per-tick output handed to the follower and leader devices.

    targets is None while the session emits no joint commands (Idle/Arming
    and stale-before-first-command); grippers is None when apertures should
    hold. torques cover the leader schema and drive its force feedback.
    """

    stamp_ns: int
    targets: np.ndarray | None
    grippers: np.ndarray | None
    velocity: VelocityCommand
    torques: np.ndarray
    base_orientation: np.ndarray | None = None


def sync_trajectory(
    current: np.ndarray,
    target: np.ndarray,
    vel_limits: np.ndarray,
    dt: float,
) -> np.ndarray:
    """One velocity-limited step from current toward target.

    Per-joint deltas are clipped to vel_limit*dt, so the max error is
    non-increasing and reaches zero in at most max_err/(min_vel*dt) steps.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    step = np.clip(target - current, -vel_limits * dt, vel_limits * dt)
    return current + step


class Session:
    """Owns the resolved mapping and advances SessionState tick by tick."""

    def __init__(
        self,
        leader: DeviceConfig,
        follower: DeviceConfig,
        params: SessionParams | None = None,
    ):
        self.leader = leader
        self.follower = follower
        self.params = params or SessionParams()
        self.params.validate()
        # gesture thresholds in integer ns, matching SessionState timers
        self._activation_ns = round(self.params.activation_hold_s * 1e9)
        self._toggle_ns = round(self.params.toggle_hold_s * 1e9)
        self.mapping = _retarget.resolve_mapping(leader, follower)
        self._lsch = leader.schema()
        self._fsch = follower.schema()
        joystick_mode = (
            follower.mapping is not None
            and follower.mapping.leg_mode.name == "JOYSTICK"
        )
        self._joystick_mode = joystick_mode
        # leader gripper trigger order and the side each trigger belongs to
        self._gripper_sides = tuple(
            limb.side() for limb in leader.limbs if limb.gripper
        )
        self._n_grippers = len(self._gripper_sides)
        # per-side index slices, precomputed once
        self._leader_arm_idx = {}
        self._leader_hip_idx = {}
        self._follower_arm_idx = {}
        self._follower_leg_idx = {}
        self._follower_gripper_pos = {}
        for side in (Side.LEFT, Side.RIGHT):
            arm = leader.limb_on(LimbKind.ARM, side)
            if arm is not None:
                self._leader_arm_idx[side] = leader.joint_indices(arm.name)
            leg = leader.limb_on(LimbKind.LEG, side)
            if leg is not None:
                hips = leg.hip_joint_names()
                self._leader_hip_idx[side] = tuple(
                    self._lsch.index[n] for n in hips
                )
            farm = follower.limb_on(LimbKind.ARM, side)
            if farm is not None:
                self._follower_arm_idx[side] = follower.joint_indices(farm.name)
            fleg = follower.limb_on(LimbKind.LEG, side)
            if fleg is not None:
                self._follower_leg_idx[side] = follower.joint_indices(fleg.name)
        for pos, name in enumerate(follower.gripper_names()):
            limb = follower.find_limb(name)
            assert limb is not None
            self._follower_gripper_pos[limb.side()] = pos
        self._gains = leader.gains
        self._stiffness = self._gains.stiffness_for(self._lsch.names)
        # limb name per leader joint, for phase lookup
        self._leader_limb_slices = [
            (limb.name, leader.joint_indices(limb.name)) for limb in leader.limbs
        ]

    def initial_state(self) -> SessionState:
        n = self._n_grippers
        return SessionState(
            hold_timers=(0,) * n,
            closed=(False,) * n,
            toggle_consumed=(False,) * n,
            q_base=self._lsch.home.copy(),
        )

    # -- per-tick pieces ------------------------------------------------------

    def _update_grips(
        self, state: SessionState, triggers: np.ndarray, dt_ns: int
    ) -> SessionState:
        p = self.params
        closed = list(state.closed)
        hold = list(state.hold_timers)
        consumed = list(state.toggle_consumed)
        for i in range(self._n_grippers):
            t = float(triggers[i]) if i < len(triggers) else 0.0
            if closed[i]:
                if t < p.release_threshold:
                    closed[i] = False
                    hold[i] = 0
                    consumed[i] = False
                else:
                    hold[i] += dt_ns
            elif t >= p.close_threshold:
                closed[i] = True
                hold[i] = dt_ns
        return replace(
            state,
            closed=tuple(closed),
            hold_timers=tuple(hold),
            toggle_consumed=tuple(consumed),
        )

    def _consume_holds(self, state: SessionState) -> SessionState:
        """Mark every currently-closed gripper's hold as spent.

        Called on phase transitions so the activation hold cannot bleed into
        a joystick toggle when the operator releases the grippers staggered.
        """
        consumed = tuple(
            c or closed for c, closed in zip(state.toggle_consumed, state.closed)
        )
        hold = tuple(0 for _ in state.hold_timers)
        return replace(state, toggle_consumed=consumed, hold_timers=hold)

    def _torques(self, state: SessionState, positions: np.ndarray) -> np.ndarray:
        out = np.zeros(len(self._lsch))
        assert state.q_base is not None
        for name, idx in self._leader_limb_slices:
            phase = phase_of(state, name, self.leader)
            params = SpringParams(
                k=self._stiffness[idx],
                q_base=state.q_base[idx],
                tau_max=self._gains.tau_max,
            )
            out[idx] = bias_torque(positions[idx], params, phase, self._gains.schedule)
        return out

    def _hold_command(self, state: SessionState, stamp_ns: int) -> CommandSet:
        targets = None if state.last_targets is None else state.last_targets.copy()
        return CommandSet(
            stamp_ns=stamp_ns,
            targets=targets,
            grippers=None,
            velocity=VelocityCommand(0.0, 0.0, 0.0, stamp_ns),
            torques=np.zeros(len(self._lsch)),
        )

    def _toggle_side(
        self, state: SessionState, side: Side, frame: StateFrame
    ) -> tuple[SessionState, GestureEvent]:
        assert state.q_base is not None
        q_base = state.q_base.copy()
        arm_idx = self._leader_arm_idx.get(side)
        cals = dict(state.joystick_cals)
        order = list(state.engaged_order)
        if state.leg_joystick(side):
            kind = GestureKind.JOYSTICK_RELEASED
            if arm_idx is not None:
                q_base[arm_idx] = self._lsch.home[arm_idx]
            cals.pop(side, None)
            order = [s for s in order if s is not side]
            flags = {"arm": True, "leg": False}
        else:
            kind = GestureKind.JOYSTICK_ENGAGED
            if arm_idx is not None:
                q_base[arm_idx] = frame.positions[arm_idx].astype(float)
            hr, hp, hy = (
                float(frame.positions[j]) for j in self._leader_hip_idx[side]
            )
            cals[side] = capture_neutral(hr, hp, hy, self.leader.locomotion)
            order.append(side)
            flags = {"arm": False, "leg": True}
        if side is Side.LEFT:
            state = replace(
                state, left_arm_active=flags["arm"], left_leg_joystick=flags["leg"]
            )
        else:
            state = replace(
                state, right_arm_active=flags["arm"], right_leg_joystick=flags["leg"]
            )
        state = replace(
            state, q_base=q_base, joystick_cals=cals, engaged_order=tuple(order)
        )
        return state, GestureEvent(kind, side, frame.stamp_ns)

    def _check_toggles(
        self, state: SessionState, frame: StateFrame
    ) -> tuple[SessionState, list[GestureEvent]]:
        if not self._joystick_mode:
            return state, []
        events: list[GestureEvent] = []
        for i, side in enumerate(self._gripper_sides):
            if side not in self._leader_hip_idx:
                continue
            others_closed = any(
                state.closed[j] for j in range(self._n_grippers) if j != i
            )
            if (
                state.closed[i]
                and not others_closed
                and not state.toggle_consumed[i]
                and state.hold_timers[i] >= self._toggle_ns
            ):
                consumed = list(state.toggle_consumed)
                consumed[i] = True
                state = replace(state, toggle_consumed=tuple(consumed))
                state, event = self._toggle_side(state, side, frame)
                events.append(event)
        return state, events

    def _velocity(self, state: SessionState, frame: StateFrame) -> VelocityCommand:
        if state.engaged_order:
            side = state.engaged_order[-1]
            cal = state.joystick_cals[side]
            hr, hp, hy = (
                float(frame.positions[j]) for j in self._leader_hip_idx[side]
            )
            return hip_to_velocity(
                hr, hp, hy, cal, engaged=True, stamp_ns=frame.stamp_ns
            )
        return VelocityCommand(0.0, 0.0, 0.0, frame.stamp_ns)

    def _grippers(self, state: SessionState, frame, follower_grippers) -> np.ndarray:
        out = np.asarray(follower_grippers, dtype=float).copy()
        for i, side in enumerate(self._gripper_sides):
            pos = self._follower_gripper_pos.get(side)
            if pos is None or not state.arm_active(side):
                continue
            if i < len(frame.triggers):
                out[pos] = float(frame.triggers[i])
        return out

    # -- the tick --------------------------------------------------------------

    def step(
        self,
        state: SessionState,
        frame: StateFrame | None,
        follower,
        dt: float,
        stale: bool = False,
    ) -> tuple[SessionState, list[GestureEvent], CommandSet]:
        """Advance one control tick.

        follower provides .joints (follower schema) and .grippers; a stale
        link (stale=True or frame=None) holds everything and emits zero
        velocity without advancing any timer.
        """
        if dt <= 0:
            raise ValueError("dt must be > 0")
        if stale or frame is None:
            stamp = frame.stamp_ns if frame is not None else 0
            return state, [], self._hold_command(state, stamp)

        events: list[GestureEvent] = []
        dt_ns = round(dt * 1e9)
        state = self._update_grips(state, frame.triggers, dt_ns)
        p = self.params

        if state.phase in (SessionPhase.IDLE, SessionPhase.ARMING):
            both = self._n_grippers >= 2 and all(state.closed)
            if both:
                progress = state.arming_progress_ns + dt_ns
                if progress >= self._activation_ns:
                    state = replace(
                        state,
                        phase=SessionPhase.SYNCHRONIZING,
                        arming_progress_ns=0,
                        sync_reference=np.asarray(
                            follower.joints, dtype=float
                        ).copy(),
                        sync_progress=0.0,
                        sync_initial_error=0.0,
                    )
                    state = self._consume_holds(state)
                    events.append(
                        GestureEvent(
                            GestureKind.SESSION_ACTIVATED, Side.NONE, frame.stamp_ns
                        )
                    )
                else:
                    state = replace(
                        state, phase=SessionPhase.ARMING, arming_progress_ns=progress
                    )
            else:
                state = replace(
                    state, phase=SessionPhase.IDLE, arming_progress_ns=0
                )
            if state.phase is not SessionPhase.SYNCHRONIZING:
                cmd = CommandSet(
                    stamp_ns=frame.stamp_ns,
                    targets=None,
                    grippers=None,
                    velocity=VelocityCommand(0.0, 0.0, 0.0, frame.stamp_ns),
                    torques=self._torques(state, frame.positions.astype(float)),
                )
                return state, events, cmd

        if state.phase is SessionPhase.SYNCHRONIZING:
            out = _retarget.retarget(frame, self.mapping)
            assert state.sync_reference is not None
            vel = self._fsch.vel_max * p.sync_vel_fraction
            reference = sync_trajectory(state.sync_reference, out.targets, vel, dt)
            err = float(np.max(np.abs(reference - out.targets))) if len(reference) else 0.0
            initial = state.sync_initial_error
            if initial <= 0.0:
                initial = max(
                    err, float(np.max(np.abs(state.sync_reference - out.targets)))
                ) if len(reference) else 0.0
            progress = 1.0 if initial <= p.sync_epsilon else min(
                1.0, max(0.0, 1.0 - err / initial)
            )
            state = replace(
                state,
                sync_reference=reference,
                sync_initial_error=initial,
                sync_progress=progress,
                last_targets=reference.copy(),
            )
            if err < p.sync_epsilon:
                state = replace(
                    state,
                    phase=SessionPhase.ACTIVE,
                    sync_progress=1.0,
                    sync_reference=None,
                )
                state = self._consume_holds(state)
                events.append(
                    GestureEvent(
                        GestureKind.SYNC_COMPLETE, Side.NONE, frame.stamp_ns
                    )
                )
            cmd = CommandSet(
                stamp_ns=frame.stamp_ns,
                targets=reference.copy(),
                grippers=None,
                velocity=VelocityCommand(0.0, 0.0, 0.0, frame.stamp_ns),
                torques=self._torques(state, frame.positions.astype(float)),
            )
            state.check()
            return state, events, cmd

        # Active: toggles first, then commands reflecting the new mode
        state, toggle_events = self._check_toggles(state, frame)
        events.extend(toggle_events)
        out = _retarget.retarget(frame, self.mapping)
        targets = out.targets
        prev = state.last_targets
        for side in (Side.LEFT, Side.RIGHT):
            if prev is None:
                break
            if not state.arm_active(side):
                idx = self._follower_arm_idx.get(side)
                if idx is not None:
                    targets[idx] = prev[idx]
            if state.leg_joystick(side):
                idx = self._follower_leg_idx.get(side)
                if idx is not None:
                    targets[idx] = prev[idx]
        state = replace(state, last_targets=targets.copy())
        cmd = CommandSet(
            stamp_ns=frame.stamp_ns,
            targets=targets,
            grippers=self._grippers(state, frame, follower.grippers),
            velocity=self._velocity(state, frame),
            torques=self._torques(state, frame.positions.astype(float)),
            base_orientation=out.base_orientation,
        )
        state.check()
        return state, events, cmd
