"""Declarative device and mapping configuration.

Devices (the operator-held leader and the follower robot) are described by
YAML files with top-level keys ``role``, ``limbs``, ``mapping``, ``gains`` and
``locomotion``. Limbs declare their mount, ordered joints with limits, and
whether a gripper trigger is present; the follower side adds the joint-level
mapping. Parsing is strict: unknown keys, wrong types and violated invariants
all fail with the offending field path.

The flattened joint schema (limbs in declared order, joints in declared
order) defines the joint vector layout used on the wire and in every
controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
import yaml

from .feedback import FeedbackConfig, FeedbackPhase, GainSchedule
from .locomotion import JoystickCalibration


class ConfigError(Exception):
    """Base class for configuration failures."""


class ConfigSyntaxError(ConfigError):
    """Malformed document; carries the line/column when available."""


class SchemaError(ConfigError):
    """Missing or unknown field, or a field of the wrong type."""


class InvariantError(ConfigError):
    """Structurally valid document with values violating an invariant."""


class MappingError(ConfigError):
    """Leader/follower mapping references that cannot be resolved."""


class Role(Enum):
    LEADER = "leader"
    FOLLOWER = "follower"


class LimbKind(Enum):
    ARM = "arm"
    LEG = "leg"
    NECK = "neck"


class MountId(Enum):
    LEG_LEFT = "leg_left"
    LEG_RIGHT = "leg_right"
    ARM_FLAT_LEFT = "arm_flat_left"
    ARM_FLAT_RIGHT = "arm_flat_right"
    ARM_INCLINED_LEFT = "arm_inclined_left"
    ARM_INCLINED_RIGHT = "arm_inclined_right"
    TOP = "top"


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"
    NONE = "none"


class ImuMode(Enum):
    TORSO_JOINTS = "torso_joints"
    FLOATING_BASE = "floating_base"
    DISABLED = "disabled"


class LegMode(Enum):
    DIRECT_JOINT = "direct_joint"
    JOYSTICK = "joystick"


MOUNT_SIDE = {
    MountId.LEG_LEFT: Side.LEFT,
    MountId.LEG_RIGHT: Side.RIGHT,
    MountId.ARM_FLAT_LEFT: Side.LEFT,
    MountId.ARM_FLAT_RIGHT: Side.RIGHT,
    MountId.ARM_INCLINED_LEFT: Side.LEFT,
    MountId.ARM_INCLINED_RIGHT: Side.RIGHT,
    MountId.TOP: Side.NONE,
}

# inclination class used for mount-compatibility notes
_MOUNT_CLASS = {
    MountId.LEG_LEFT: "leg",
    MountId.LEG_RIGHT: "leg",
    MountId.ARM_FLAT_LEFT: "flat",
    MountId.ARM_FLAT_RIGHT: "flat",
    MountId.ARM_INCLINED_LEFT: "inclined",
    MountId.ARM_INCLINED_RIGHT: "inclined",
    MountId.TOP: "top",
}

_HIP_AXES = ("roll", "pitch", "yaw")


@dataclass(frozen=True)
class JointSpec:
    """One joint: limits in radians, velocity limit in rad/s, home pose."""

    name: str
    position_min: float
    position_max: float
    velocity_max: float
    home_position: float = 0.0

    def validate(self) -> None:
        if not self.position_min < self.position_max:
            raise ValueError(
                f"joint '{self.name}': min {self.position_min} must be < max {self.position_max}"
            )
        if not self.position_min <= self.home_position <= self.position_max:
            raise ValueError(
                f"joint '{self.name}': home {self.home_position} outside "
                f"[{self.position_min}, {self.position_max}]"
            )
        if not self.velocity_max > 0:
            raise ValueError(f"joint '{self.name}': vel_max must be > 0")


@dataclass(frozen=True)
class LimbSpec:
    """A leader or follower limb: mount, ordered joints, optional gripper."""

    name: str
    kind: LimbKind
    mount: MountId
    joints: tuple[JointSpec, ...]
    gripper: bool = False

    def __post_init__(self):
        # normalize so list-built and parsed configs compare equal
        object.__setattr__(self, "joints", tuple(self.joints))

    def side(self) -> Side:
        return MOUNT_SIDE[self.mount]

    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    def hip_joint_names(self) -> tuple[str, str, str]:
        """The (roll, pitch, yaw) hip joints a joystick leg is read from."""
        found = []
        for axis in _HIP_AXES:
            matches = [j.name for j in self.joints if "hip" in j.name and axis in j.name]
            if len(matches) != 1:
                raise ValueError(
                    f"leg '{self.name}': expected exactly one hip {axis} joint, "
                    f"found {matches or 'none'}"
                )
            found.append(matches[0])
        return tuple(found)  # type: ignore[return-value]

    def validate(self) -> None:
        if not self.joints:
            raise ValueError(f"limb '{self.name}' declares no joints")
        names = self.joint_names()
        if len(set(names)) != len(names):
            raise ValueError(f"limb '{self.name}' has duplicate joint names")
        if self.kind is LimbKind.LEG:
            if len(self.joints) < 3:
                raise ValueError(
                    f"leg '{self.name}' needs at least 3 joints (hip roll/pitch/yaw)"
                )
            self.hip_joint_names()
        for j in self.joints:
            j.validate()


@dataclass(frozen=True)
class MappingPair:
    leader: str
    follower: str
    sign: int = 1
    offset: float = 0.0


@dataclass(frozen=True)
class MappingSpec:
    """Follower-side joint mapping plus the IMU and leg control modes.

    ``torso_joints`` names the follower (yaw, roll, pitch) joints that take
    IMU euler commands in torso_joints mode and are pinned to home in
    floating_base mode.
    """

    pairs: tuple[MappingPair, ...]
    scale_alpha: float = 1.0
    imu_mode: ImuMode = ImuMode.DISABLED
    leg_mode: LegMode = LegMode.DIRECT_JOINT
    torso_joints: tuple[str, str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.torso_joints is not None:
            object.__setattr__(self, "torso_joints", tuple(self.torso_joints))

    def validate(self) -> None:
        followers = [p.follower for p in self.pairs]
        dupes = sorted({n for n in followers if followers.count(n) > 1})
        if dupes:
            raise ValueError(f"follower joints mapped more than once: {dupes}")
        if not 0 < self.scale_alpha <= 1:
            raise ValueError(f"scale_alpha {self.scale_alpha} outside (0, 1]")
        for p in self.pairs:
            if p.sign not in (1, -1):
                raise ValueError(f"pair {p.leader}->{p.follower}: sign must be +1 or -1")
            if not math.isfinite(p.offset):
                raise ValueError(f"pair {p.leader}->{p.follower}: offset must be finite")
        if self.imu_mode is ImuMode.TORSO_JOINTS and self.torso_joints is None:
            raise ValueError("imu_mode torso_joints requires torso_joints to be named")
        if self.torso_joints is not None and len(set(self.torso_joints)) != 3:
            raise ValueError("torso_joints must name three distinct joints")


@dataclass(frozen=True, eq=False)
class JointSchema:
    """Flattened joint ordering with per-joint limit arrays."""

    names: tuple[str, ...]
    low: np.ndarray
    high: np.ndarray
    vel_max: np.ndarray
    home: np.ndarray
    index: dict[str, int]

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class DeviceConfig:
    """Everything needed to instantiate one side of a teleoperation pair."""

    role: Role
    limbs: tuple[LimbSpec, ...]
    mapping: MappingSpec | None = None
    gains: FeedbackConfig = field(default_factory=FeedbackConfig)
    locomotion: JoystickCalibration = field(default_factory=JoystickCalibration)

    def __post_init__(self):
        object.__setattr__(self, "limbs", tuple(self.limbs))

    def validate(self) -> None:
        names = [l.name for l in self.limbs]
        if len(set(names)) != len(names):
            raise ValueError("limb names must be unique")
        mounts: dict[MountId, str] = {}
        for limb in self.limbs:
            if limb.mount in mounts:
                raise ValueError(
                    f"limbs '{mounts[limb.mount]}' and '{limb.name}' share mount "
                    f"'{limb.mount.value}'"
                )
            mounts[limb.mount] = limb.name
            limb.validate()
        joint_owner: dict[str, str] = {}
        for limb in self.limbs:
            for j in limb.joints:
                if j.name in joint_owner:
                    raise ValueError(
                        f"joint '{j.name}' appears in both '{joint_owner[j.name]}' "
                        f"and '{limb.name}'; joint names must be device-unique"
                    )
                joint_owner[j.name] = limb.name
        if self.mapping is not None:
            if self.role is not Role.FOLLOWER:
                raise ValueError("mapping is only valid on follower configs")
            self.mapping.validate()
        self.gains.validate()
        self.locomotion.validate()

    def schema(self) -> JointSchema:
        joints = [j for limb in self.limbs for j in limb.joints]
        names = tuple(j.name for j in joints)
        return JointSchema(
            names=names,
            low=np.array([j.position_min for j in joints]),
            high=np.array([j.position_max for j in joints]),
            vel_max=np.array([j.velocity_max for j in joints]),
            home=np.array([j.home_position for j in joints]),
            index={n: i for i, n in enumerate(names)},
        )

    def find_limb(self, name: str) -> LimbSpec | None:
        for limb in self.limbs:
            if limb.name == name:
                return limb
        return None

    def limb_of_joint(self, joint: str) -> LimbSpec | None:
        for limb in self.limbs:
            if joint in limb.joint_names():
                return limb
        return None

    def joint_indices(self, limb_name: str) -> np.ndarray:
        """Flat schema indices of one limb's joints, in declared order."""
        offset = 0
        for limb in self.limbs:
            if limb.name == limb_name:
                return np.arange(offset, offset + len(limb.joints))
            offset += len(limb.joints)
        raise KeyError(limb_name)

    def gripper_names(self) -> tuple[str, ...]:
        """Gripper-bearing limb names in trigger-vector order."""
        return tuple(l.name for l in self.limbs if l.gripper)

    def limb_on(self, kind: LimbKind, side: Side) -> LimbSpec | None:
        for limb in self.limbs:
            if limb.kind is kind and limb.side() is side:
                return limb
        return None


# --- strict document walking -------------------------------------------------


def _expect_map(node: Any, path: str) -> dict:
    if not isinstance(node, dict):
        raise SchemaError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _expect_list(node: Any, path: str) -> list:
    if not isinstance(node, list):
        raise SchemaError(f"{path}: expected a list, got {type(node).__name__}")
    return node


def _check_keys(node: dict, allowed: set[str], path: str) -> None:
    unknown = set(node) - allowed
    if unknown:
        raise SchemaError(f"{path}: unknown field(s) {sorted(unknown)}")


_REQUIRED = object()


def _take(node: dict, key: str, path: str, default: Any = _REQUIRED) -> Any:
    if key not in node:
        if default is _REQUIRED:
            raise SchemaError(f"{path}.{key}: missing required field")
        return default
    return node[key]


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(value).__name__}")
    return float(value)


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(f"{path}: expected a boolean, got {type(value).__name__}")
    return value


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{path}: expected a non-empty string")
    return value


def _as_enum(enum_cls, value: Any, path: str):
    value = _as_str(value, path)
    try:
        return enum_cls(value)
    except ValueError:
        options = ", ".join(e.value for e in enum_cls)
        raise SchemaError(f"{path}: '{value}' is not one of: {options}") from None


def _parse_joint(node: Any, path: str) -> JointSpec:
    node = _expect_map(node, path)
    _check_keys(node, {"name", "min", "max", "vel_max", "home"}, path)
    return JointSpec(
        name=_as_str(_take(node, "name", path), f"{path}.name"),
        position_min=_as_float(_take(node, "min", path), f"{path}.min"),
        position_max=_as_float(_take(node, "max", path), f"{path}.max"),
        velocity_max=_as_float(_take(node, "vel_max", path), f"{path}.vel_max"),
        home_position=_as_float(_take(node, "home", path, 0.0), f"{path}.home"),
    )


def _parse_limb(node: Any, path: str) -> LimbSpec:
    node = _expect_map(node, path)
    _check_keys(node, {"name", "kind", "mount", "joints", "gripper"}, path)
    joints = _expect_list(_take(node, "joints", path), f"{path}.joints")
    return LimbSpec(
        name=_as_str(_take(node, "name", path), f"{path}.name"),
        kind=_as_enum(LimbKind, _take(node, "kind", path), f"{path}.kind"),
        mount=_as_enum(MountId, _take(node, "mount", path), f"{path}.mount"),
        joints=tuple(
            _parse_joint(j, f"{path}.joints[{i}]") for i, j in enumerate(joints)
        ),
        gripper=_as_bool(_take(node, "gripper", path, False), f"{path}.gripper"),
    )


def _parse_mapping(node: Any, path: str) -> MappingSpec:
    node = _expect_map(node, path)
    _check_keys(
        node, {"pairs", "scale_alpha", "imu_mode", "leg_mode", "torso_joints"}, path
    )
    pairs = []
    for i, raw in enumerate(_expect_list(_take(node, "pairs", path, []), f"{path}.pairs")):
        ppath = f"{path}.pairs[{i}]"
        raw = _expect_map(raw, ppath)
        _check_keys(raw, {"leader", "follower", "sign", "offset"}, ppath)
        sign = _take(raw, "sign", ppath, 1)
        if isinstance(sign, bool) or not isinstance(sign, int):
            raise SchemaError(f"{ppath}.sign: expected an integer")
        pairs.append(
            MappingPair(
                leader=_as_str(_take(raw, "leader", ppath), f"{ppath}.leader"),
                follower=_as_str(_take(raw, "follower", ppath), f"{ppath}.follower"),
                sign=sign,
                offset=_as_float(_take(raw, "offset", ppath, 0.0), f"{ppath}.offset"),
            )
        )
    torso = _take(node, "torso_joints", path, None)
    if torso is not None:
        torso = _expect_list(torso, f"{path}.torso_joints")
        if len(torso) != 3:
            raise SchemaError(
                f"{path}.torso_joints: expected exactly 3 joint names (yaw, roll, pitch)"
            )
        torso = tuple(
            _as_str(t, f"{path}.torso_joints[{i}]") for i, t in enumerate(torso)
        )
    return MappingSpec(
        pairs=tuple(pairs),
        scale_alpha=_as_float(
            _take(node, "scale_alpha", path, 1.0), f"{path}.scale_alpha"
        ),
        imu_mode=_as_enum(
            ImuMode, _take(node, "imu_mode", path, "disabled"), f"{path}.imu_mode"
        ),
        leg_mode=_as_enum(
            LegMode, _take(node, "leg_mode", path, "direct_joint"), f"{path}.leg_mode"
        ),
        torso_joints=torso,
    )


def _parse_gains(node: Any, path: str) -> FeedbackConfig:
    node = _expect_map(node, path)
    _check_keys(node, {"stiffness", "tau_max", "multipliers"}, path)
    stiffness: float | dict[str, float]
    raw_k = _take(node, "stiffness", path, 2.0)
    if isinstance(raw_k, dict):
        stiffness = {
            _as_str(k, f"{path}.stiffness"): _as_float(v, f"{path}.stiffness.{k}")
            for k, v in raw_k.items()
        }
    else:
        stiffness = _as_float(raw_k, f"{path}.stiffness")
    multipliers = dict(GainSchedule().multipliers)
    raw_m = _take(node, "multipliers", path, None)
    if raw_m is not None:
        raw_m = _expect_map(raw_m, f"{path}.multipliers")
        for key, value in raw_m.items():
            phase = _as_enum(FeedbackPhase, key, f"{path}.multipliers")
            multipliers[phase] = _as_float(value, f"{path}.multipliers.{key}")
    return FeedbackConfig(
        stiffness=stiffness,
        tau_max=_as_float(_take(node, "tau_max", path, 1.5), f"{path}.tau_max"),
        schedule=GainSchedule(multipliers),
    )


def _parse_locomotion(node: Any, path: str) -> JoystickCalibration:
    node = _expect_map(node, path)
    fields = {
        "deadband",
        "roll_gain",
        "pitch_gain",
        "yaw_gain",
        "vx_max",
        "vy_max",
        "wz_max",
    }
    _check_keys(node, fields, path)
    defaults = JoystickCalibration()
    kwargs = {
        name: _as_float(_take(node, name, path, getattr(defaults, name)), f"{path}.{name}")
        for name in fields
    }
    return JoystickCalibration(**kwargs)


def parse_config(text: str, name: str = "<config>") -> DeviceConfig:
    """Parse a device config document; defaults filled, all invariants checked."""
    try:
        root = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigSyntaxError(f"{name}: {e.problem or 'malformed document'}{where}") from e
    except yaml.YAMLError as e:
        raise ConfigSyntaxError(f"{name}: malformed document: {e}") from e
    root = _expect_map(root, name)
    _check_keys(root, {"role", "limbs", "mapping", "gains", "locomotion"}, name)
    limbs = _expect_list(_take(root, "limbs", name), f"{name}.limbs")
    cfg = DeviceConfig(
        role=_as_enum(Role, _take(root, "role", name), f"{name}.role"),
        limbs=tuple(
            _parse_limb(l, f"{name}.limbs[{i}]") for i, l in enumerate(limbs)
        ),
        mapping=(
            _parse_mapping(root["mapping"], f"{name}.mapping")
            if root.get("mapping") is not None
            else None
        ),
        gains=(
            _parse_gains(root["gains"], f"{name}.gains")
            if root.get("gains") is not None
            else FeedbackConfig()
        ),
        locomotion=(
            _parse_locomotion(root["locomotion"], f"{name}.locomotion")
            if root.get("locomotion") is not None
            else JoystickCalibration()
        ),
    )
    try:
        cfg.validate()
    except ValueError as e:
        raise InvariantError(f"{name}: {e}") from e
    return cfg


def load_config(path) -> DeviceConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read(), name=str(path))


def serialize_config(cfg: DeviceConfig) -> str:
    """Inverse of parse_config: parse_config(serialize_config(c)) == c."""
    doc: dict[str, Any] = {
        "role": cfg.role.value,
        "limbs": [
            {
                "name": limb.name,
                "kind": limb.kind.value,
                "mount": limb.mount.value,
                "gripper": limb.gripper,
                "joints": [
                    {
                        "name": j.name,
                        "min": j.position_min,
                        "max": j.position_max,
                        "vel_max": j.velocity_max,
                        "home": j.home_position,
                    }
                    for j in limb.joints
                ],
            }
            for limb in cfg.limbs
        ],
        "gains": {
            "stiffness": cfg.gains.stiffness,
            "tau_max": cfg.gains.tau_max,
            "multipliers": {
                phase.value: m for phase, m in cfg.gains.schedule.multipliers.items()
            },
        },
        "locomotion": {
            "deadband": cfg.locomotion.deadband,
            "roll_gain": cfg.locomotion.roll_gain,
            "pitch_gain": cfg.locomotion.pitch_gain,
            "yaw_gain": cfg.locomotion.yaw_gain,
            "vx_max": cfg.locomotion.vx_max,
            "vy_max": cfg.locomotion.vy_max,
            "wz_max": cfg.locomotion.wz_max,
        },
    }
    if cfg.mapping is not None:
        m = cfg.mapping
        doc["mapping"] = {
            "scale_alpha": m.scale_alpha,
            "imu_mode": m.imu_mode.value,
            "leg_mode": m.leg_mode.value,
            "pairs": [
                {
                    "leader": p.leader,
                    "follower": p.follower,
                    "sign": p.sign,
                    "offset": p.offset,
                }
                for p in m.pairs
            ],
        }
        if m.torso_joints is not None:
            doc["mapping"]["torso_joints"] = list(m.torso_joints)
    return yaml.safe_dump(doc, sort_keys=False)


# --- mapping validation --------------------------------------------------------


@dataclass(frozen=True)
class MappedJoint:
    """One resolved pair with the follower joint's limits."""

    leader: str
    follower: str
    sign: int
    offset: float
    low: float
    high: float


@dataclass
class MappingReport:
    """Outcome of cross-validating a leader/follower config pair."""

    mapped: list[MappedJoint]
    unmapped: list[str]
    warnings: list[str]

    def per_limb_counts(self, follower: DeviceConfig) -> dict[str, int]:
        counts = {limb.name: 0 for limb in follower.limbs}
        for pair in self.mapped:
            limb = follower.limb_of_joint(pair.follower)
            if limb is not None:
                counts[limb.name] += 1
        return counts

    def summary(self, follower: DeviceConfig | None = None) -> str:
        lines = [f"{len(self.mapped)} mapped, {len(self.unmapped)} unmapped"]
        if follower is not None:
            for limb, count in self.per_limb_counts(follower).items():
                lines.append(f"  {limb}: {count} mapped")
        if self.unmapped:
            lines.append(f"  unmapped (hold home): {', '.join(self.unmapped)}")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def validate_mapping(leader: DeviceConfig, follower: DeviceConfig) -> MappingReport:
    """Resolve every pair, list unmapped follower joints, note mount mismatches.

    Dangling references on either side and double-driven joints raise
    MappingError; flat-vs-inclined (or top) arm mount combinations are
    approximation warnings only.
    """
    if follower.mapping is None:
        raise MappingError("follower config declares no mapping")
    mapping = follower.mapping
    lsch, fsch = leader.schema(), follower.schema()
    leaders_seen: dict[str, str] = {}
    mapped: list[MappedJoint] = []
    warnings: list[str] = []
    warned_limbs: set[tuple[str, str]] = set()
    for p in mapping.pairs:
        if p.leader not in lsch.index:
            raise MappingError(f"leader joint '{p.leader}' does not exist")
        if p.follower not in fsch.index:
            raise MappingError(f"follower joint '{p.follower}' does not exist")
        if p.leader in leaders_seen:
            raise MappingError(
                f"leader joint '{p.leader}' maps to both "
                f"'{leaders_seen[p.leader]}' and '{p.follower}'"
            )
        leaders_seen[p.leader] = p.follower
        fi = fsch.index[p.follower]
        mapped.append(
            MappedJoint(
                leader=p.leader,
                follower=p.follower,
                sign=p.sign,
                offset=p.offset,
                low=float(fsch.low[fi]),
                high=float(fsch.high[fi]),
            )
        )
        llimb = leader.limb_of_joint(p.leader)
        flimb = follower.limb_of_joint(p.follower)
        assert llimb is not None and flimb is not None
        if llimb.kind is LimbKind.ARM and flimb.kind is LimbKind.ARM:
            lclass, fclass = _MOUNT_CLASS[llimb.mount], _MOUNT_CLASS[flimb.mount]
            key = (llimb.name, flimb.name)
            if lclass != fclass and key not in warned_limbs:
                warned_limbs.add(key)
                warnings.append(
                    f"arm '{llimb.name}' ({lclass} mount) drives '{flimb.name}' "
                    f"({fclass} mount): shoulder orientation is approximated"
                )
    if mapping.torso_joints is not None:
        driven = {p.follower for p in mapping.pairs}
        for name in mapping.torso_joints:
            if name not in fsch.index:
                raise MappingError(f"torso joint '{name}' does not exist on follower")
            if name in driven:
                raise MappingError(
                    f"torso joint '{name}' cannot also appear in mapping pairs"
                )
    imu_driven: set[str] = set()
    if mapping.imu_mode is ImuMode.TORSO_JOINTS and mapping.torso_joints is not None:
        imu_driven = set(mapping.torso_joints)
    mapped_followers = {p.follower for p in mapping.pairs}
    unmapped = [
        n for n in fsch.names if n not in mapped_followers and n not in imu_driven
    ]
    return MappingReport(mapped=mapped, unmapped=unmapped, warnings=warnings)
