"""Shared fixtures: tiny programmatic device pairs plus the shipped configs.

The mini pair is deliberately small (2-joint arms, 3-joint legs) so session
and retarget tests run fast while still exercising grippers, hip triads and
both leg modes.
"""

from pathlib import Path

import pytest

from teleop.config import (
    DeviceConfig,
    ImuMode,
    JointSpec,
    LegMode,
    LimbKind,
    LimbSpec,
    MappingPair,
    MappingSpec,
    MountId,
    Role,
    load_config,
)

REPO = Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO / "configs"
SCENARIO_DIR = REPO / "scenarios"


def _leg(prefix: str, side: str) -> LimbSpec:
    return LimbSpec(
        name=f"leg_{side}",
        kind=LimbKind.LEG,
        mount=MountId.LEG_LEFT if side == "left" else MountId.LEG_RIGHT,
        joints=[
            JointSpec(f"{prefix}_{side}_hip_roll", -1.0, 1.0, 6.0),
            JointSpec(f"{prefix}_{side}_hip_pitch", -1.0, 1.0, 6.0),
            JointSpec(f"{prefix}_{side}_hip_yaw", -1.0, 1.0, 6.0),
        ],
    )


def _arm(prefix: str, side: str, lo: float, hi: float, vel: float) -> LimbSpec:
    mount = MountId.ARM_FLAT_LEFT if side == "left" else MountId.ARM_FLAT_RIGHT
    return LimbSpec(
        name=f"arm_{side}",
        kind=LimbKind.ARM,
        mount=mount,
        joints=[
            JointSpec(f"{prefix}_{side}_shoulder", lo, hi, vel),
            JointSpec(f"{prefix}_{side}_elbow", lo, hi, vel),
        ],
        gripper=True,
    )


def make_mini_leader() -> DeviceConfig:
    cfg = DeviceConfig(
        role=Role.LEADER,
        limbs=[
            _arm("l", "left", -2.0, 2.0, 4.0),
            _arm("l", "right", -2.0, 2.0, 4.0),
            _leg("l", "left"),
            _leg("l", "right"),
        ],
    )
    cfg.validate()
    return cfg


ARM_PAIRS = [
    MappingPair("l_left_shoulder", "f_left_shoulder"),
    MappingPair("l_left_elbow", "f_left_elbow"),
    MappingPair("l_right_shoulder", "f_right_shoulder"),
    MappingPair("l_right_elbow", "f_right_elbow"),
]

HIP_PAIRS = [
    MappingPair(f"l_{side}_hip_{axis}", f"f_{side}_hip_{axis}")
    for side in ("left", "right")
    for axis in ("roll", "pitch", "yaw")
]


def make_mini_follower(
    leg_mode: LegMode = LegMode.JOYSTICK,
    imu_mode: ImuMode = ImuMode.DISABLED,
    extra_pairs: list[MappingPair] | None = None,
) -> DeviceConfig:
    pairs = list(ARM_PAIRS)
    if leg_mode is LegMode.DIRECT_JOINT:
        pairs += HIP_PAIRS
    if extra_pairs:
        pairs += extra_pairs
    cfg = DeviceConfig(
        role=Role.FOLLOWER,
        limbs=[
            _arm("f", "left", -1.5, 1.5, 3.0),
            _arm("f", "right", -1.5, 1.5, 3.0),
            _leg("f", "left"),
            _leg("f", "right"),
        ],
        mapping=MappingSpec(pairs=pairs, leg_mode=leg_mode, imu_mode=imu_mode),
    )
    cfg.validate()
    return cfg


@pytest.fixture
def mini_leader() -> DeviceConfig:
    return make_mini_leader()


@pytest.fixture
def mini_follower() -> DeviceConfig:
    return make_mini_follower()


@pytest.fixture
def mini_follower_direct() -> DeviceConfig:
    return make_mini_follower(leg_mode=LegMode.DIRECT_JOINT)


@pytest.fixture(scope="session")
def g1_leader() -> DeviceConfig:
    return load_config(CONFIG_DIR / "g1_leader.yaml")


@pytest.fixture(scope="session")
def g1_follower() -> DeviceConfig:
    return load_config(CONFIG_DIR / "g1_follower_locomanip.yaml")


@pytest.fixture(scope="session")
def g1_follower_fullbody() -> DeviceConfig:
    return load_config(CONFIG_DIR / "g1_follower_fullbody.yaml")


def free_port() -> int:
    """Grab an ephemeral UDP port that is currently free."""
    import socket

    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port
