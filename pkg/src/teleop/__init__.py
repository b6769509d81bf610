"""Whole-body leader-follower teleoperation stack.

Config-driven joint retargeting, a timed session state machine, adaptive
spring force feedback, a low-latency UDP wire protocol, and a kinematic
follower simulator, with a WebSocket bridge for the browser console.
"""

from .config import (
    ConfigError,
    ConfigSyntaxError,
    DeviceConfig,
    ImuMode,
    InvariantError,
    JointSchema,
    JointSpec,
    LegMode,
    LimbKind,
    LimbSpec,
    MappingError,
    MappingPair,
    MappingSpec,
    MountId,
    Role,
    SchemaError,
    Side,
    load_config,
    parse_config,
    serialize_config,
    validate_mapping,
)
from .feedback import (
    FeedbackConfig,
    FeedbackPhase,
    GainSchedule,
    SpringParams,
    bias_torque,
    phase_of,
)
from .follower_sim import (
    FollowerState,
    TrackingParams,
    initial_state,
    run_scenario,
    step_follower,
)
from .locomotion import JoystickCalibration, VelocityCommand, hip_to_velocity
from .retarget import (
    EulerAngles,
    ResolvedMapping,
    euler_to_quat,
    map_joints,
    quat_to_euler,
    resolve_mapping,
    retarget,
)
from .session import (
    CommandSet,
    GestureEvent,
    GestureKind,
    Session,
    SessionParams,
    SessionPhase,
    SessionState,
    sync_trajectory,
)
from .transport import (
    LatencyReport,
    LatestCell,
    StateFrame,
    Subscriber,
    decode_frame,
    encode_frame,
    latency_probe,
    make_frame,
    publish_loop,
)

__version__ = "0.1.0"
