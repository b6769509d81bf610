import { SchemaMessage, StateMessage } from "../src/protocol";

export function mkSchema(): SchemaMessage {
  return {
    type: "schema",
    joints: [
      { name: "l_left_shoulder", min: -2, max: 2, home: 0, limb: "arm_left", kind: "arm" },
      { name: "l_left_elbow", min: -2, max: 2, home: 0.1, limb: "arm_left", kind: "arm" },
      { name: "l_right_shoulder", min: -2, max: 2, home: 0, limb: "arm_right", kind: "arm" },
      { name: "l_left_hip_roll", min: -1, max: 1, home: 0, limb: "leg_left", kind: "leg" },
      { name: "l_left_hip_pitch", min: -1, max: 1, home: 0, limb: "leg_left", kind: "leg" },
      { name: "l_left_hip_yaw", min: -1, max: 1, home: 0, limb: "leg_left", kind: "leg" },
      { name: "l_right_hip_roll", min: -1, max: 1, home: 0, limb: "leg_right", kind: "leg" },
      { name: "l_right_hip_pitch", min: -1, max: 1, home: 0, limb: "leg_right", kind: "leg" },
      { name: "l_right_hip_yaw", min: -1, max: 1, home: 0, limb: "leg_right", kind: "leg" },
    ],
    grippers: ["arm_left", "arm_right"],
    hold_s: { activate: 3.0, toggle: 1.0 },
    state_rate_hz: 30,
  };
}

export function mkState(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    stamp_ns: 0,
    phase: "idle",
    arming_progress_s: 0,
    sync_progress: 0,
    left_arm_active: true,
    right_arm_active: true,
    left_leg_joystick: false,
    right_leg_joystick: false,
    follower_joints: new Array(9).fill(0),
    follower_grippers: [0, 0],
    base_pose: [0, 0, 0],
    base_orientation: [1, 0, 0, 0],
    torques: new Array(9).fill(0),
    velocity: [0, 0, 0],
    stale: false,
    latency_ms: 1.5,
    events: [],
    ...overrides,
  };
}
