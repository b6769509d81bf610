// Message shapes for the console bridge (single-line JSON over WebSocket).
// The server is authoritative for everything session-related; this module
// only parses what arrives and clamps what we send.

export interface JointInfo {
  name: string;
  min: number;
  max: number;
  home: number;
  limb: string;
  kind: "arm" | "leg" | "neck";
}

export interface SchemaMessage {
  type: "schema";
  joints: JointInfo[];
  grippers: string[];
  hold_s: { activate: number; toggle: number };
  state_rate_hz: number;
}

export interface SessionEvent {
  stamp_ns: number;
  kind: string;
  side: string;
}

export type Phase = "idle" | "arming" | "synchronizing" | "active";

export interface StateMessage {
  type: "state";
  stamp_ns: number;
  phase: Phase;
  arming_progress_s: number;
  sync_progress: number;
  left_arm_active: boolean;
  right_arm_active: boolean;
  left_leg_joystick: boolean;
  right_leg_joystick: boolean;
  follower_joints: number[];
  follower_grippers: number[];
  base_pose: number[]; // [x, y, heading]
  base_orientation: number[]; // quat wxyz
  torques: number[];
  velocity: number[]; // [vx, vy, wz]
  stale: boolean;
  latency_ms: number | null;
  events: SessionEvent[];
}

export interface ErrorMessage {
  type: "error";
  error: string;
}

export interface PongMessage {
  type: "pong";
  t: number;
}

export type ServerMessage =
  | SchemaMessage
  | StateMessage
  | ErrorMessage
  | PongMessage;

export interface LeaderInput {
  type: "leader_input";
  positions: number[];
  triggers: number[];
  quat: [number, number, number, number];
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const type = (doc as { type?: unknown }).type;
  if (
    type === "schema" ||
    type === "state" ||
    type === "error" ||
    type === "pong"
  ) {
    return doc as ServerMessage;
  }
  return null;
}

export function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

/** Clamp a pose to the schema limits; non-finite entries fall back to home. */
export function clampToSchema(positions: number[], joints: JointInfo[]): number[] {
  return joints.map((j, i) => {
    const v = positions[i];
    if (!Number.isFinite(v)) return j.home;
    return clamp(v, j.min, j.max);
  });
}

/**
 * Build a leader_input message the server will accept: positions clamped to
 * the joint limits, triggers clipped to [0, 1], quaternion normalized.
 * The console must never emit a frame outside the leader's limits.
 */
export function leaderInput(
  positions: number[],
  triggers: number[],
  quat: [number, number, number, number],
  joints: JointInfo[],
): LeaderInput {
  const safeTriggers = triggers.map((t) =>
    Number.isFinite(t) ? clamp(t, 0, 1) : 0,
  );
  let [w, x, y, z] = quat;
  if (![w, x, y, z].every(Number.isFinite)) {
    [w, x, y, z] = [1, 0, 0, 0];
  }
  const norm = Math.hypot(w, x, y, z);
  const q: [number, number, number, number] =
    norm < 1e-9 ? [1, 0, 0, 0] : [w / norm, x / norm, y / norm, z / norm];
  return {
    type: "leader_input",
    positions: clampToSchema(positions, joints),
    triggers: safeTriggers,
    quat: q,
  };
}

/** Quaternion (w, x, y, z) for intrinsic Z-Y-X euler angles, matching the
 * server's convention; used by the IMU orientation widget. */
export function eulerToQuat(
  roll: number,
  pitch: number,
  yaw: number,
): [number, number, number, number] {
  const cr = Math.cos(roll / 2);
  const sr = Math.sin(roll / 2);
  const cp = Math.cos(pitch / 2);
  const sp = Math.sin(pitch / 2);
  const cy = Math.cos(yaw / 2);
  const sy = Math.sin(yaw / 2);
  return [
    cr * cp * cy + sr * sp * sy,
    sr * cp * cy - cr * sp * sy,
    cr * sp * cy + sr * cp * sy,
    cr * cp * sy - sr * sp * cy,
  ];
}
