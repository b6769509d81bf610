// The virtual leader device: slider values, gripper hold buttons, keyboard
// nudges and an optional gamepad, streamed to the bridge at a fixed rate.
// Every outgoing frame goes through leaderInput(), which clamps to the
// schema limits -- the console never emits an out-of-range pose.

import {
  JointInfo,
  LeaderInput,
  SchemaMessage,
  clamp,
  eulerToQuat,
  leaderInput,
} from "./protocol";

export const SEND_RATE_HZ = 50; // bridge wants >= 30

export interface RigOptions {
  send: (input: LeaderInput) => void;
  rateHz?: number;
  now?: () => number;
  getGamepads?: () => (Gamepad | null)[];
}

interface Nudge {
  joint: number;
  radPerSec: number;
}

export class InputRig {
  joints: JointInfo[] = [];
  grippers: string[] = [];
  positions: number[] = [];
  rpy: [number, number, number] = [0, 0, 0];
  enabled = false;

  private held: boolean[] = [];
  private heldSince: (number | null)[] = [];
  private padTriggers: number[] = [];
  private nudges = new Map<string, Nudge>();
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly send: (input: LeaderInput) => void;
  private readonly rateHz: number;
  private readonly now: () => number;
  private readonly getGamepads: () => (Gamepad | null)[];
  legAxes: { roll: number; pitch: number; yaw: number } | null = null;

  constructor(options: RigOptions) {
    this.send = options.send;
    this.rateHz = options.rateHz ?? SEND_RATE_HZ;
    this.now = options.now ?? (() => Date.now());
    this.getGamepads =
      options.getGamepads ??
      (() =>
        typeof navigator !== "undefined" && navigator.getGamepads
          ? navigator.getGamepads()
          : []);
  }

  configure(schema: SchemaMessage): void {
    this.joints = schema.joints;
    this.grippers = schema.grippers;
    this.positions = schema.joints.map((j) => j.home);
    this.held = schema.grippers.map(() => false);
    this.heldSince = schema.grippers.map(() => null);
    this.padTriggers = schema.grippers.map(() => 0);
    this.legAxes = findLegAxes(schema.joints);
    this.enabled = true;
  }

  disable(): void {
    this.enabled = false;
    this.held = this.held.map(() => false);
    this.heldSince = this.heldSince.map(() => null);
    this.nudges.clear();
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => this.tick(), 1000 / this.rateHz);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  setJoint(index: number, value: number): void {
    const j = this.joints[index];
    if (!j) return;
    this.positions[index] = Number.isFinite(value)
      ? clamp(value, j.min, j.max)
      : j.home;
  }

  setOrientation(roll: number, pitch: number, yaw: number): void {
    this.rpy = [roll, pitch, yaw];
  }

  resetPose(): void {
    this.positions = this.joints.map((j) => j.home);
    this.rpy = [0, 0, 0];
  }

  pressGripper(index: number): void {
    if (!this.enabled || index >= this.held.length) return;
    if (!this.held[index]) {
      this.held[index] = true;
      this.heldSince[index] = this.now();
    }
  }

  releaseGripper(index: number): void {
    if (index >= this.held.length) return;
    this.held[index] = false;
    this.heldSince[index] = null;
  }

  /** Seconds the virtual gripper button has been held; feeds the visible
   * hold timer on the button itself. */
  heldSeconds(index: number): number {
    const since = this.heldSince[index];
    return since === null ? 0 : (this.now() - since) / 1000;
  }

  isHeld(index: number): boolean {
    return this.held[index] ?? false;
  }

  triggers(): number[] {
    return this.held.map((h, i) =>
      Math.max(h ? 1 : 0, this.padTriggers[i] ?? 0),
    );
  }

  /** Keyboard nudges: while registered, the joint drifts at radPerSec. */
  setNudge(id: string, joint: number, radPerSec: number): void {
    this.nudges.set(id, { joint, radPerSec });
  }

  clearNudge(id: string): void {
    this.nudges.delete(id);
  }

  private pollGamepad(): void {
    const pads = this.getGamepads();
    const pad = pads.find((p) => p && p.connected);
    if (!pad) {
      this.padTriggers = this.padTriggers.map(() => 0);
      return;
    }
    // left stick drives the left leg hips, shoulder triggers the grippers
    if (this.legAxes) {
      const span = 0.45;
      this.applyAxis(this.legAxes.roll, pad.axes[0] ?? 0, span);
      this.applyAxis(this.legAxes.pitch, -(pad.axes[1] ?? 0), span);
      this.applyAxis(this.legAxes.yaw, pad.axes[2] ?? 0, span);
    }
    this.padTriggers = this.padTriggers.map(
      (_, i) => pad.buttons[6 + i]?.value ?? 0,
    );
  }

  private applyAxis(joint: number, axis: number, span: number): void {
    if (joint < 0 || Math.abs(axis) < 0.02) return;
    const j = this.joints[joint];
    this.setJoint(joint, j.home + axis * span);
  }

  tick(): void {
    if (!this.enabled) return;
    this.pollGamepad();
    const dt = 1 / this.rateHz;
    for (const nudge of this.nudges.values()) {
      const j = this.joints[nudge.joint];
      if (!j) continue;
      this.setJoint(nudge.joint, this.positions[nudge.joint] + nudge.radPerSec * dt);
    }
    const quat = eulerToQuat(this.rpy[0], this.rpy[1], this.rpy[2]);
    this.send(leaderInput(this.positions, this.triggers(), quat, this.joints));
  }
}

function findLegAxes(
  joints: JointInfo[],
): { roll: number; pitch: number; yaw: number } | null {
  const leg = joints.find((j) => j.kind === "leg")?.limb;
  if (!leg) return null;
  const idx = (suffix: string) =>
    joints.findIndex((j) => j.limb === leg && j.name.endsWith(suffix));
  const axes = {
    roll: idx("hip_roll"),
    pitch: idx("hip_pitch"),
    yaw: idx("hip_yaw"),
  };
  return axes.roll < 0 || axes.pitch < 0 || axes.yaw < 0 ? null : axes;
}
