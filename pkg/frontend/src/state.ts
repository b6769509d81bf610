// Client-side view state. Everything session-related is a verbatim copy of
// the last server message -- the state machine lives in the control stack,
// never here. The only things this module adds are connection status and
// the accumulated event log (the bridge sends each event exactly once per
// connection, so appending is enough).

import {
  SchemaMessage,
  ServerMessage,
  SessionEvent,
  StateMessage,
} from "./protocol";

export type ConnectionStatus = "connecting" | "online" | "offline";

export interface Banner {
  text: string;
  tone: "offline" | "stale" | "idle" | "arming" | "synchronizing" | "active";
}

const PHASE_LABEL = {
  idle: "Idle",
  arming: "Arming",
  synchronizing: "Synchronizing",
  active: "Active",
} as const;

export class ConsoleModel {
  schema: SchemaMessage | null = null;
  state: StateMessage | null = null;
  connection: ConnectionStatus = "connecting";
  eventLog: SessionEvent[] = [];
  lastError: string | null = null;

  applyServer(msg: ServerMessage): void {
    if (msg.type === "schema") {
      this.schema = msg;
    } else if (msg.type === "state") {
      this.state = msg;
      if (msg.events.length) this.eventLog.push(...msg.events);
    } else if (msg.type === "error") {
      this.lastError = msg.error;
      console.warn("bridge rejected input:", msg.error);
    }
  }

  setConnection(status: ConnectionStatus): void {
    this.connection = status;
  }
}

/** The session banner is a pure function of connection + last state. */
export function banner(model: ConsoleModel): Banner {
  if (model.connection === "offline") {
    return { text: "Reconnecting…", tone: "offline" };
  }
  if (model.state === null) {
    return { text: "Connecting…", tone: "offline" };
  }
  if (model.state.stale) {
    return { text: "Link stale", tone: "stale" };
  }
  const phase = model.state.phase;
  return { text: PHASE_LABEL[phase], tone: phase };
}

export function inputsEnabled(model: ConsoleModel): boolean {
  return model.connection === "online" && model.schema !== null;
}

/** Fill fraction of the arming bar; the 3 s threshold comes with the schema. */
export function armingFraction(model: ConsoleModel): number {
  if (model.state === null || model.schema === null) return 0;
  if (model.state.phase === "synchronizing" || model.state.phase === "active") {
    return 1;
  }
  const hold = model.schema.hold_s.activate;
  return Math.min(1, Math.max(0, model.state.arming_progress_s / hold));
}

export function syncFraction(model: ConsoleModel): number {
  if (model.state === null) return 0;
  if (model.state.phase === "active") return 1;
  if (model.state.phase !== "synchronizing") return 0;
  return Math.min(1, Math.max(0, model.state.sync_progress));
}

export function latencyText(state: StateMessage | null): string {
  if (state === null || state.latency_ms === null) return "latency --";
  return `latency ${state.latency_ms.toFixed(1)} ms`;
}

export function describeEvent(event: SessionEvent): string {
  const kind = event.kind.replace(/_/g, " ");
  return event.side === "none" ? kind : `${kind} (${event.side})`;
}

/** Consistency check mirrored from the session invariants: a joystick leg
 * always comes with an inactive arm on the same side. Render-time guard
 * only; the server owns the actual rule. */
export function sidesConsistent(state: StateMessage): boolean {
  if (state.left_leg_joystick && state.left_arm_active) return false;
  if (state.right_leg_joystick && state.right_arm_active) return false;
  return true;
}
