// DOM rendering. Panels are built once from the schema message; after that
// every render is a pure projection of the ConsoleModel (banner, bars,
// panel states, arrows, base view). No session decisions are made here.

import { ARROW_CAP_PX, torqueArrow } from "./feedback";
import { InputRig } from "./input";
import { JointInfo, SchemaMessage, StateMessage } from "./protocol";
import {
  ConsoleModel,
  armingFraction,
  banner,
  describeEvent,
  inputsEnabled,
  latencyText,
  sidesConsistent,
  syncFraction,
} from "./state";

const SLIDER_STEP = 0.005;
const TRAIL_MAX_POINTS = 600;
const EVENT_FEED_LINES = 8;

interface JointRow {
  info: JointInfo;
  index: number;
  slider: HTMLInputElement;
  value: HTMLElement;
  arrow: HTMLElement;
  arrowBar: HTMLElement;
  clampMark: HTMLElement;
}

interface LimbPanel {
  root: HTMLElement;
  kind: string;
  side: "left" | "right" | "none";
  rows: JointRow[];
  joystickView: HTMLElement | null;
  sliderBlock: HTMLElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function sideOf(name: string): "left" | "right" | "none" {
  if (name.includes("left")) return "left";
  if (name.includes("right")) return "right";
  return "none";
}

export class ConsoleUI {
  private bannerEl: HTMLElement;
  private armingBar: HTMLElement;
  private syncBar: HTMLElement;
  private latencyEl: HTMLElement;
  private staleDot: HTMLElement;
  private limbsEl: HTMLElement;
  private grippersEl: HTMLElement;
  private imuEl: HTMLElement;
  private baseSvg: SVGSVGElement;
  private baseMarker: SVGGElement;
  private trail: SVGPolylineElement;
  private velocityEl: HTMLElement;
  private followerPoseEl: HTMLElement;
  private eventsEl: HTMLElement;
  private inconsistentEl: HTMLElement;

  private panels: LimbPanel[] = [];
  private gripperButtons: HTMLButtonElement[] = [];
  private gripperTimers: HTMLElement[] = [];
  private gripperApertures: HTMLElement[] = [];
  private trailPoints: string[] = [];
  private eventsRendered = 0;

  constructor(
    private root: HTMLElement,
    private model: ConsoleModel,
    private rig: InputRig,
  ) {
    root.innerHTML = "";
    const header = el("header", "top");
    this.bannerEl = el("div", "banner");
    this.bannerEl.dataset.banner = "";
    header.appendChild(this.bannerEl);

    const meters = el("div", "meters");
    const armingWrap = el("div", "meter");
    armingWrap.appendChild(el("span", "meter-label", "arming"));
    const armingTrack = el("div", "meter-track");
    this.armingBar = el("div", "meter-fill");
    this.armingBar.dataset.armingBar = "";
    armingTrack.appendChild(this.armingBar);
    armingWrap.appendChild(armingTrack);
    const syncWrap = el("div", "meter");
    syncWrap.appendChild(el("span", "meter-label", "sync"));
    const syncTrack = el("div", "meter-track");
    this.syncBar = el("div", "meter-fill");
    this.syncBar.dataset.syncBar = "";
    syncTrack.appendChild(this.syncBar);
    syncWrap.appendChild(syncTrack);
    meters.appendChild(armingWrap);
    meters.appendChild(syncWrap);
    header.appendChild(meters);

    const status = el("div", "status");
    this.latencyEl = el("span", "latency");
    this.latencyEl.dataset.latency = "";
    this.staleDot = el("span", "stale-dot");
    this.staleDot.title = "link staleness";
    status.appendChild(this.latencyEl);
    status.appendChild(this.staleDot);
    header.appendChild(status);
    root.appendChild(header);

    this.inconsistentEl = el("div", "inconsistent hidden");
    this.inconsistentEl.textContent =
      "state message failed the joystick/arm consistency check";
    root.appendChild(this.inconsistentEl);

    const main = el("main", "layout");
    this.limbsEl = el("section", "limbs");
    main.appendChild(this.limbsEl);

    const aside = el("aside", "side");
    this.grippersEl = el("div", "grippers");
    aside.appendChild(this.grippersEl);
    this.imuEl = el("div", "imu");
    aside.appendChild(this.imuEl);

    const baseWrap = el("div", "base-view");
    baseWrap.appendChild(el("h3", undefined, "base (top-down)"));
    this.baseSvg = document.createElementNS(
      "http://www.w3.org/2000/svg",
      "svg",
    );
    this.baseSvg.setAttribute("viewBox", "-2 -2 4 4");
    this.baseSvg.classList.add("base-svg");
    const grid = document.createElementNS("http://www.w3.org/2000/svg", "g");
    grid.setAttribute("class", "base-grid");
    this.trail = document.createElementNS(
      "http://www.w3.org/2000/svg",
      "polyline",
    );
    this.trail.setAttribute("class", "base-trail");
    this.trail.setAttribute("fill", "none");
    this.baseMarker = document.createElementNS(
      "http://www.w3.org/2000/svg",
      "g",
    );
    this.baseMarker.setAttribute("class", "base-marker");
    const body = document.createElementNS(
      "http://www.w3.org/2000/svg",
      "circle",
    );
    body.setAttribute("r", "0.12");
    const heading = document.createElementNS(
      "http://www.w3.org/2000/svg",
      "line",
    );
    heading.setAttribute("x1", "0");
    heading.setAttribute("y1", "0");
    heading.setAttribute("x2", "0.2");
    heading.setAttribute("y2", "0");
    this.baseMarker.appendChild(body);
    this.baseMarker.appendChild(heading);
    this.baseSvg.appendChild(grid);
    this.baseSvg.appendChild(this.trail);
    this.baseSvg.appendChild(this.baseMarker);
    baseWrap.appendChild(this.baseSvg);
    this.velocityEl = el("div", "velocity");
    this.velocityEl.dataset.velocity = "";
    baseWrap.appendChild(this.velocityEl);
    this.followerPoseEl = el("div", "follower-pose");
    this.followerPoseEl.dataset.followerPose = "";
    baseWrap.appendChild(this.followerPoseEl);
    aside.appendChild(baseWrap);

    const eventsWrap = el("div", "events");
    eventsWrap.appendChild(el("h3", undefined, "events"));
    this.eventsEl = el("ul", "event-feed");
    eventsWrap.appendChild(this.eventsEl);
    aside.appendChild(eventsWrap);

    main.appendChild(aside);
    root.appendChild(main);
  }

  /** Build limb panels, gripper buttons and the IMU widget once the schema
   * arrives. Safe to call again on reconnect; it rebuilds from scratch. */
  buildFromSchema(schema: SchemaMessage): void {
    this.limbsEl.innerHTML = "";
    this.grippersEl.innerHTML = "";
    this.imuEl.innerHTML = "";
    this.panels = [];
    this.gripperButtons = [];
    this.gripperTimers = [];
    this.gripperApertures = [];

    const limbOrder: string[] = [];
    for (const j of schema.joints) {
      if (!limbOrder.includes(j.limb)) limbOrder.push(j.limb);
    }
    for (const limb of limbOrder) {
      const joints = schema.joints
        .map((info, index) => ({ info, index }))
        .filter((e) => e.info.limb === limb);
      const kind = joints[0].info.kind;
      const panel = el("section", `limb-panel kind-${kind}`);
      panel.dataset.limb = limb;
      panel.appendChild(el("h3", undefined, limb.replace(/_/g, " ")));
      const sliderBlock = el("div", "joint-rows");
      const rows: JointRow[] = [];
      for (const { info, index } of joints) {
        const row = this.buildJointRow(info, index);
        rows.push(row);
        sliderBlock.appendChild(row.slider.closest(".joint-row")!);
      }
      panel.appendChild(sliderBlock);
      let joystickView: HTMLElement | null = null;
      if (kind === "leg") {
        joystickView = el("div", "joystick-view hidden");
        joystickView.appendChild(el("div", "joystick-badge", "JOYSTICK"));
        const readout = el("div", "joystick-readout");
        readout.dataset.joystickReadout = "";
        joystickView.appendChild(readout);
        joystickView.appendChild(
          el(
            "p",
            "hint",
            "hip roll → vy, hip pitch → vx, hip yaw → wz",
          ),
        );
        panel.appendChild(joystickView);
      }
      this.limbsEl.appendChild(panel);
      this.panels.push({
        root: panel,
        kind,
        side: sideOf(limb),
        rows,
        joystickView,
        sliderBlock,
      });
    }

    schema.grippers.forEach((name, i) => {
      const wrap = el("div", "gripper");
      const button = el("button", "gripper-button") as HTMLButtonElement;
      button.dataset.gripper = String(i);
      button.textContent = `hold ${name.replace(/_/g, " ")}`;
      const timer = el("span", "hold-timer", "0.0s");
      const aperture = el("span", "aperture");
      aperture.dataset.aperture = String(i);
      button.addEventListener("pointerdown", () => this.rig.pressGripper(i));
      button.addEventListener("pointerup", () => this.rig.releaseGripper(i));
      button.addEventListener("pointerleave", () =>
        this.rig.releaseGripper(i),
      );
      wrap.appendChild(button);
      wrap.appendChild(timer);
      wrap.appendChild(aperture);
      this.grippersEl.appendChild(wrap);
      this.gripperButtons.push(button);
      this.gripperTimers.push(timer);
      this.gripperApertures.push(aperture);
    });

    this.imuEl.appendChild(el("h3", undefined, "leader orientation"));
    const labels: ["roll", "pitch", "yaw"] = ["roll", "pitch", "yaw"];
    labels.forEach((axis, i) => {
      const row = el("div", "imu-row");
      row.appendChild(el("label", undefined, axis));
      const slider = el("input") as HTMLInputElement;
      slider.type = "range";
      slider.min = "-1.2";
      slider.max = "1.2";
      slider.step = String(SLIDER_STEP);
      slider.value = "0";
      slider.dataset.imu = axis;
      slider.addEventListener("input", () => {
        const rpy: [number, number, number] = [...this.rig.rpy];
        rpy[i] = Number(slider.value);
        this.rig.setOrientation(rpy[0], rpy[1], rpy[2]);
      });
      row.appendChild(slider);
      this.imuEl.appendChild(row);
    });
  }

  private buildJointRow(info: JointInfo, index: number): JointRow {
    const row = el("div", "joint-row");
    row.dataset.joint = info.name;
    const label = el("label", undefined, info.name.replace(/_/g, " "));
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = String(info.min);
    slider.max = String(info.max);
    slider.step = String(SLIDER_STEP);
    slider.value = String(info.home);
    slider.addEventListener("input", () => {
      this.rig.setJoint(index, Number(slider.value));
      value.textContent = Number(slider.value).toFixed(2);
    });
    const value = el("span", "joint-value", info.home.toFixed(2));
    const arrow = el("span", "torque-arrow");
    const arrowBar = el("span", "torque-bar");
    arrow.appendChild(arrowBar);
    const clampMark = el("span", "clamp-mark hidden", "⚠");
    clampMark.title = "torque clamped";
    arrow.appendChild(clampMark);
    row.appendChild(label);
    row.appendChild(slider);
    row.appendChild(value);
    row.appendChild(arrow);
    return { info, index, slider, value, arrow, arrowBar, clampMark };
  }

  attachKeyboard(target: Document): void {
    // Q/E hold the grippers; arrows and A/D steer the left hips; Home recenters
    const nudgeKeys: Record<string, { axis: "roll" | "pitch" | "yaw"; sign: number }> = {
      ArrowUp: { axis: "pitch", sign: 1 },
      ArrowDown: { axis: "pitch", sign: -1 },
      ArrowLeft: { axis: "roll", sign: -1 },
      ArrowRight: { axis: "roll", sign: 1 },
      KeyA: { axis: "yaw", sign: 1 },
      KeyD: { axis: "yaw", sign: -1 },
    };
    target.addEventListener("keydown", (ev: Event) => {
      const key = (ev as KeyboardEvent).code;
      if ((ev as KeyboardEvent).repeat) return;
      if (key === "KeyQ") this.rig.pressGripper(0);
      else if (key === "KeyE") this.rig.pressGripper(1);
      else if (key === "Home") this.rig.resetPose();
      else if (key in nudgeKeys && this.rig.legAxes) {
        const { axis, sign } = nudgeKeys[key];
        this.rig.setNudge(key, this.rig.legAxes[axis], sign * 0.8);
      } else return;
      ev.preventDefault();
    });
    target.addEventListener("keyup", (ev: Event) => {
      const key = (ev as KeyboardEvent).code;
      if (key === "KeyQ") this.rig.releaseGripper(0);
      else if (key === "KeyE") this.rig.releaseGripper(1);
      else if (key in nudgeKeys) this.rig.clearNudge(key);
    });
  }

  /** Re-render everything that depends on the model. Called per state
   * message and on connection changes. */
  render(): void {
    const b = banner(this.model);
    this.bannerEl.textContent = b.text;
    this.bannerEl.dataset.tone = b.tone;

    const enabled = inputsEnabled(this.model);
    this.root.classList.toggle("offline", this.model.connection !== "online");
    for (const panel of this.panels) {
      for (const row of panel.rows) row.slider.disabled = !enabled;
    }
    for (const button of this.gripperButtons) button.disabled = !enabled;
    if (!enabled) this.rig.disable();

    this.armingBar.style.width = `${(armingFraction(this.model) * 100).toFixed(1)}%`;
    this.syncBar.style.width = `${(syncFraction(this.model) * 100).toFixed(1)}%`;
    this.latencyEl.textContent = latencyText(this.model.state);

    const state = this.model.state;
    if (state === null) return;
    this.staleDot.classList.toggle("stale", state.stale);
    this.inconsistentEl.classList.toggle("hidden", sidesConsistent(state));

    for (const panel of this.panels) {
      if (panel.kind === "arm") {
        const active =
          panel.side === "left"
            ? state.left_arm_active
            : panel.side === "right"
              ? state.right_arm_active
              : true;
        panel.root.classList.toggle("inactive", !active);
      }
      if (panel.kind === "leg" && panel.joystickView) {
        const joystick =
          panel.side === "left"
            ? state.left_leg_joystick
            : state.right_leg_joystick;
        panel.root.classList.toggle("joystick", joystick);
        panel.joystickView.classList.toggle("hidden", !joystick);
        panel.sliderBlock.classList.toggle("hidden", joystick);
        if (joystick) {
          const readout = panel.joystickView.querySelector(
            "[data-joystick-readout]",
          ) as HTMLElement;
          const [vx, vy, wz] = state.velocity;
          readout.textContent = `vx ${vx.toFixed(2)}  vy ${vy.toFixed(2)}  wz ${wz.toFixed(2)}`;
        }
      }
      for (const row of panel.rows) this.renderArrow(row, state);
    }

    state.follower_grippers.forEach((v, i) => {
      const node = this.gripperApertures[i];
      if (node) node.textContent = `aperture ${v.toFixed(2)}`;
    });

    const [x, y, heading] = state.base_pose;
    const deg = (-heading * 180) / Math.PI;
    this.baseMarker.setAttribute(
      "transform",
      `translate(${x.toFixed(4)} ${(-y).toFixed(4)}) rotate(${deg.toFixed(2)})`,
    );
    this.baseMarker.dataset.x = x.toFixed(4);
    this.baseMarker.dataset.y = y.toFixed(4);
    const point = `${x.toFixed(3)},${(-y).toFixed(3)}`;
    if (this.trailPoints[this.trailPoints.length - 1] !== point) {
      this.trailPoints.push(point);
      if (this.trailPoints.length > TRAIL_MAX_POINTS) this.trailPoints.shift();
      this.trail.setAttribute("points", this.trailPoints.join(" "));
    }
    this.baseSvg.setAttribute(
      "viewBox",
      `${(x - 2).toFixed(3)} ${(-y - 2).toFixed(3)} 4 4`,
    );
    const [vx, vy, wz] = state.velocity;
    this.velocityEl.textContent = `vx ${vx.toFixed(2)} m/s  vy ${vy.toFixed(2)} m/s  wz ${wz.toFixed(2)} rad/s`;
    this.followerPoseEl.textContent = `follower pose [${state.follower_joints
      .map((v) => v.toFixed(2))
      .join(", ")}]`;

    if (this.model.eventLog.length !== this.eventsRendered) {
      this.eventsEl.innerHTML = "";
      const tail = this.model.eventLog.slice(-EVENT_FEED_LINES).reverse();
      for (const event of tail) {
        this.eventsEl.appendChild(el("li", undefined, describeEvent(event)));
      }
      this.eventsRendered = this.model.eventLog.length;
    }
  }

  // Torques are indexed by leader joint (the spring acts on the leader
  // device), aligned with the schema order.
  private renderArrow(row: JointRow, state: StateMessage): void {
    const torque = state.torques[row.index] ?? 0;
    const spec = torqueArrow(torque);
    row.arrowBar.style.width = `${spec.lengthPx}px`;
    row.arrowBar.style.maxWidth = `${ARROW_CAP_PX}px`;
    row.arrowBar.classList.toggle("dir-neg", spec.dir < 0);
    row.clampMark.classList.toggle("hidden", !spec.capped);
  }

  /** Update the visible gripper hold timers; driven by a fast interval.
   * While held the timer counts toward whichever threshold applies: the
   * activation hold from Idle/Arming, the toggle hold once the session
   * is up. Both values come from the schema message. */
  renderHoldTimers(): void {
    const hold = this.model.schema?.hold_s;
    const phase = this.model.state?.phase;
    const target =
      hold === undefined
        ? null
        : phase === "active" || phase === "synchronizing"
          ? hold.toggle
          : hold.activate;
    this.gripperTimers.forEach((node, i) => {
      const held = this.rig.isHeld(i);
      const s = this.rig.heldSeconds(i);
      node.textContent =
        held && target !== null
          ? `${s.toFixed(1)}s / ${target.toFixed(1)}s`
          : `${s.toFixed(1)}s`;
      node.classList.toggle("holding", held);
      const button = this.gripperButtons[i];
      if (button) button.classList.toggle("held", held);
    });
  }
}
