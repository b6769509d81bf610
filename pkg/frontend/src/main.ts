// Wires socket, model, input rig and UI together. createApp is also the
// entry point for the automated tests, so everything testable hangs off it.

import "./style.css";
import { InputRig } from "./input";
import { ConsoleSocket } from "./socket";
import { ConsoleModel } from "./state";
import { ConsoleUI } from "./ui";

export interface App {
  model: ConsoleModel;
  rig: InputRig;
  ui: ConsoleUI;
  socket: ConsoleSocket;
  stop(): void;
}

export function createApp(root: HTMLElement, url: string): App {
  const model = new ConsoleModel();
  let socket: ConsoleSocket | null = null;
  const rig = new InputRig({
    send: (input) => {
      socket?.send(input);
    },
  });
  const ui = new ConsoleUI(root, model, rig);
  socket = new ConsoleSocket(url, {
    onMessage: (msg) => {
      model.applyServer(msg);
      if (msg.type === "schema") {
        // resent on every (re)connection; rebuild the panels from it
        rig.configure(msg);
        ui.buildFromSchema(msg);
      }
      ui.render();
    },
    onStatus: (online) => {
      model.setConnection(online ? "online" : "offline");
      if (!online) rig.disable();
      ui.render();
    },
  });
  ui.attachKeyboard(root.ownerDocument);
  ui.render();
  socket.connect();
  rig.start();
  const holdTimer = setInterval(() => ui.renderHoldTimers(), 100);
  return {
    model,
    rig,
    ui,
    socket,
    stop() {
      clearInterval(holdTimer);
      rig.stop();
      socket?.close();
    },
  };
}

function bridgeUrl(): string {
  // served by the bridge itself: same host, ws scheme; on the vite dev
  // server fall back to the default bridge port
  if (import.meta.env.DEV) return "ws://127.0.0.1:47557";
  const proto = window.location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${window.location.host}`;
}

const mount = typeof document !== "undefined" && document.getElementById("app");
if (mount) {
  createApp(mount, bridgeUrl());
}
