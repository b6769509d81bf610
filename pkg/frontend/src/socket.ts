// Thin WebSocket wrapper: parse inbound records, queue nothing, reconnect
// with a fixed backoff. The bridge resends the schema and the full event
// history on every fresh connection, so reconnects need no client state.

import { parseServerMessage, ServerMessage } from "./protocol";

export interface SocketCallbacks {
  onMessage: (msg: ServerMessage) => void;
  onStatus: (online: boolean) => void;
}

const RECONNECT_DELAY_MS = 1000;

export class ConsoleSocket {
  private ws: WebSocket | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(
    private url: string,
    private callbacks: SocketCallbacks,
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.callbacks.onStatus(true);
    ws.onmessage = (ev: MessageEvent) => {
      const text = typeof ev.data === "string" ? ev.data : String(ev.data);
      const msg = parseServerMessage(text);
      if (msg) this.callbacks.onMessage(msg);
    };
    ws.onclose = () => {
      this.callbacks.onStatus(false);
      if (!this.closed) {
        this.timer = setTimeout(() => this.open(), RECONNECT_DELAY_MS);
      }
    };
    ws.onerror = () => {
      // onclose follows; nothing to do here
    };
  }

  send(doc: object): boolean {
    if (this.ws === null || this.ws.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.ws.send(JSON.stringify(doc));
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
  }
}
