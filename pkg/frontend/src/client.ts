// WebSocket line client. The browser talks to the gateway, which bridges to
// the session server's TCP socket; one JSON message per WebSocket frame.

import {
  ClientMessage,
  ServerMessage,
  encodeClientMessage,
  parseServerLine,
} from "./protocol.js";

type WebSocketLike = {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  readyState: number;
};

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface ConsoleClientOptions {
  // injectable for tests and for node (the ws package); browsers default
  // to the native WebSocket
  factory?: WebSocketFactory;
}

export class ConsoleClient {
  private ws: WebSocketLike | null = null;
  private readonly factory: WebSocketFactory;
  onmessage: ((msg: ServerMessage) => void) | null = null;
  onstatus: ((status: "connected" | "lost") => void) | null = null;
  /** inbound lines that failed protocol validation (should stay 0) */
  badLines = 0;

  constructor(
    readonly url: string,
    opts: ConsoleClientOptions = {},
  ) {
    this.factory =
      opts.factory ??
      ((u: string) => new (globalThis as any).WebSocket(u) as WebSocketLike);
  }

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const ws = this.factory(this.url);
      this.ws = ws;
      let settled = false;
      ws.onopen = () => {
        settled = true;
        this.onstatus?.("connected");
        resolve();
      };
      ws.onerror = (ev) => {
        if (!settled) {
          settled = true;
          reject(new Error(`websocket error connecting to ${this.url}`));
        }
      };
      ws.onclose = () => {
        this.onstatus?.("lost");
        if (!settled) {
          settled = true;
          reject(new Error("websocket closed before opening"));
        }
      };
      ws.onmessage = (ev) => {
        const text = typeof ev.data === "string" ? ev.data : String(ev.data);
        for (const line of text.split("\n")) {
          if (!line.trim()) continue;
          const msg = parseServerLine(line);
          if (msg === null) {
            this.badLines += 1;
            continue;
          }
          this.onmessage?.(msg);
        }
      };
    });
  }

  /** Validates against the protocol grammar; throws CommandRejected first. */
  send(msg: ClientMessage): void {
    const line = encodeClientMessage(msg);
    if (!this.ws) throw new Error("not connected");
    this.ws.send(line);
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
  }
}
