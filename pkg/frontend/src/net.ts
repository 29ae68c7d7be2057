// Server I/O: WebSocket stream plus the three HTTP endpoints. The socket
// factory is injectable so tests can run against a fake.

import { ClientMsg, ServerMsg, ServerState, parseServerMsg } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export class StreamClient {
  private socket: SocketLike | null = null;
  private reconnectMs = 500;
  private closed = false;

  constructor(
    private url: string,
    private handlers: {
      onMessage: (msg: ServerMsg) => void;
      onStatus: (connected: boolean) => void;
    },
    private factory: SocketFactory = (url) =>
      new WebSocket(url) as unknown as SocketLike,
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.reconnectMs = 500;
      this.handlers.onStatus(true);
    };
    sock.onmessage = (ev) => {
      const msg = parseServerMsg(ev.data);
      if (msg) this.handlers.onMessage(msg);
    };
    sock.onclose = () => {
      this.handlers.onStatus(false);
      if (!this.closed) {
        setTimeout(() => this.open(), this.reconnectMs);
        this.reconnectMs = Math.min(this.reconnectMs * 2, 8000);
      }
    };
  }

  send(msg: ClientMsg): void {
    this.socket?.send(JSON.stringify(msg));
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}

export async function fetchState(base: string): Promise<ServerState> {
  const resp = await fetch(`${base}/state`);
  return (await resp.json()) as ServerState;
}

export async function setRecording(base: string, on: boolean): Promise<{ recording: boolean; samples: number }> {
  const resp = await fetch(`${base}/record`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ on }),
  });
  return (await resp.json()) as { recording: boolean; samples: number };
}

export async function sendCommand(base: string, cmd: string): Promise<string> {
  const resp = await fetch(`${base}/cmd`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ cmd }),
  });
  return ((await resp.json()) as { out: string }).out;
}
