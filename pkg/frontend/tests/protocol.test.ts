import { describe, expect, it } from "vitest";

import { ConsoleHistory } from "../src/console.js";
import { SocketLike, StreamClient } from "../src/net.js";
import { ServerMsg, clampSteer, parseServerMsg, steerMessage } from "../src/protocol.js";

describe("message parsing", () => {
  it("accepts pose and frame, rejects the rest", () => {
    expect(parseServerMsg('{"type":"pose","t":1,"x":0,"y":0,"theta":0,"steer":0}'))
      .toMatchObject({ type: "pose", t: 1 });
    expect(parseServerMsg('{"type":"frame","w":2,"h":2,"rgb":"AAAA"}'))
      .toMatchObject({ type: "frame", w: 2 });
    expect(parseServerMsg("not json")).toBeNull();
    expect(parseServerMsg('{"type":"mystery"}')).toBeNull();
    expect(parseServerMsg("42")).toBeNull();
  });

  it("steer messages are always within [-1, 1]", () => {
    expect(steerMessage(0.5)).toEqual({ type: "steer", value: 0.5 });
    expect(steerMessage(7).value).toBe(1);
    expect(steerMessage(-7).value).toBe(-1);
    expect(steerMessage(NaN).value).toBe(0);
    expect(clampSteer(-1.0001)).toBe(-1);
  });
});

class FakeSocket implements SocketLike {
  sent: string[] = [];
  onmessage: ((ev: { data: string }) => void) | null = null;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }
}

describe("stream client contract against a mock server", () => {
  it("speaks only the documented messages", () => {
    const socket = new FakeSocket();
    const received: ServerMsg[] = [];
    const statuses: boolean[] = [];
    const client = new StreamClient(
      "ws://test/stream",
      {
        onMessage: (m) => received.push(m),
        onStatus: (s) => statuses.push(s),
      },
      () => socket,
    );
    client.connect();
    socket.onopen?.();
    expect(statuses).toEqual([true]);

    socket.onmessage?.({
      data: '{"type":"pose","t":0.05,"x":1,"y":2,"theta":0,"steer":0.1}',
    });
    expect(received).toHaveLength(1);

    client.send(steerMessage(0.3));
    client.send({ type: "stop" });
    expect(socket.sent.map((s) => JSON.parse(s))).toEqual([
      { type: "steer", value: 0.3 },
      { type: "stop" },
    ]);
    for (const raw of socket.sent) {
      const msg = JSON.parse(raw);
      expect(["steer", "stop"]).toContain(msg.type);
      if (msg.type === "steer") {
        expect(Math.abs(msg.value)).toBeLessThanOrEqual(1);
      }
    }
  });

  it("reports disconnect", () => {
    const sockets: FakeSocket[] = [];
    const statuses: boolean[] = [];
    const client = new StreamClient(
      "ws://test/stream",
      { onMessage: () => undefined, onStatus: (s) => statuses.push(s) },
      () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
    );
    client.connect();
    sockets[0].onopen?.();
    sockets[0].onclose?.();
    expect(statuses).toEqual([true, false]);
  });
});

describe("console history", () => {
  it("navigates up and down like a shell", () => {
    const hist = new ConsoleHistory();
    hist.push("ls");
    hist.push("status");
    expect(hist.up()).toBe("status");
    expect(hist.up()).toBe("ls");
    expect(hist.up()).toBe("ls"); // clamped at oldest
    expect(hist.down()).toBe("status");
    expect(hist.down()).toBe(""); // back to a fresh line
  });

  it("empty history yields nothing", () => {
    const hist = new ConsoleHistory();
    expect(hist.up()).toBeNull();
    expect(hist.down()).toBeNull();
  });
});
