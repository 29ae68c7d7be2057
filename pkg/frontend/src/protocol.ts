// Wire types for the simulator server. The UI speaks exactly this protocol:
// GET /state, POST /record {"on"}, POST /cmd {"cmd"} -> {"out"}, and the
// /stream WebSocket with pose/frame messages down and steer messages up.

export interface PoseMsg {
  type: "pose";
  t: number;
  x: number;
  y: number;
  theta: number;
  steer: number;
}

export interface FrameMsg {
  type: "frame";
  w: number;
  h: number;
  rgb: string; // base64 RGB24
}

export type ServerMsg = PoseMsg | FrameMsg;

export interface SteerMsg {
  type: "steer";
  value: number;
}

export interface StopMsg {
  type: "stop";
}

export type ClientMsg = SteerMsg | StopMsg;

export interface ServerState {
  t: number;
  x: number;
  y: number;
  theta: number;
  steer: number;
  speed: number;
  moving: boolean;
  recording: boolean;
  samples: number;
  map: string;
  clients: number;
}

export function parseServerMsg(raw: string): ServerMsg | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  if (msg.type === "pose" && typeof msg.t === "number") return msg as unknown as PoseMsg;
  if (msg.type === "frame" && typeof msg.rgb === "string") return msg as unknown as FrameMsg;
  return null;
}

export function clampSteer(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(-1, value));
}

export function steerMessage(value: number): SteerMsg {
  return { type: "steer", value: clampSteer(value) };
}
