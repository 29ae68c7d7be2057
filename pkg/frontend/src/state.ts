// Client state and its reducer. All server events and UI intents funnel
// through apply*/set* methods on one ClientState instance; views only read.

import { FrameMsg, PoseMsg, clampSteer } from "./protocol.js";

export interface PlotPoint {
  x: number;
  y: number;
}

export const STEER_STEP = 0.1;
export const DEFAULT_POINT_CAP = 500;

export class ClientState {
  connected = false;
  lastMessageAt = 0; // ms epoch of the last server message
  pose: PoseMsg | null = null;
  frame: FrameMsg | null = null;
  recording = false;
  samples = 0;
  moving = false;
  steer = 0; // local target steer; the gauge shows the acknowledged one
  paused = false;
  pointCap = DEFAULT_POINT_CAP;
  private buffer: PlotPoint[] = [];

  applyPose(msg: PoseMsg, now = Date.now()): void {
    this.pose = msg;
    this.lastMessageAt = now;
    if (!this.paused) {
      this.buffer.push({ x: msg.x, y: msg.y });
      this.trim();
    }
  }

  applyFrame(msg: FrameMsg, now = Date.now()): void {
    this.frame = msg;
    this.lastMessageAt = now;
  }

  get plotBuffer(): readonly PlotPoint[] {
    return this.buffer;
  }

  setPaused(paused: boolean): void {
    this.paused = paused;
  }

  setPointCap(cap: number): void {
    this.pointCap = Math.max(1, Math.floor(cap));
    this.trim();
  }

  private trim(): void {
    const excess = this.buffer.length - this.pointCap;
    if (excess > 0) this.buffer.splice(0, excess); // drop oldest first
  }

  clearPlot(): void {
    this.buffer = [];
  }

  // keyboard intents; each returns the steer value to send, or null
  steerLeft(): number {
    this.steer = clampSteer(this.steer + STEER_STEP);
    this.moving = true;
    return this.steer;
  }

  steerRight(): number {
    this.steer = clampSteer(this.steer - STEER_STEP);
    this.moving = true;
    return this.steer;
  }

  steerCenterAndToggle(): { steer: number; moving: boolean } {
    this.steer = 0;
    this.moving = !this.moving;
    return { steer: this.steer, moving: this.moving };
  }

  stop(): { steer: number; moving: boolean } {
    this.steer = 0;
    this.moving = false;
    return { steer: this.steer, moving: this.moving };
  }

  /** Gauge shows stale data after 2 s of silence or on disconnect. */
  isStale(now = Date.now()): boolean {
    return !this.connected || now - this.lastMessageAt > 2000;
  }
}
