// Canvas trajectory plot: live trace, optional overlay beneath it, pan with
// drag and zoom with the wheel. No charting dependency.

import { OverlayTrace } from "./overlay.js";
import { PlotPoint } from "./state.js";

export interface Viewport {
  cx: number; // world center
  cy: number;
  scale: number; // px per meter
}

export class TrajectoryPlot {
  viewport: Viewport = { cx: 7, cy: 5.5, scale: 30 };
  overlay: OverlayTrace[] = [];

  constructor(private canvas: HTMLCanvasElement) {
    if (typeof window === "undefined") return; // headless tests skip pan/zoom
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      const factor = e.deltaY < 0 ? 1.15 : 1 / 1.15;
      this.viewport.scale = Math.min(400, Math.max(2, this.viewport.scale * factor));
    });
    let dragging = false;
    let last = { x: 0, y: 0 };
    canvas.addEventListener("mousedown", (e) => {
      dragging = true;
      last = { x: e.offsetX, y: e.offsetY };
    });
    window.addEventListener("mouseup", () => (dragging = false));
    canvas.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      this.viewport.cx -= (e.offsetX - last.x) / this.viewport.scale;
      this.viewport.cy += (e.offsetY - last.y) / this.viewport.scale;
      last = { x: e.offsetX, y: e.offsetY };
    });
  }

  private toPx(p: { x: number; y: number }): [number, number] {
    const { cx, cy, scale } = this.viewport;
    return [
      this.canvas.width / 2 + (p.x - cx) * scale,
      this.canvas.height / 2 - (p.y - cy) * scale,
    ];
  }

  fitTo(points: { x: number; y: number }[]): void {
    if (points.length === 0) return;
    const xs = points.map((p) => p.x);
    const ys = points.map((p) => p.y);
    const minX = Math.min(...xs);
    const maxX = Math.max(...xs);
    const minY = Math.min(...ys);
    const maxY = Math.max(...ys);
    this.viewport.cx = (minX + maxX) / 2;
    this.viewport.cy = (minY + maxY) / 2;
    const span = Math.max(maxX - minX, maxY - minY, 1e-6);
    this.viewport.scale = (0.9 * Math.min(this.canvas.width, this.canvas.height)) / span;
  }

  draw(live: readonly PlotPoint[]): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    for (const trace of this.overlay) {
      this.stroke(ctx, trace.points, trace.series === "expert" ? "#2e8b57" : "#4169e1", 1);
    }
    this.stroke(ctx, live as { x: number; y: number }[], "#f5b942", 2);
    if (live.length > 0) {
      const [px, py] = this.toPx(live[live.length - 1]);
      ctx.fillStyle = "#f5b942";
      ctx.beginPath();
      ctx.arc(px, py, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private stroke(
    ctx: CanvasRenderingContext2D,
    points: { x: number; y: number }[],
    color: string,
    width: number,
  ): void {
    if (points.length < 2) return;
    ctx.strokeStyle = color;
    ctx.lineWidth = width;
    ctx.beginPath();
    const [x0, y0] = this.toPx(points[0]);
    ctx.moveTo(x0, y0);
    for (let i = 1; i < points.length; i++) {
      const [x, y] = this.toPx(points[i]);
      ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
}
