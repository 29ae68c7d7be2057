// Steering gauge: a needle over [-1, 1], grayed out when data is stale.

export function drawGauge(canvas: HTMLCanvasElement, steer: number,
                          stale: boolean): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const cx = w / 2;
  const cy = h - 8;
  const r = Math.min(w / 2 - 6, h - 14);

  ctx.strokeStyle = stale ? "#555" : "#ccc";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.arc(cx, cy, r, Math.PI, 2 * Math.PI);
  ctx.stroke();

  // needle from vertical: steer +1 (full left) swings to the arc's left end
  const phi = (steer * Math.PI) / 2;
  ctx.strokeStyle = stale ? "#777" : "#f5b942";
  ctx.lineWidth = 4;
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx - r * Math.sin(phi), cy - r * Math.cos(phi));
  ctx.stroke();

  ctx.fillStyle = stale ? "#777" : "#eee";
  ctx.font = "12px monospace";
  ctx.textAlign = "center";
  ctx.fillText(stale ? "stale" : steer.toFixed(2), cx, cy - r / 2);
}
