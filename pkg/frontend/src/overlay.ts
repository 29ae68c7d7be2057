// Parser for exported overlay.csv files:
// series,t,x,y,heading,steer with series in {expert, model}.

export interface OverlayTrace {
  series: string;
  points: { x: number; y: number }[];
}

export function parseOverlayCsv(text: string): OverlayTrace[] {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0 || !lines[0].startsWith("series,")) {
    throw new Error("not an overlay.csv (missing 'series,...' header)");
  }
  const bySeries = new Map<string, { x: number; y: number }[]>();
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== 6) {
      throw new Error(`overlay.csv row ${i + 1}: expected 6 fields`);
    }
    const [series, , xs, ys] = parts;
    const x = Number(xs);
    const y = Number(ys);
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      throw new Error(`overlay.csv row ${i + 1}: bad coordinates`);
    }
    let pts = bySeries.get(series);
    if (!pts) {
      pts = [];
      bySeries.set(series, pts);
    }
    pts.push({ x, y });
  }
  return [...bySeries.entries()].map(([series, points]) => ({ series, points }));
}
