// Wires the three views (drive, dashboard, console) to one ClientState and
// one WebSocket stream.

import { ConsoleView } from "./console.js";
import { drawGauge } from "./gauge.js";
import { StreamClient, fetchState, sendCommand, setRecording } from "./net.js";
import { parseOverlayCsv } from "./overlay.js";
import { TrajectoryPlot } from "./plot.js";
import { steerMessage } from "./protocol.js";
import { ClientState } from "./state.js";

const base = window.location.hash.slice(1) || "http://127.0.0.1:8080";
const wsUrl = base.replace(/^http/, "ws") + "/stream";

const state = new ClientState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const frameCanvas = el<HTMLCanvasElement>("frame");
const gaugeCanvas = el<HTMLCanvasElement>("gauge");
const plotCanvas = el<HTMLCanvasElement>("plot");
const statusEl = el<HTMLSpanElement>("status");
const samplesEl = el<HTMLSpanElement>("samples");
const recordBtn = el<HTMLButtonElement>("record");
const pauseBtn = el<HTMLButtonElement>("pause");
const capSlider = el<HTMLInputElement>("cap");
const capLabel = el<HTMLSpanElement>("cap-label");
const fitBtn = el<HTMLButtonElement>("fit");
const overlayInput = el<HTMLInputElement>("overlay-file");

const plot = new TrajectoryPlot(plotCanvas);

const client = new StreamClient(wsUrl, {
  onMessage: (msg) => {
    if (msg.type === "pose") state.applyPose(msg);
    else state.applyFrame(msg);
  },
  onStatus: (connected) => {
    state.connected = connected;
    statusEl.textContent = connected ? "connected" : "disconnected";
    statusEl.className = connected ? "ok" : "bad";
  },
});
client.connect();

// ------------------------------------------------------------------ drive

window.addEventListener("keydown", (e) => {
  if ((e.target as HTMLElement)?.tagName === "INPUT") return;
  if (e.key === "ArrowLeft") client.send(steerMessage(state.steerLeft()));
  else if (e.key === "ArrowRight") client.send(steerMessage(state.steerRight()));
  else if (e.key === "ArrowUp") {
    const { steer, moving } = state.steerCenterAndToggle();
    if (moving) client.send(steerMessage(steer));
    else client.send({ type: "stop" });
  } else if (e.key === "ArrowDown") {
    state.stop();
    client.send({ type: "stop" });
  } else return;
  e.preventDefault();
});

recordBtn.addEventListener("click", () => {
  void setRecording(base, !state.recording).then((resp) => {
    state.recording = resp.recording;
    state.samples = resp.samples;
    recordBtn.textContent = resp.recording ? "stop recording" : "start recording";
  });
});

function drawFrame(): void {
  const msg = state.frame;
  const ctx = frameCanvas.getContext("2d");
  if (!msg || !ctx) return;
  const raw = atob(msg.rgb);
  const rgba = new Uint8ClampedArray(msg.w * msg.h * 4);
  for (let i = 0, j = 0; i < raw.length; i += 3, j += 4) {
    rgba[j] = raw.charCodeAt(i);
    rgba[j + 1] = raw.charCodeAt(i + 1);
    rgba[j + 2] = raw.charCodeAt(i + 2);
    rgba[j + 3] = 255;
  }
  frameCanvas.width = msg.w;
  frameCanvas.height = msg.h;
  ctx.putImageData(new ImageData(rgba, msg.w, msg.h), 0, 0);
}

// -------------------------------------------------------------- dashboard

pauseBtn.addEventListener("click", () => {
  state.setPaused(!state.paused);
  pauseBtn.textContent = state.paused ? "resume" : "pause";
});

capSlider.addEventListener("input", () => {
  state.setPointCap(Number(capSlider.value));
  capLabel.textContent = capSlider.value;
});

fitBtn.addEventListener("click", () => {
  const pts = [...state.plotBuffer, ...plot.overlay.flatMap((t) => t.points)];
  plot.fitTo(pts);
});

overlayInput.addEventListener("change", () => {
  const file = overlayInput.files?.[0];
  if (!file) return;
  void file.text().then((text) => {
    plot.overlay = parseOverlayCsv(text);
    plot.fitTo(plot.overlay.flatMap((t) => t.points));
  });
});

// -------------------------------------------------------------- console

new ConsoleView(el("console-out"), el<HTMLInputElement>("console-in"),
                (cmd) => sendCommand(base, cmd));

// ------------------------------------------------------------------ loop

setInterval(() => {
  void fetchState(base).then((s) => {
    state.samples = s.samples;
    state.recording = s.recording;
    samplesEl.textContent = String(s.samples);
    recordBtn.textContent = s.recording ? "stop recording" : "start recording";
  }).catch(() => undefined);
}, 1000);

function tick(): void {
  drawFrame();
  drawGauge(gaugeCanvas, state.pose?.steer ?? 0, state.isStale());
  plot.draw(state.plotBuffer);
  requestAnimationFrame(tick);
}
tick();
