"""Telemetry and teleoperation bridge.

One asyncio ticker owns the simulation; HTTP handlers and WebSocket clients
run on the same event loop, so client effects are serialized between ticks.
Steering sent by a client is applied at the next tick; telemetry fan-out drops
frames for slow clients instead of stalling the ticker.

Endpoints: GET /state, POST /record {"on": bool}, POST /cmd {"cmd": str},
WS /stream (pose messages at tick rate, base64 frames throttled to 5 Hz).
"""

from __future__ import annotations

import asyncio
import base64
import contextlib
import json
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from . import maps
from .recorder import CSV_HEADER, write_ppm
from .simworld import (CameraConfig, CarState, Controls, WorldMap,
                       render_camera, step, wall_clearance)

ALLOWED_COMMANDS = ("ls", "status", "record on", "record off", "reset",
                    "load-map", "eval")
FRAME_HZ = 5.0


class SimSession:
    """Single-owner simulation state advanced by exactly one ticker."""

    def __init__(self, world: WorldMap, tick_hz: float = 20.0,
                 speed: float = 0.8, record_dir=None,
                 camera: CameraConfig | None = None):
        self.world = world
        self.tick_hz = tick_hz
        self.dt = 1.0 / tick_hz
        self.speed = speed
        self.camera = camera or CameraConfig(width=160, height=120)
        self.record_dir = Path(record_dir) if record_dir else None
        self.reset()
        self.recording = False
        self.sample_count = 0
        self.clients: list[asyncio.Queue] = []
        self._pending_steer: float | None = None
        self._frames_since_cast = 0.0

    def reset(self):
        x, y, th = self.world.start_pose
        self.state = CarState(x=x, y=y, heading=th, speed=0.0)
        self.steer = 0.0
        self.moving = False
        self.t = 0.0

    def request_steer(self, value: float):
        self._pending_steer = float(np.clip(value, -1.0, 1.0))

    def set_recording(self, on: bool) -> None:
        if on and not self.recording:
            if self.record_dir is None:
                raise ValueError("no --out directory configured for recording")
            (self.record_dir / "images").mkdir(parents=True, exist_ok=True)
            csv = self.record_dir / "labels.csv"
            if not csv.exists():
                csv.write_text(CSV_HEADER + "\n", encoding="utf-8")
            self.recording = True
        elif not on:
            if self.recording:
                meta = {"map": self.world.name, "expert": "teleop",
                        "hz": self.tick_hz, "speed": self.speed,
                        "camera": {"width": self.camera.width,
                                   "height": self.camera.height,
                                   "hfov": self.camera.hfov}}
                (self.record_dir / "metadata.json").write_text(
                    json.dumps(meta, indent=2) + "\n", encoding="utf-8")
            self.recording = False

    def tick(self) -> dict:
        """Advance one step; returns the pose message that was broadcast."""
        if self._pending_steer is not None:
            self.steer = self._pending_steer
            self._pending_steer = None
        speed = self.speed if self.moving else 0.0
        new_state = step(self.state, Controls(steer=self.steer, speed=speed),
                         self.dt)
        if wall_clearance(self.world, new_state.x, new_state.y) > 0.05:
            self.state = new_state
        self.t += self.dt

        if self.recording:
            frame = render_camera(self.world, self.state, self.camera,
                                  timestamp=self.t)
            sid = self.sample_count
            write_ppm(self.record_dir / "images" / f"{sid:06d}.ppm", frame.rgb)
            with open(self.record_dir / "labels.csv", "a", encoding="utf-8") as fh:
                fh.write(f"{sid},{self.steer:.6f}\n")
            self.sample_count += 1

        msg = {"type": "pose", "t": round(self.t, 4), "x": self.state.x,
               "y": self.state.y, "theta": self.state.heading,
               "steer": self.steer}
        self._broadcast(msg)
        self._frames_since_cast += self.dt
        if self._frames_since_cast >= 1.0 / FRAME_HZ:
            self._frames_since_cast = 0.0
            frame = render_camera(self.world, self.state, self.camera,
                                  timestamp=self.t)
            self._broadcast({"type": "frame", "w": frame.width,
                             "h": frame.height,
                             "rgb": base64.b64encode(frame.rgb.tobytes()).decode()})
        return msg

    def _broadcast(self, msg: dict):
        for q in self.clients:
            try:
                q.put_nowait(msg)
            except asyncio.QueueFull:
                pass        # slow client drops frames rather than stall the ticker

    def state_dict(self) -> dict:
        return {"t": self.t, "x": self.state.x, "y": self.state.y,
                "theta": self.state.heading, "steer": self.steer,
                "speed": self.speed if self.moving else 0.0,
                "moving": self.moving, "recording": self.recording,
                "samples": self.sample_count, "map": self.world.name,
                "clients": len(self.clients)}

    def handle_command(self, line: str) -> str:
        """Run an allow-listed console command and return its output text."""
        line = line.strip()
        parts = line.split()
        if not parts:
            return ""
        head = parts[0]
        if line == "ls" and self.record_dir is not None:
            root = self.record_dir
            names = sorted(p.name for p in root.iterdir()) if root.exists() else []
            return "\n".join(names) if names else "(empty)"
        if line == "ls":
            return "\n".join(sorted(p.name for p in Path.cwd().iterdir()))
        if line == "status":
            return json.dumps(self.state_dict(), indent=2)
        if line in ("record on", "record off"):
            self.set_recording(line.endswith("on"))
            return f"recording {'on' if self.recording else 'off'}"
        if line == "reset":
            self.reset()
            return "reset to start pose"
        if head == "load-map" and len(parts) == 2:
            self.world = maps.load_map_or_path(parts[1])
            self.reset()
            return f"loaded map {parts[1]}"
        if head == "eval" and len(parts) == 2:
            return self._eval_checkpoint(parts[1])
        return "command not permitted"

    def _eval_checkpoint(self, ckpt: str) -> str:
        from .evalloop import ModelPolicy, rollout
        from .models import load_model
        from .pipeline import PipelineSpec
        try:
            model, spec, ops = load_model(ckpt)
        except (OSError, ValueError) as exc:
            return f"eval failed: {exc}"
        policy = ModelPolicy(model, spec, PipelineSpec(ops) if ops else None)
        traj = rollout(policy, self.world, speed=self.speed, camera=self.camera)
        return (f"outcome={traj.outcome} duration={traj.duration:.2f}s "
                f"entries={len(traj.entries)}")


def create_app(world: WorldMap, tick_hz: float = 20.0, speed: float = 0.8,
               record_dir=None, camera: CameraConfig | None = None,
               real_time: bool = True) -> FastAPI:
    session = SimSession(world, tick_hz=tick_hz, speed=speed,
                         record_dir=record_dir, camera=camera)

    @contextlib.asynccontextmanager
    async def lifespan(app):
        task = asyncio.create_task(_run_ticker(session, real_time))
        yield
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task

    app = FastAPI(lifespan=lifespan)
    # the UI is served from its own static-file port
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.session = session

    @app.get("/state")
    def get_state():
        return session.state_dict()

    @app.post("/record")
    def post_record(body: dict):
        session.set_recording(bool(body.get("on")))
        return {"recording": session.recording, "samples": session.sample_count}

    @app.post("/cmd")
    def post_cmd(body: dict):
        return {"out": session.handle_command(str(body.get("cmd", "")))}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue(maxsize=64)
        session.clients.append(queue)

        async def sender():
            while True:
                await ws.send_json(await queue.get())

        async def receiver():
            while True:
                msg = await ws.receive_json()
                if msg.get("type") == "steer":
                    session.request_steer(float(msg.get("value", 0.0)))
                    session.moving = True
                elif msg.get("type") == "stop":
                    session.moving = False

        try:
            await asyncio.gather(sender(), receiver())
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            session.clients.remove(queue)

    return app


async def _run_ticker(session: SimSession, real_time: bool):
    period = session.dt
    next_t = time.monotonic()
    while True:
        session.tick()
        if real_time:
            next_t += period
            delay = next_t - time.monotonic()
            await asyncio.sleep(max(delay, 0.0))
        else:
            await asyncio.sleep(0)


def serve(world: WorldMap, port: int = 8080, tick_hz: float = 20.0,
          speed: float = 0.8, record_dir=None, host: str = "127.0.0.1"):
    """Run the telemetry server; blocks until interrupted."""
    import uvicorn

    app = create_app(world, tick_hz=tick_hz, speed=speed, record_dir=record_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
