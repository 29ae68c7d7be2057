"""Closed-loop rollouts, trajectory metrics and expert/model overlay export.

A policy is anything with ``reset()`` and ``act(obs) -> steer``; the rollout
feeds it an Observation per tick (rendered camera frame plus a LIDAR scan) and
integrates the car until collision, centerline completion or timeout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .expert import PidGains, WallFollower
from .models import ModelSpec, image_to_input, predict_angles
from .nn import Model
from .pipeline import PipelineSpec
from .recorder import Dataset, bin_index
from .simworld import (CameraConfig, CameraFrame, CarState, Controls,
                       LidarScan, WorldMap, lidar_scan, render_camera, step,
                       wall_clearance)

COLLISION_MARGIN = 0.1
COMPLETION_MARGIN = 0.5


@dataclass
class TrajectoryLog:
    entries: list[tuple]            # (t, x, y, heading, steer)
    outcome: str                    # completed | collided | timeout

    def __post_init__(self):
        if not self.entries:
            raise ValueError("trajectory must be non-empty")
        ts = [e[0] for e in self.entries]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def duration(self) -> float:
        return self.entries[-1][0] - self.entries[0][0]

    def xy(self) -> np.ndarray:
        return np.array([(e[1], e[2]) for e in self.entries])


@dataclass
class EvalReport:
    mean_cte: float = float("nan")
    max_cte: float = float("nan")
    completion: float = float("nan")
    collisions: int = 0
    accuracy: float = float("nan")
    confusion: list | None = None
    pred_entropy: float = float("nan")
    straight_fraction: float = float("nan")
    outcome: str = ""
    lap_time: float = float("nan")

    def to_json(self) -> str:
        d = {k: (None if isinstance(v, float) and math.isnan(v) else v)
             for k, v in self.__dict__.items()}
        return json.dumps(d, indent=2)


@dataclass
class Observation:
    frame: CameraFrame
    scan: LidarScan
    state: CarState


class ConstantPolicy:
    def __init__(self, steer: float = 0.0):
        self.steer = steer

    def reset(self):
        pass

    def act(self, obs: Observation) -> float:
        return self.steer


class PidPolicy:
    """Wall-following expert wired in as a rollout policy."""

    def __init__(self, gains: PidGains, setpoint: float, side: str = "right",
                 dt: float = 0.05):
        self.follower = WallFollower(gains=gains, setpoint=setpoint, side=side,
                                     dt=dt)

    def reset(self):
        self.follower.reset()

    def act(self, obs: Observation) -> float:
        return self.follower.steer(obs.scan)


class ModelPolicy:
    """Trained network: camera frame -> pipeline -> model -> steer."""

    def __init__(self, model: Model, spec: ModelSpec,
                 pipeline: PipelineSpec | None = None, decode: str = "argmax",
                 seed: int = 0):
        self.model, self.spec = model, spec
        self.pipeline = pipeline
        self.decode = decode
        self.seed = seed

    def reset(self):
        pass

    def _preprocess(self, rgb: np.ndarray) -> np.ndarray:
        if self.pipeline is not None:
            rgb, _ = self.pipeline.apply_image(rgb, 0.0, sample_id=0,
                                               seed=self.seed)
        return image_to_input(rgb)

    def act(self, obs: Observation) -> float:
        x = self._preprocess(obs.frame.rgb)[None]
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise ValueError(f"pipeline output {tuple(x.shape[1:])} does not "
                             f"match model input {self.spec.input_shape}")
        return float(predict_angles(self.model, self.spec, x, self.decode)[0])


class SequencePolicy(ModelPolicy):
    """Encoder + GRU head over the last seq_len frames."""

    def __init__(self, encoder: Model, gru: Model, spec: ModelSpec,
                 pipeline: PipelineSpec | None = None, decode: str = "argmax",
                 seed: int = 0):
        super().__init__(gru, spec, pipeline, decode, seed)
        self.encoder = encoder
        self.seq_len = spec.input_shape[0]
        self._buffer: list[np.ndarray] = []

    def reset(self):
        self._buffer = []

    def act(self, obs: Observation) -> float:
        x = self._preprocess(obs.frame.rgb)[None]
        emb = self.encoder.forward(x)[0]
        self._buffer.append(emb)
        if len(self._buffer) > self.seq_len:
            self._buffer.pop(0)
        while len(self._buffer) < self.seq_len:
            self._buffer.insert(0, self._buffer[0])
        seq = np.stack(self._buffer)[None]
        return float(predict_angles(self.model, self.spec, seq, self.decode)[0])


def _arc_lengths(centerline: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(centerline, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _nearest_arc(centerline: np.ndarray, arcs: np.ndarray,
                 point: np.ndarray) -> tuple[float, float]:
    """(arc length of nearest centerline point, distance to it)."""
    p1, p2 = centerline[:-1], centerline[1:]
    seg = p2 - p1
    seg_len2 = np.maximum((seg ** 2).sum(axis=1), 1e-300)
    u = np.clip(((point - p1) * seg).sum(axis=1) / seg_len2, 0.0, 1.0)
    proj = p1 + u[:, None] * seg
    d = np.linalg.norm(point - proj, axis=1)
    i = int(np.argmin(d))
    return float(arcs[i] + u[i] * math.sqrt(seg_len2[i])), float(d[i])


def rollout(policy, world: WorldMap, start: tuple | None = None,
            speed: float = 0.8, dt: float = 0.05, max_t: float = 120.0,
            camera: CameraConfig | None = None, n_beams: int = 181,
            max_range: float = 10.0) -> TrajectoryLog:
    """Drive the policy in the world until collision, completion or timeout.

    Completion is tracked as accumulated progress along the centerline:
    closed centerlines (loops) complete after one full lap, open ones when the
    car reaches the far end.
    """
    camera = camera or CameraConfig()
    x0, y0, th0 = start if start is not None else world.start_pose
    state = CarState(x=x0, y=y0, heading=th0, speed=speed)
    policy.reset()

    center = world.centerline
    arcs = _arc_lengths(center)
    total = float(arcs[-1])
    closed = bool(np.allclose(center[0], center[-1]))
    start_arc, _ = _nearest_arc(center, arcs, np.array([x0, y0]))
    prev_arc = start_arc
    progress = 0.0
    goal = total if closed else total - start_arc - COMPLETION_MARGIN

    entries = []
    outcome = "timeout"
    t = 0.0
    n_steps = int(round(max_t / dt))
    for _ in range(n_steps):
        frame = render_camera(world, state, camera, timestamp=t)
        scan = lidar_scan(world, state, n_beams=n_beams, fov=1.5 * math.pi,
                          max_range=max_range, timestamp=t)
        steer = float(np.clip(policy.act(Observation(frame, scan, state)),
                              -1.0, 1.0))
        entries.append((t, state.x, state.y, state.heading, steer))
        state = step(state, Controls(steer=steer, speed=speed), dt)
        t += dt

        if wall_clearance(world, state.x, state.y) <= COLLISION_MARGIN:
            entries.append((t, state.x, state.y, state.heading, steer))
            outcome = "collided"
            break
        arc, _ = _nearest_arc(center, arcs, np.array([state.x, state.y]))
        delta = arc - prev_arc
        if closed:
            delta = (delta + total / 2.0) % total - total / 2.0
        prev_arc = arc
        progress += delta
        if progress >= goal:
            entries.append((t, state.x, state.y, state.heading, steer))
            outcome = "completed"
            break
    return TrajectoryLog(entries=entries, outcome=outcome)


def cross_track_error(traj: TrajectoryLog,
                      centerline: np.ndarray) -> tuple[float, float]:
    """(mean, max) distance from trajectory points to the centerline."""
    center = np.asarray(centerline, dtype=np.float64)
    arcs = _arc_lengths(center)
    dists = [_nearest_arc(center, arcs, p)[1] for p in traj.xy()]
    return float(np.mean(dists)), float(np.max(dists))


def completion_fraction(traj: TrajectoryLog, world: WorldMap) -> float:
    """Share of the centerline covered, by unwrapped arc-length progress."""
    center = world.centerline
    arcs = _arc_lengths(center)
    total = float(arcs[-1])
    closed = bool(np.allclose(center[0], center[-1]))
    xy = traj.xy()
    start_arc, _ = _nearest_arc(center, arcs, xy[0])
    goal = total if closed else max(total - start_arc - COMPLETION_MARGIN, 1e-9)
    prev = start_arc
    progress = 0.0
    for p in xy[1:]:
        arc, _ = _nearest_arc(center, arcs, p)
        delta = arc - prev
        if closed:
            delta = (delta + total / 2.0) % total - total / 2.0
        prev = arc
        progress += delta
    return float(min(max(progress / goal, 0.0), 1.0))


def offline_metrics(model: Model, spec: ModelSpec, dataset: Dataset,
                    pipeline: PipelineSpec | None = None,
                    seed: int = 0) -> EvalReport:
    """Accuracy, confusion matrix, argmax-distribution entropy and
    straight-fraction of a classifier over a dataset."""
    n_bins = spec.n_bins
    xs, targets = [], []
    for s in dataset.samples:
        rgb = s.rgb
        if pipeline is not None:
            rgb, _ = pipeline.apply_image(rgb, s.angle, sample_id=s.id, seed=seed)
        xs.append(image_to_input(rgb))
        targets.append(bin_index(s.angle, n_bins))
    x = np.stack(xs)
    targets = np.array(targets)
    out = model.forward(x)
    preds = out.argmax(axis=1)

    confusion = np.zeros((n_bins, n_bins), dtype=np.int64)
    for tgt, prd in zip(targets, preds):
        confusion[tgt, prd] += 1
    counts = np.bincount(preds, minlength=n_bins).astype(np.float64)
    dist = counts / counts.sum()
    nz = dist > 0
    entropy = float(-(dist[nz] * np.log(dist[nz])).sum()) + 0.0
    straight = bin_index(0.0, n_bins)
    return EvalReport(
        accuracy=float((preds == targets).mean()),
        confusion=confusion.tolist(),
        pred_entropy=entropy,
        straight_fraction=float((preds == straight).mean()),
    )


def export_overlay(expert: TrajectoryLog, model: TrajectoryLog, path,
                   world: WorldMap | None = None) -> None:
    """Write <path>.csv with both trajectories and <path>.svg with the expert
    stroked green, the model blue and the walls gray."""
    from pathlib import Path

    path = Path(path)
    if not expert.entries or not model.entries:
        raise ValueError("empty trajectory log")
    rows = ["series,t,x,y,heading,steer"]
    for name, log in (("expert", expert), ("model", model)):
        for t, x, y, heading, steer in log.entries:
            rows.append(f"{name},{t:.3f},{x:.4f},{y:.4f},{heading:.4f},{steer:.4f}")
    path.with_suffix(".csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    path.with_suffix(".svg").write_text(overlay_svg(expert, model, world),
                                        encoding="utf-8")


def overlay_svg(expert: TrajectoryLog, model: TrajectoryLog,
                world: WorldMap | None = None) -> str:
    pts = np.vstack([expert.xy(), model.xy()])
    if world is not None:
        xmin, ymin, xmax, ymax = world.bounds()
    else:
        xmin, ymin = pts.min(axis=0)
        xmax, ymax = pts.max(axis=0)
    span = max(xmax - xmin, ymax - ymin, 1e-9)
    margin = 0.05 * span
    # y is flipped so north is up in the plot
    def sx(x):
        return x - xmin + margin

    def sy(y):
        return (ymax - y) + margin

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'viewBox="0 0 {xmax - xmin + 2 * margin:.3f} '
             f'{ymax - ymin + 2 * margin:.3f}">']
    if world is not None:
        for p1, p2 in zip(world.walls_p1, world.walls_p2):
            parts.append(f'<line x1="{sx(p1[0]):.3f}" y1="{sy(p1[1]):.3f}" '
                         f'x2="{sx(p2[0]):.3f}" y2="{sy(p2[1]):.3f}" '
                         f'stroke="gray" stroke-width="0.05"/>')
    for log, color in ((expert, "green"), (model, "blue")):
        coords = " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in log.xy())
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="0.05"/>')
    parts.append("</svg>")
    return "\n".join(parts)
