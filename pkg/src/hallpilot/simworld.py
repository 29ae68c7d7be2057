"""2D corridor world: car kinematics, raycast LIDAR and a column-raycast RGB-D camera.

Everything here is a pure function of its inputs; rendering the same pose twice
gives bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Bicycle model constants, 1/10-scale-car geometry.
WHEELBASE = 0.33          # meters
MAX_WHEEL_ANGLE = 0.34    # radians at |steer| = 1

# Depth assigned to rays/rows that see nothing (open map edge, horizon rows).
FAR_DEPTH = 1000.0

_FREE_SPACE_MARGIN = 1e-6


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass
class WorldMap:
    """Wall-segment map with a reference centerline.

    walls_p1/walls_p2 are (N, 2) endpoint arrays, wall_colors is (N, 3) uint8,
    centerline is an ordered (M, 2) polyline used for cross-track metrics.
    """

    walls_p1: np.ndarray
    walls_p2: np.ndarray
    wall_colors: np.ndarray
    centerline: np.ndarray
    start_pose: tuple[float, float, float]
    name: str = "unnamed"

    def __post_init__(self):
        self.walls_p1 = np.asarray(self.walls_p1, dtype=np.float64).reshape(-1, 2)
        self.walls_p2 = np.asarray(self.walls_p2, dtype=np.float64).reshape(-1, 2)
        self.wall_colors = np.asarray(self.wall_colors, dtype=np.uint8).reshape(-1, 3)
        self.centerline = np.asarray(self.centerline, dtype=np.float64).reshape(-1, 2)
        if len(self.walls_p1) < 3:
            raise ValueError("no walls" if len(self.walls_p1) == 0 else
                             f"need at least 3 walls, got {len(self.walls_p1)}")
        lengths = np.linalg.norm(self.walls_p2 - self.walls_p1, axis=1)
        if np.any(lengths == 0.0):
            raise ValueError("zero-length wall")
        if len(self.centerline) < 2:
            raise ValueError("centerline needs at least 2 points")

    @property
    def n_walls(self) -> int:
        return len(self.walls_p1)

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) over all wall endpoints."""
        pts = np.vstack([self.walls_p1, self.walls_p2])
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())


@dataclass
class CarState:
    x: float
    y: float
    heading: float
    speed: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        self.heading = normalize_angle(self.heading)


@dataclass
class Controls:
    steer: float            # [-1, 1], positive steers left
    speed: float            # m/s

    def __post_init__(self):
        if abs(self.steer) > 1.0:
            raise ValueError(f"|steer| must be <= 1, got {self.steer}")
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")


@dataclass
class LidarScan:
    angles: np.ndarray      # radians, relative to heading
    ranges: np.ndarray      # meters
    max_range: float
    timestamp: float = 0.0

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.ranges = np.asarray(self.ranges, dtype=np.float64)
        if self.angles.shape != self.ranges.shape:
            raise ValueError("angles and ranges must have the same length")


@dataclass
class CameraConfig:
    width: int = 640
    height: int = 480
    hfov: float = math.pi / 2
    wall_height: float = 2.5
    cam_height: float = 0.3
    floor_color: tuple[int, int, int] = (70, 70, 76)
    ceiling_color: tuple[int, int, int] = (226, 226, 232)

    def __post_init__(self):
        if not (0.0 < self.hfov < math.pi):
            raise ValueError(f"hfov must be in (0, pi), got {self.hfov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera dimensions must be positive")

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(self.hfov / 2.0)


@dataclass
class CameraFrame:
    width: int
    height: int
    rgb: np.ndarray         # (H, W, 3) uint8
    depth: np.ndarray       # (H, W) float64, meters
    timestamp: float = 0.0


def load_world(text: str) -> WorldMap:
    """Parse the world file format.

    One record per line: ``W x1 y1 x2 y2 r g b`` (wall), ``C x y`` (centerline
    point), ``S x y theta`` (start pose); ``#`` starts a comment.
    """
    walls = []
    colors = []
    centerline = []
    start = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag, args = parts[0], parts[1:]
        try:
            vals = [float(v) for v in args]
        except ValueError:
            raise ValueError(f"line {lineno}: malformed number in {raw!r}") from None
        if tag == "W":
            if len(vals) != 7:
                raise ValueError(f"line {lineno}: wall record needs 7 fields")
            x1, y1, x2, y2, r, g, b = vals
            if x1 == x2 and y1 == y2:
                raise ValueError(f"line {lineno}: zero-length wall")
            walls.append([(x1, y1), (x2, y2)])
            colors.append((int(r), int(g), int(b)))
        elif tag == "C":
            if len(vals) != 2:
                raise ValueError(f"line {lineno}: centerline record needs 2 fields")
            centerline.append(vals)
        elif tag == "S":
            if len(vals) != 3:
                raise ValueError(f"line {lineno}: start record needs 3 fields")
            start = (vals[0], vals[1], vals[2])
        else:
            raise ValueError(f"line {lineno}: unknown record {tag!r}")
    if not walls:
        raise ValueError("no walls")
    if len(centerline) < 2:
        raise ValueError("centerline needs at least 2 points")
    if start is None:
        p0, p1 = centerline[0], centerline[1]
        start = (p0[0], p0[1], math.atan2(p1[1] - p0[1], p1[0] - p0[0]))
    p1s = np.array([w[0] for w in walls])
    p2s = np.array([w[1] for w in walls])
    return WorldMap(p1s, p2s, np.array(colors), np.array(centerline), start)


def step(state: CarState, controls: Controls, dt: float) -> CarState:
    """Advance the bicycle model by dt seconds.

    steer maps linearly to wheel angle: delta = steer * MAX_WHEEL_ANGLE.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    v = controls.speed
    delta = controls.steer * MAX_WHEEL_ANGLE
    x = state.x + v * math.cos(state.heading) * dt
    y = state.y + v * math.sin(state.heading) * dt
    heading = normalize_angle(state.heading + (v / WHEELBASE) * math.tan(delta) * dt)
    return CarState(x=x, y=y, heading=heading, speed=v)


def raycast(world: WorldMap, origin: tuple[float, float],
            directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cast unit-direction rays against all walls.

    directions is (B, 2). Returns (distances, wall_indices); distance is inf and
    index -1 where a ray hits nothing.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 2)
    a = world.walls_p1                      # (N, 2)
    seg = world.walls_p2 - world.walls_p1   # (N, 2)
    w = a[None, :, :] - o[None, None, :]    # (1, N, 2) broadcast over rays

    # Solve o + t*d = a + s*seg per (ray, wall) via 2D cross products.
    denom = d[:, None, 0] * seg[None, :, 1] - d[:, None, 1] * seg[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[:, :, 0] * seg[None, :, 1] - w[:, :, 1] * seg[None, :, 0]) / denom
        s = (w[:, :, 0] * d[:, None, 1] - w[:, :, 1] * d[:, None, 0]) / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    idx = np.argmin(t, axis=1)
    dist = t[np.arange(len(d)), idx]
    idx = np.where(np.isinf(dist), -1, idx)
    return dist, idx


def lidar_scan(world: WorldMap, state: CarState, n_beams: int = 271,
               fov: float = 1.5 * math.pi, max_range: float = 10.0,
               timestamp: float = 0.0) -> LidarScan:
    """Scan n_beams rays spread over fov, centered on the heading.

    Beam i sits at relative angle fov * (i/(n_beams-1) - 0.5); ranges clip to
    max_range when nothing nearer is hit.
    """
    if n_beams < 2:
        raise ValueError(f"n_beams must be >= 2, got {n_beams}")
    rel = fov * (np.arange(n_beams) / (n_beams - 1) - 0.5)
    ang = state.heading + rel
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    dist, _ = raycast(world, (state.x, state.y), dirs)
    ranges = np.minimum(dist, max_range)
    return LidarScan(angles=rel, ranges=ranges, max_range=max_range,
                     timestamp=timestamp)


def point_segment_distance(points: np.ndarray, p1: np.ndarray,
                           p2: np.ndarray) -> np.ndarray:
    """Distance from each point (P, 2) to each segment (N, 2)-(N, 2): (P, N)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    seg = p2 - p1                                        # (N, 2)
    seg_len2 = np.maximum(np.sum(seg * seg, axis=1), 1e-300)
    rel = points[:, None, :] - p1[None, :, :]            # (P, N, 2)
    u = np.clip(np.sum(rel * seg[None, :, :], axis=2) / seg_len2, 0.0, 1.0)
    proj = p1[None, :, :] + u[:, :, None] * seg[None, :, :]
    return np.linalg.norm(points[:, None, :] - proj, axis=2)


def wall_clearance(world: WorldMap, x: float, y: float) -> float:
    """Distance from a point to the nearest wall."""
    return float(point_segment_distance(np.array([[x, y]]), world.walls_p1,
                                        world.walls_p2).min())


def render_camera(world: WorldMap, state: CarState, cfg: CameraConfig,
                  timestamp: float = 0.0) -> CameraFrame:
    """Render one RGB-D frame with a per-column raycaster.

    Column rays follow a pinhole model with half-pixel centers: column c looks
    along relative angle atan((W/2 - c - 0.5) / f), so the image is exactly
    mirror-symmetric and, for odd widths, the middle column points straight
    ahead. Wall pixel spans come from the perpendicular distance d*cos(alpha)
    (no fisheye); the depth channel keeps the true euclidean ray distance for
    wall pixels and the flat-floor per-row distance elsewhere.
    """
    if wall_clearance(world, state.x, state.y) < _FREE_SPACE_MARGIN:
        raise ValueError("camera inside wall")
    W, H = cfg.width, cfg.height
    f = cfg.focal_px
    cols = np.arange(W)
    alpha = np.arctan((W / 2.0 - cols - 0.5) / f)        # + to the left
    ang = state.heading + alpha
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    dist, hit = raycast(world, (state.x, state.y), dirs)

    d_perp = dist * np.cos(alpha)
    above = cfg.wall_height - cfg.cam_height             # wall top over camera
    with np.errstate(divide="ignore"):
        r_top = H / 2.0 - f * above / d_perp
        r_bot = H / 2.0 + f * cfg.cam_height / d_perp
    nohit = hit < 0
    r_top = np.where(nohit, H / 2.0, r_top)
    r_bot = np.where(nohit, H / 2.0, r_bot)

    row_centers = np.arange(H)[:, None] + 0.5            # (H, 1)
    wall_mask = (row_centers >= r_top[None, :]) & (row_centers < r_bot[None, :])

    shade = 1.0 / (1.0 + np.where(np.isfinite(dist), dist, FAR_DEPTH))
    colors = world.wall_colors[np.maximum(hit, 0)].astype(np.float64)  # (W, 3)
    wall_rgb = np.clip(np.round(colors * shade[:, None]), 0, 255)

    rgb = np.empty((H, W, 3), dtype=np.uint8)
    ceiling = row_centers < H / 2.0                      # (H, 1)
    rgb[:, :] = np.where(ceiling[:, :, None],
                         np.array(cfg.ceiling_color, dtype=np.uint8),
                         np.array(cfg.floor_color, dtype=np.uint8))
    rgb[wall_mask] = np.broadcast_to(wall_rgb[None, :, :], (H, W, 3))[wall_mask]

    # Flat-floor / flat-ceiling per-row distance, then overlay wall hits.
    drop = row_centers - H / 2.0                         # (H, 1)
    with np.errstate(divide="ignore"):
        row_depth = np.where(drop > 0, cfg.cam_height * f / drop,
                             above * f / np.maximum(-drop, 1e-300))
    row_depth = np.minimum(row_depth, FAR_DEPTH)
    depth = np.broadcast_to(row_depth, (H, W)).copy()
    wall_depth = np.broadcast_to(np.where(np.isfinite(dist), dist, FAR_DEPTH)[None, :],
                                 (H, W))
    depth[wall_mask] = wall_depth[wall_mask]

    return CameraFrame(width=W, height=H, rgb=rgb, depth=depth,
                       timestamp=timestamp)
