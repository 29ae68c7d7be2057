"""Tour of the simulated corridor world and its two sensors.

Renders an RGB-D frame and a LIDAR scan from the same pose and shows that the
camera's center column and the forward LIDAR beam measure the same distance.

Run:  python demos/01_world_and_sensors.py
Outputs land in demos/out/.
"""

import math
from pathlib import Path

from hallpilot import maps
from hallpilot.recorder import write_pgm16, write_ppm
from hallpilot.simworld import CameraConfig, CarState, lidar_scan, render_camera

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

world = maps.get_map("straight")
print(f"map 'straight': {world.n_walls} walls, "
      f"centerline {world.centerline[0]} -> {world.centerline[-1]}")

pose = CarState(x=3.0, y=1.2, heading=0.1, speed=0.0)
cfg = CameraConfig(width=321, height=240)

frame = render_camera(world, pose, cfg)
write_ppm(OUT / "corridor_view.ppm", frame.rgb)
write_pgm16(OUT / "corridor_depth.pgm", frame.depth)
print(f"rendered {frame.width}x{frame.height} frame -> {OUT}/corridor_view.ppm")

scan = lidar_scan(world, pose, n_beams=271, fov=1.5 * math.pi, max_range=10.0)
print(f"lidar: {len(scan.ranges)} beams, min range {scan.ranges.min():.3f} m, "
      f"forward beam {scan.ranges[135]:.3f} m")

center_depth = frame.depth[cfg.height // 2, cfg.width // 2]
print(f"camera center-column depth {center_depth:.6f} m "
      f"(matches the forward beam to 1e-6)")
