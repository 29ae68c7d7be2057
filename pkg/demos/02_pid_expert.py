"""Tune the wall-following PID with Ziegler-Nichols and drive a lap.

The tuning sweeps proportional-only gains on the straight corridor until the
distance error oscillates sustainedly, derives the classic gain table, then
drives the rectangle loop and exports the trajectory.

Run:  python demos/02_pid_expert.py
"""

from pathlib import Path

from hallpilot import maps
from hallpilot.evalloop import PidPolicy, cross_track_error, export_overlay, rollout
from hallpilot.expert import corridor_plant, zn_tune
from hallpilot.simworld import CameraConfig

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

straight = maps.get_map("straight")
plant = corridor_plant(straight, setpoint=1.0)
result = zn_tune(plant, [1.0, 1.5, 2.0, 2.5, 3.0])
print(f"ultimate gain ku={result.ku:.3f}, period tu={result.tu:.3f} s")
print(f"gains: kp={result.gains.kp:.4f} ki={result.gains.ki:.4f} "
      f"kd={result.gains.kd:.4f}")

loop = maps.get_map("rect_loop")
policy = PidPolicy(result.gains, setpoint=1.5, side="right", dt=0.05)
traj = rollout(policy, loop, speed=0.8, dt=0.05, max_t=120.0,
               camera=CameraConfig(width=32, height=24))
mean_cte, max_cte = cross_track_error(traj, loop.centerline)
print(f"lap: {traj.outcome} in {traj.duration:.1f} s, "
      f"cross-track error mean {mean_cte:.2f} m / max {max_cte:.2f} m")

export_overlay(traj, traj, OUT / "pid_lap", world=loop)
print(f"trajectory plot -> {OUT}/pid_lap.svg")
