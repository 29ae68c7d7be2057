"""PID wall-following expert and Ziegler-Nichols tuning.

The expert reads a LIDAR scan, measures distance to the wall on one side, and
steers to hold a setpoint distance. zn_tune finds the ultimate gain of a
closed-loop plant by sweeping proportional-only gains until the error
oscillation is sustained, then applies the classic Ziegler-Nichols table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .simworld import CarState, Controls, LidarScan, WorldMap, lidar_scan, step


@dataclass
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self):
        for v in (self.kp, self.ki, self.kd):
            if not math.isfinite(v):
                raise ValueError("gains must be finite")
        if self.kp < 0:
            raise ValueError(f"kp must be >= 0, got {self.kp}")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


@dataclass
class ZnResult:
    ku: float
    tu: float
    gains: PidGains


def pid_step(gains: PidGains, state: PidState, error: float,
             dt: float) -> tuple[PidState, float]:
    """One PID update; returns (new state, steer command in [-1, 1]).

    The derivative term is zero on the first call and the integral is clamped
    to +-1/max(ki, eps) as anti-windup.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    i_max = 1.0 / max(gains.ki, 1e-9)
    integral = min(max(state.integral + error * dt, -i_max), i_max)
    deriv = 0.0 if not state.initialized else (error - state.prev_error) / dt
    u = gains.kp * error + gains.ki * integral + gains.kd * deriv
    u = min(max(u, -1.0), 1.0)
    return PidState(integral=integral, prev_error=error, initialized=True), u


def wall_follow_error(scan: LidarScan, setpoint: float, side: str) -> float:
    """Signed distance error to the nearest wall in one side's 90-degree sector.

    The sign is folded in so that a positive-gain PID steers the car away from
    the followed wall when it is too close: right wall -> setpoint - distance,
    left wall -> distance - setpoint.
    """
    if len(scan.ranges) == 0:
        raise ValueError("empty scan")
    if side == "right":
        sector = (scan.angles >= -3 * math.pi / 4) & (scan.angles <= -math.pi / 4)
    elif side == "left":
        sector = (scan.angles >= math.pi / 4) & (scan.angles <= 3 * math.pi / 4)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    ranges = scan.ranges[sector]
    if len(ranges) == 0 or np.all(ranges >= scan.max_range):
        raise ValueError("no wall visible")
    dist = float(ranges.min())
    return setpoint - dist if side == "right" else dist - setpoint


@dataclass
class WallFollower:
    """Stateful controller: scan -> steer, for use as a simulation expert."""

    gains: PidGains
    setpoint: float
    side: str = "right"
    dt: float = 0.05
    smooth_alpha: float | None = None   # optional output low-pass, off by default
    pid: PidState = field(default_factory=PidState)
    _last_u: float = 0.0

    def steer(self, scan: LidarScan) -> float:
        error = wall_follow_error(scan, self.setpoint, self.side)
        self.pid, u = pid_step(self.gains, self.pid, error, self.dt)
        if self.smooth_alpha is not None:
            u = self.smooth_alpha * u + (1 - self.smooth_alpha) * self._last_u
        self._last_u = u
        return u

    def reset(self):
        self.pid = PidState()
        self._last_u = 0.0


def corridor_plant(world: WorldMap, setpoint: float, side: str = "right",
                   speed: float = 0.8, dt: float = 0.005, duration: float = 60.0,
                   lateral_offset: float = 0.1, n_beams: int = 181,
                   max_range: float = 10.0) -> Callable[[float], tuple[np.ndarray, np.ndarray]]:
    """Build a closed-loop runner: kp -> (times, wall-distance errors).

    The car starts at the map start pose shifted laterally by lateral_offset
    and runs proportional-only control for `duration` seconds.
    """
    x0, y0, th0 = world.start_pose

    def run(kp: float) -> tuple[np.ndarray, np.ndarray]:
        gains = PidGains(kp=kp)
        pid = PidState()
        state = CarState(x=x0 - lateral_offset * math.sin(th0),
                         y=y0 + lateral_offset * math.cos(th0),
                         heading=th0, speed=speed)
        n = int(round(duration / dt))
        times = np.empty(n)
        errors = np.empty(n)
        for i in range(n):
            scan = lidar_scan(world, state, n_beams=n_beams, fov=1.5 * math.pi,
                              max_range=max_range)
            e = wall_follow_error(scan, setpoint, side)
            pid, u = pid_step(gains, pid, e, dt)
            times[i] = i * dt
            errors[i] = e
            state = step(state, Controls(steer=u, speed=speed), dt)
        return times, errors

    return run


def _peaks(times: np.ndarray, errors: np.ndarray,
           floor: float) -> tuple[np.ndarray, np.ndarray]:
    """Times and values of strict local maxima of the error above a floor."""
    e = np.asarray(errors)
    mid = np.arange(1, len(e) - 1)
    is_peak = (e[mid] > e[mid - 1]) & (e[mid] >= e[mid + 1]) & (e[mid] > floor)
    idx = mid[is_peak]
    return times[idx], e[idx]


def zn_tune(closed_loop: Callable[[float], tuple[np.ndarray, np.ndarray]],
            kp_grid: list[float], amp_floor: float = 1e-3,
            sustain_tol: float = 0.10) -> ZnResult:
    """Sweep ascending kp values until P-only control oscillates sustainedly.

    Sustained means the last 5 error-peak amplitudes vary by less than
    sustain_tol relative to their mean. The ultimate gain ku is the first such
    kp and tu the mean peak-to-peak period; gains follow the classic table
    kp = 0.6 ku, ki = 1.2 ku / tu, kd = 0.075 ku tu.
    """
    kp_grid = list(kp_grid)
    if len(kp_grid) < 2:
        raise ValueError("kp_grid needs at least 2 entries")
    if any(b <= a for a, b in zip(kp_grid, kp_grid[1:])):
        raise ValueError("kp_grid must be ascending")
    for kp in kp_grid:
        times, errors = closed_loop(kp)
        pt, pv = _peaks(times, errors, amp_floor)
        if len(pv) < 5:
            continue
        last_t, last_v = pt[-5:], pv[-5:]
        mean = last_v.mean()
        if (last_v.max() - last_v.min()) / mean < sustain_tol:
            tu = float(np.diff(last_t).mean())
            ku = float(kp)
            gains = PidGains(kp=0.6 * ku, ki=1.2 * ku / tu, kd=0.075 * ku * tu)
            return ZnResult(ku=ku, tu=tu, gains=gains)
    raise ValueError("no ultimate gain found")
