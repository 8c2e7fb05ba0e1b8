"""Desk-scale environments: a 1-D tank and a 2-D point mass on a plate.

Both are deterministic given a reset seed, integrate with a fixed 45 ms
control period, and expose the same small interface the trainer expects:

    reset(seed) -> state dict      step(action) -> state dict
    schema / action_low / action_high / max_steps

Dynamics constants were chosen so a hand-written proportional controller
solves each task comfortably.
"""

from __future__ import annotations

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)

DT = 0.045  # 45 ms control period


class TankEnv:
    """Tank with a controllable inflow and a constant drain.

    State: fill level in [0, 1] and the episode's setpoint in [0.05, 0.95].
    Action: inflow command in [0, 1]. The level moves by
    (fill_gain * action - drain) per step and clamps to [0, 1]; hitting 1
    raises the overflow flag.
    """

    fill_gain = 0.05
    drain = 0.02

    schema = (("level", 0.0, 1.0), ("setpoint", 0.05, 0.95))
    action_low = (0.0,)
    action_high = (1.0,)
    max_steps = 90

    def __init__(self):
        self.level = 0.5
        self.setpoint = 0.5
        self.overflowed = False

    def reset(self, seed: int) -> dict[str, float]:
        rng = np.random.default_rng(seed)
        self.level = float(rng.uniform(0.1, 0.9))
        self.setpoint = float(rng.uniform(0.05, 0.95))
        self.overflowed = False
        return self.state()

    def state(self) -> dict[str, float]:
        return {"level": self.level, "setpoint": self.setpoint}

    def step(self, action) -> dict[str, float]:
        a = float(np.atleast_1d(action)[0])
        if a < 0.0 or a > 1.0:
            logger.warning("tank action %.4f outside [0, 1]; clamping", a)
            a = min(1.0, max(0.0, a))
        self.level += self.fill_gain * a - self.drain
        if self.level >= 1.0:
            self.overflowed = True
        self.level = min(1.0, max(0.0, self.level))
        return self.state()


class PlateEnv:
    """Ball on a tiltable plate of radius 0.1125 m.

    State: ball position (x, y) in meters and velocity (vx, vy) in m/s.
    Action: plate tilt (pitch, roll) in [-0.2, 0.2] rad. Acceleration is
    g * tilt minus viscous friction, integrated with semi-implicit Euler.
    The fall-off flag raises once the ball leaves the plate disk.
    """

    radius = 0.1125
    gravity = 9.81
    friction = 1.5
    tilt_max = 0.2

    schema = (
        ("x", -0.1125, 0.1125),
        ("y", -0.1125, 0.1125),
        ("vx", -0.5, 0.5),
        ("vy", -0.5, 0.5),
    )
    action_low = (-0.2, -0.2)
    action_high = (0.2, 0.2)
    max_steps = 150

    def __init__(self):
        self.x = self.y = 0.0
        self.vx = self.vy = 0.0

    def reset(self, seed: int) -> dict[str, float]:
        rng = np.random.default_rng(seed)
        # Uniform over the inner 60% disk, with a small random velocity.
        r = 0.6 * self.radius * math.sqrt(float(rng.uniform()))
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        self.x = r * math.cos(angle)
        self.y = r * math.sin(angle)
        self.vx = float(rng.uniform(-0.02, 0.02))
        self.vy = float(rng.uniform(-0.02, 0.02))
        return self.state()

    def state(self) -> dict[str, float]:
        return {"x": self.x, "y": self.y, "vx": self.vx, "vy": self.vy}

    @property
    def fell_off(self) -> bool:
        return math.hypot(self.x, self.y) > self.radius

    def step(self, action) -> dict[str, float]:
        a = np.atleast_1d(np.asarray(action, dtype=float))
        pitch, roll = float(a[0]), float(a[1])
        if abs(pitch) > self.tilt_max or abs(roll) > self.tilt_max:
            logger.warning("plate tilt (%.4f, %.4f) outside bounds; clamping", pitch, roll)
            pitch = min(self.tilt_max, max(-self.tilt_max, pitch))
            roll = min(self.tilt_max, max(-self.tilt_max, roll))
        ax = self.gravity * pitch - self.friction * self.vx
        ay = self.gravity * roll - self.friction * self.vy
        self.vx += ax * DT
        self.vy += ay * DT
        self.x += self.vx * DT
        self.y += self.vy * DT
        return self.state()


ENVIRONMENTS = {"tank": TankEnv, "plate": PlateEnv}


def make_env(name: str):
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown environment '{name}'; choose from {sorted(ENVIRONMENTS)}") from None


def env_schema(name: str) -> tuple[tuple[str, float, float], ...]:
    return ENVIRONMENTS[name].schema
