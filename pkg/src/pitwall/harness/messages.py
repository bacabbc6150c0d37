"""Message types exchanged by the simulated stack.

All fields are JSON-representable primitives so envelopes serialize
canonically for hashing, recording, and replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from pitwall.bus import SimTime


@dataclass
class VehicleState:
    position_s: float  # m along the reference line
    lateral_offset: float  # m
    speed: float  # m/s
    brake_pressure_applied: float  # bar
    throttle_applied: float  # [0, 1]
    stamp: SimTime = 0


@dataclass
class SensorSample:
    position_s: float
    lateral_offset: float
    speed: float
    valid: bool = True
    stamp: SimTime = 0


@dataclass
class Odometry:
    position_s: float
    lateral_offset: float
    speed: float
    valid: bool = True
    stamp: SimTime = 0


@dataclass
class Trajectory:
    kind: str  # "performance" | "emergency"
    points: list = field(default_factory=list)  # [s_m, speed_target_mps] pairs, ordered by s
    stamp: SimTime = 0
    traj_id: int = 0


@dataclass
class BasestationLinkMsg:
    ok: bool


def interpolate_speed(points: list, position_s: float) -> float:
    """Speed target at a position, linear between samples, clamped at ends."""
    if not points:
        return 0.0
    if position_s <= points[0][0]:
        return points[0][1]
    for (s0, v0), (s1, v1) in zip(points, points[1:]):
        if position_s <= s1:
            if s1 == s0:
                return v1
            ratio = (position_s - s0) / (s1 - s0)
            return v0 + ratio * (v1 - v0)
    return points[-1][1]
