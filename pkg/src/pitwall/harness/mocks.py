"""Mock algorithm cores for the simulated stack.

These are deliberately minimal: enough closed-loop behavior to drive the
vehicle model and exercise every safety path, with the real perception,
planning, and control research left out. Each core is middleware-free and
runs under the generic module wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional

from pitwall.bus import SimTime, ms
from pitwall.gate import ActuationCommand
from pitwall.harness.messages import Odometry, SensorSample, Trajectory, interpolate_speed
from pitwall.modules import Degraded, DiagnosticLevel
from pitwall.orchestration import DrivingConditions, SafetyAction


class SensorDriverCore:
    """Republishes vehicle truth as an inertial sensor sample."""

    def step(self, inputs, params) -> Optional[dict[str, Any]]:
        if not inputs.has("truth"):
            return None
        truth = inputs.latest("truth")
        return {"imu": SensorSample(truth.position_s, truth.lateral_offset,
                                    truth.speed, valid=True, stamp=inputs.now)}


class StateEstimationCore:
    """Passes sensor data through as odometry; declares itself STALE when the
    inertial input disappears, emitting one final sample marked invalid so
    consumers with their own validity checks react within a delivery."""

    def step(self, inputs, params) -> dict[str, Any] | Degraded:
        sample = inputs.latest("imu")
        if not inputs.valid("imu") or (sample is not None and not sample.valid):
            last = sample or SensorSample(0.0, 0.0, 0.0, valid=False)
            return Degraded(
                DiagnosticLevel.STALE, "all inertial inputs lost",
                outputs={"odometry": Odometry(last.position_s, last.lateral_offset,
                                              last.speed, valid=False, stamp=inputs.now)})
        return {"odometry": Odometry(sample.position_s, sample.lateral_offset,
                                     sample.speed, valid=True, stamp=inputs.now)}


class PlannerCore:
    """Publishes a performance and a matching emergency trajectory each cycle.

    The performance profile accelerates from the current state toward the
    cruise speed; the emergency profile decelerates to a standstill and is
    recomputed alongside every performance trajectory.
    """

    def __init__(self):
        self._next_id = 1

    def declare_params(self, view) -> None:
        view.declare("cruise_speed_mps", 30.0)
        view.declare("accel_mps2", 6.0)
        view.declare("emergency_decel_mps2", 10.0)
        view.declare("horizon_m", 600.0)

    def step(self, inputs, params) -> dict[str, Any] | Degraded:
        odo = inputs.latest("odometry")
        if not inputs.valid("odometry") or (odo is not None and not odo.valid):
            return Degraded(DiagnosticLevel.ERROR, "no valid odometry")
        cruise = params.get("cruise_speed_mps")
        accel = params.get("accel_mps2")
        decel = params.get("emergency_decel_mps2")
        horizon = params.get("horizon_m")
        perf = self._build(odo, "performance",
                           lambda d: min(cruise, math.sqrt(odo.speed ** 2 + 2 * accel * d)),
                           horizon, inputs.now)
        stop_distance = odo.speed ** 2 / (2 * decel)
        emergency = self._build(odo, "emergency",
                                lambda d: math.sqrt(max(0.0, odo.speed ** 2 - 2 * decel * d)),
                                max(stop_distance * 1.2, 10.0), inputs.now)
        return {"trajectory": perf, "emergency": emergency}

    def _build(self, odo: Odometry, kind: str, profile, horizon: float,
               now: SimTime) -> Trajectory:
        samples = 30
        points = [[odo.position_s + horizon * i / samples,
                   profile(horizon * i / samples)] for i in range(samples + 1)]
        if kind == "emergency":
            points[-1][1] = 0.0
        traj = Trajectory(kind, points, stamp=now, traj_id=self._next_id)
        self._next_id += 1
        return traj


@dataclass
class ControllerDebug:
    target: float = 0.0
    on_emergency: bool = False
    active_traj_id: int = 0


class ControllerCore:
    """Tracks the active trajectory with a proportional speed law.

    Keeps the last valid performance/emergency pair; switches to the stored
    emergency trajectory on trajectory timeout or an emergency-stop action
    and refuses every newly calculated trajectory until the vehicle stands
    still again. Invalid localization makes control impossible: the core
    declares STALE.
    """

    def __init__(self):
        self._perf: Optional[Trajectory] = None
        self._emergency: Optional[Trajectory] = None
        self.on_emergency = False
        self._sequence = 0
        self._signals = None
        self.debug = ControllerDebug()

    def declare_params(self, view) -> None:
        view.declare("speed_gain", 2.0)
        view.declare("accel_per_throttle", 10.0)  # plant F_max / mass
        view.declare("brake_bar_per_decel", 3.2)  # plant mass / brake gain
        view.declare("max_brake_bar", 35.0)
        view.declare("hold_brake_bar", 5.0)
        view.declare("lookahead_base_m", 5.0)
        view.declare("lookahead_time_s", 0.5)

    def bind_signals(self, group) -> None:
        self._signals = group

    def step(self, inputs, params) -> dict[str, Any] | Degraded | None:
        odo = inputs.latest("odometry")
        if not inputs.valid("odometry") or (odo is not None and not odo.valid):
            return Degraded(DiagnosticLevel.STALE,
                            "vehicle control impossible without valid localization")

        action = inputs.latest("action") if inputs.has("action") else None
        trajectory_fresh = inputs.valid("trajectory")

        if not self.on_emergency:
            if trajectory_fresh:
                self._perf = inputs.latest("trajectory")
            if inputs.valid("emergency"):
                self._emergency = inputs.latest("emergency")
            emergency_demanded = action is not None and action.use_emergency_trajectory
            if (not trajectory_fresh or emergency_demanded) and self._emergency is not None:
                self.on_emergency = True
        elif odo.speed < 0.1 and trajectory_fresh and \
                (action is None or not action.use_emergency_trajectory):
            self.on_emergency = False  # stood still: new trajectories acceptable again

        active = self._emergency if self.on_emergency else self._perf
        if active is None:
            return Degraded(DiagnosticLevel.WARN, "awaiting first trajectory")

        lookahead = params.get("lookahead_base_m") + params.get("lookahead_time_s") * odo.speed
        target = interpolate_speed(active.points, odo.position_s + lookahead)
        if not self.on_emergency and action is not None and action.speed_cap_mps is not None:
            target = min(target, action.speed_cap_mps)

        gain = params.get("speed_gain")
        accel = gain * (target - odo.speed)
        throttle = min(max(accel / params.get("accel_per_throttle"), 0.0), 1.0)
        brake = min(max(-accel * params.get("brake_bar_per_decel"), 0.0),
                    params.get("max_brake_bar"))
        if self.on_emergency and odo.speed < 0.1:
            throttle, brake = 0.0, params.get("hold_brake_bar")

        self._sequence += 1
        self.debug = ControllerDebug(target, self.on_emergency,
                                     active.traj_id)
        if self._signals is not None:
            self._signals.log([target, odo.speed, target - odo.speed, throttle, brake,
                               1.0 if self.on_emergency else 0.0, float(active.traj_id)])
        return {"actuation": ActuationCommand(throttle, brake, 0.0, inputs.now,
                                              self._sequence)}


CONTROLLER_SIGNALS = ("target_speed_mps", "speed_mps", "speed_err_mps",
                      "throttle_cmd", "brake_cmd_bar", "on_emergency", "active_traj_id")


class ConditionsMonitorCore:
    """Derives the driving conditions consumed by the safety rules.

    Tracking assessment compares the measured speed against the current
    performance target (capped by the active directive) and only fails when
    the deviation persists; it is suspended while an emergency action is
    already in force, and undefined localization counts as failed tracking.
    """

    def __init__(self):
        self._deviation_since: Optional[SimTime] = None

    def declare_params(self, view) -> None:
        view.declare("tracking_tolerance_mps", 5.0)
        view.declare("tracking_sustain_ms", 3000)

    def step(self, inputs, params) -> dict[str, Any]:
        now = inputs.now
        odo = inputs.latest("odometry") if inputs.has("odometry") else None
        localization_ok = inputs.valid("odometry") and odo is not None and odo.valid
        trajectory = inputs.latest("trajectory") if inputs.has("trajectory") else None
        trajectory_valid = inputs.valid("trajectory") and trajectory is not None \
            and len(trajectory.points) >= 2
        action = inputs.latest("action") if inputs.has("action") else None
        base = inputs.latest("basestation") if inputs.has("basestation") else None
        basestation_ok = base.ok if base is not None else True
        lateral = odo.lateral_offset if (odo is not None and localization_ok) else 0.0

        tracking_ok = self._tracking(odo, trajectory, action, localization_ok,
                                     trajectory_valid, now, params)
        return {"conditions": DrivingConditions(
            trajectory_valid=trajectory_valid,
            tracking_ok=tracking_ok,
            lateral_offset=lateral,
            localization_ok=localization_ok,
            basestation_link_ok=basestation_ok,
            stamp=now,
        )}

    def _tracking(self, odo, trajectory, action, localization_ok, trajectory_valid,
                  now, params) -> bool:
        if not localization_ok:
            return False  # assessment undefined without localization
        emergency_active = action is not None and \
            SafetyAction[action.action] >= SafetyAction.EMERGENCY_STOP
        if emergency_active or not trajectory_valid:
            self._deviation_since = None
            return True
        target = interpolate_speed(trajectory.points, odo.position_s)
        if action is not None and action.speed_cap_mps is not None:
            target = min(target, action.speed_cap_mps)
        if abs(odo.speed - target) < params.get("tracking_tolerance_mps"):
            self._deviation_since = None
            return True
        if self._deviation_since is None:
            self._deviation_since = now
        return now - self._deviation_since <= ms(params.get("tracking_sustain_ms"))


class RecorderCore:
    """Surfaces log-writer failures as an ERROR diagnostic; nothing else."""

    def __init__(self, recorder_ref=None):
        self.recorder_ref = recorder_ref

    def step(self, inputs, params) -> Optional[Degraded]:
        recorder = self.recorder_ref
        if recorder is not None and recorder.failed is not None:
            return Degraded(DiagnosticLevel.ERROR, f"log write failed: {recorder.failed}")
        return None
