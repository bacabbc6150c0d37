"""Longitudinal point-mass vehicle model and its plant module.

The plant integrates the gated actuation command at a fixed raster and
publishes ground truth. Lateral dynamics are reduced to a scripted offset
channel: scenarios ramp the offset to exercise the lateral safety rule
without modeling tire physics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from pitwall.bus import SimBus, SimTime, StampedEnvelope, TopicSpec, ms
from pitwall.gate import ActuationCommand
from pitwall.harness.messages import VehicleState
from pitwall.params import ParamStore

TRUTH_TOPIC = "/vehicle/truth"
FINAL_ACTUATION_TOPIC = "/vehicle/actuation"

PLANT_PERIOD = ms(10)


class PlantError(Exception):
    pass


class InvalidDtError(PlantError):
    pass


@dataclass(frozen=True)
class PlantParams:
    mass_kg: float = 800.0
    brake_gain_n_per_bar: float = 250.0
    max_drive_force_n: float = 8000.0
    drag_n_per_mps2: float = 1.2  # aerodynamic drag coefficient (N per (m/s)^2)


def vehicle_step(state: VehicleState, actuation: ActuationCommand, dt: SimTime,
                 params: PlantParams = PlantParams()) -> VehicleState:
    """One integration step; trapezoidal in position so constant-deceleration
    maneuvers integrate essentially exactly."""
    if dt <= 0:
        raise InvalidDtError(f"dt must be positive, got {dt}")
    dt_s = dt / 1e9
    throttle = min(max(actuation.throttle, 0.0), 1.0)
    brake = max(actuation.brake_pressure, 0.0)
    force = (throttle * params.max_drive_force_n
             - params.brake_gain_n_per_bar * brake
             - params.drag_n_per_mps2 * state.speed * state.speed)
    accel = force / params.mass_kg
    new_speed = max(0.0, state.speed + accel * dt_s)
    position = state.position_s + 0.5 * (state.speed + new_speed) * dt_s
    return VehicleState(
        position_s=position,
        lateral_offset=state.lateral_offset,
        speed=new_speed,
        brake_pressure_applied=brake,
        throttle_applied=throttle,
        stamp=state.stamp + dt,
    )


class VehiclePlant:
    """Bus-facing plant: consumes the final actuation, publishes truth.

    Deliberately not a module-kit module; it is the simulated world, not a
    piece of the software stack, and never appears in diagnostics.
    """

    def __init__(self, bus: SimBus, params: ParamStore, initial_speed: float = 0.0,
                 owner: str = "vehicle"):
        self.bus = bus
        self._view = params.scoped("vehicle")
        self._view.declare("mass_kg", 800.0)
        self._view.declare("brake_gain_n_per_bar", 250.0)
        self._view.declare("max_drive_force_n", 8000.0)
        self._view.declare("drag_n_per_mps2", 1.2)
        self.state = VehicleState(0.0, 0.0, initial_speed, 0.0, 0.0, stamp=0)
        self._actuation = ActuationCommand(0.0, 0.0, 0.0, 0, 0)
        self._lateral_target = 0.0
        self._lateral_rate = 0.0  # m per ns while ramping
        if not bus.has_topic(TRUTH_TOPIC):
            bus.register_topic(TopicSpec(TRUTH_TOPIC, VehicleState, nominal_period=PLANT_PERIOD))
        if not bus.has_topic(FINAL_ACTUATION_TOPIC):
            bus.register_topic(TopicSpec(FINAL_ACTUATION_TOPIC, ActuationCommand,
                                         nominal_period=ms(10)))
        self._truth_pub = bus.advertise(TRUTH_TOPIC, owner)
        bus.subscribe(FINAL_ACTUATION_TOPIC, self._on_actuation, owner)
        bus.schedule_timer(PLANT_PERIOD, self._tick, owner)

    def _params(self) -> PlantParams:
        return PlantParams(
            mass_kg=self._view.get("mass_kg"),
            brake_gain_n_per_bar=self._view.get("brake_gain_n_per_bar"),
            max_drive_force_n=self._view.get("max_drive_force_n"),
            drag_n_per_mps2=self._view.get("drag_n_per_mps2"),
        )

    def _on_actuation(self, envelope: StampedEnvelope) -> None:
        self._actuation = envelope.payload

    def command_lateral_offset(self, target: float, over: SimTime = 0) -> None:
        self._lateral_target = target
        if over <= 0:
            self.state = replace(self.state, lateral_offset=target)
            self._lateral_rate = 0.0
        else:
            self._lateral_rate = (target - self.state.lateral_offset) / over

    def _tick(self, now: SimTime) -> None:
        state = vehicle_step(self.state, self._actuation, PLANT_PERIOD, self._params())
        lateral = state.lateral_offset
        if self._lateral_rate != 0.0:
            step = self._lateral_rate * PLANT_PERIOD
            lateral = lateral + step
            done = (self._lateral_rate > 0 and lateral >= self._lateral_target) or \
                (self._lateral_rate < 0 and lateral <= self._lateral_target)
            if done:
                lateral = self._lateral_target
                self._lateral_rate = 0.0
        self.state = replace(state, lateral_offset=lateral, stamp=now)
        self._truth_pub.publish(self.state)

    @property
    def standstill(self) -> bool:
        return self.state.speed < 0.1
