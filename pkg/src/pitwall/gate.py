"""Vehicle gate: last-stage actuation arbitration, isolated from control.

The gate forwards autonomy commands while they are fresh, executes the hard
emergency (predefined brake pressure, straightened steering) on either a
direct instruction or an actuation-command timeout, and applies operator
intervention: a longitudinal override that cuts throttle and brakes, and a
full manual driving mode that may only be entered at standstill.

Mode dominance, strongest first: HardEmergency, ManualOverrideLongitudinal,
ManualDriving, Autonomous. The step path is infallible; malformed autonomy
commands are treated as absent and can only age into the timeout path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from pitwall.bus import SimTime, ms


class GateError(Exception):
    pass


class NotAtStandstillError(GateError):
    pass


class GateMode(Enum):
    AUTONOMOUS = "autonomous"
    HARD_EMERGENCY = "hard_emergency"
    MANUAL_OVERRIDE_LONGITUDINAL = "manual_override_longitudinal"
    MANUAL_DRIVING = "manual_driving"


@dataclass
class ActuationCommand:
    throttle: float  # [0, 1]
    brake_pressure: float  # bar, >= 0
    steering_angle: float  # rad
    stamp: SimTime
    sequence: int


@dataclass
class OperatorInput:
    throttle: float  # [0, 1]
    brake: float  # [0, 1]
    steering: float  # [-1, 1]
    override_active: bool
    stamp: SimTime


@dataclass
class GateCommandMsg:
    command: str  # "reset" | "manual_on" | "manual_off"


@dataclass
class GateReport:
    mode: str
    throttle: float
    brake_pressure: float
    steering_angle: float
    he_latched: bool
    stamp: SimTime


@dataclass(frozen=True)
class GateParams:
    emergency_brake_bar: float = 40.0
    actuation_timeout: SimTime = ms(50)
    operator_timeout: SimTime = ms(250)
    max_manual_brake_bar: float = 40.0
    max_brake_bar: float = 60.0
    max_steering_rad: float = 0.5
    standstill_mps: float = 0.1


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def _malformed(cmd: ActuationCommand) -> bool:
    return not (math.isfinite(cmd.throttle) and math.isfinite(cmd.brake_pressure)
                and math.isfinite(cmd.steering_angle))


class VehicleGate:
    """Pure arbitration logic; one instance per gate module.

    The hard-emergency latch survives until an explicit reset at standstill;
    a reset also disarms the actuation timeout until the next fresh command
    so a restarted stack can take over cleanly.
    """

    def __init__(self):
        self.he_latched = False
        self.he_reason = ""
        self.manual_mode = False
        self._timeout_armed = False
        self._sequence = 0

    def request_hard_emergency(self, reason: str) -> None:
        if not self.he_latched:
            self.he_latched = True
            self.he_reason = reason

    def reset_at_standstill(self, vehicle_speed: float,
                            params: GateParams = GateParams()) -> None:
        if vehicle_speed >= params.standstill_mps:
            raise NotAtStandstillError(f"speed {vehicle_speed:.2f} m/s")
        self.he_latched = False
        self.he_reason = ""
        self._timeout_armed = False

    def set_manual_mode(self, enable: bool, vehicle_speed: float,
                        params: GateParams = GateParams()) -> None:
        if enable:
            if vehicle_speed >= params.standstill_mps:
                raise NotAtStandstillError(f"speed {vehicle_speed:.2f} m/s")
            self.manual_mode = True
        else:
            self.manual_mode = False

    def step(self, autonomy_cmd: Optional[ActuationCommand],
             operator: Optional[OperatorInput], hard_emergency_request: bool,
             now: SimTime, params: GateParams = GateParams()) -> tuple[ActuationCommand, GateMode]:
        if autonomy_cmd is not None and _malformed(autonomy_cmd):
            autonomy_cmd = None
        if autonomy_cmd is not None:
            self._timeout_armed = True
        autonomy_stale = self._timeout_armed and (
            autonomy_cmd is None or now - autonomy_cmd.stamp > params.actuation_timeout)

        if hard_emergency_request:
            self.request_hard_emergency("state machine instruction")
        if autonomy_stale and not self.manual_mode:
            self.request_hard_emergency("actuation command timeout")

        if self.he_latched:
            return self._emit(0.0, params.emergency_brake_bar, 0.0, now,
                              params), GateMode.HARD_EMERGENCY

        operator_fresh = operator is not None and \
            now - operator.stamp <= params.operator_timeout
        if operator_fresh and operator.override_active:
            steering = 0.0
            if autonomy_cmd is not None and not autonomy_stale:
                steering = autonomy_cmd.steering_angle
            brake = _clamp(operator.brake, 0.0, 1.0) * params.max_manual_brake_bar
            return self._emit(0.0, brake, steering, now,
                              params), GateMode.MANUAL_OVERRIDE_LONGITUDINAL

        if self.manual_mode:
            if operator_fresh:
                return self._emit(
                    _clamp(operator.throttle, 0.0, 1.0),
                    _clamp(operator.brake, 0.0, 1.0) * params.max_manual_brake_bar,
                    _clamp(operator.steering, -1.0, 1.0) * params.max_steering_rad,
                    now, params), GateMode.MANUAL_DRIVING
            return self._emit(0.0, 0.0, 0.0, now, params), GateMode.MANUAL_DRIVING

        if autonomy_cmd is not None and not autonomy_stale:
            return self._emit(autonomy_cmd.throttle, autonomy_cmd.brake_pressure,
                              autonomy_cmd.steering_angle, now, params), GateMode.AUTONOMOUS
        # nothing received yet: hold neutral without arming the timeout
        return self._emit(0.0, 0.0, 0.0, now, params), GateMode.AUTONOMOUS

    def _emit(self, throttle: float, brake: float, steering: float, now: SimTime,
              params: GateParams) -> ActuationCommand:
        throttle = _clamp(throttle, 0.0, 1.0)
        brake = _clamp(brake, 0.0, params.max_brake_bar)
        steering = _clamp(steering, -params.max_steering_rad, params.max_steering_rad)
        if brake > 0.0:
            throttle = 0.0  # brake wins; throttle and brake never both act
        self._sequence += 1
        return ActuationCommand(throttle, brake, steering, now, self._sequence)


class GateCore:
    """Module-kit core running the gate on its own timer.

    Inputs (all optional bindings): ``autonomy`` actuation commands,
    ``operator`` inputs, the safety ``action``, and the ``vehicle`` state for
    standstill checks. Console commands arrive through handle_command() and
    are applied at the next cycle.
    """

    def __init__(self):
        self.gate = VehicleGate()
        self._pending: list[str] = []
        self.command_log: list[tuple[str, bool, str]] = []
        self.last_mode = GateMode.AUTONOMOUS

    def declare_params(self, view) -> None:
        view.declare("brake_pressure_bar", 40.0,
                     description="predefined hard-emergency brake pressure")
        view.declare("actuation_timeout_ms", 50)
        view.declare("operator_timeout_ms", 250)
        view.declare("max_manual_brake_bar", 40.0)
        view.declare("max_brake_bar", 60.0)
        view.declare("max_steering_rad", 0.5)
        view.declare("standstill_mps", 0.1)

    def handle_command(self, command: str) -> None:
        self._pending.append(command)

    def _params(self, view) -> GateParams:
        return GateParams(
            emergency_brake_bar=view.get("brake_pressure_bar"),
            actuation_timeout=ms(view.get("actuation_timeout_ms")),
            operator_timeout=ms(view.get("operator_timeout_ms")),
            max_manual_brake_bar=view.get("max_manual_brake_bar"),
            max_brake_bar=view.get("max_brake_bar"),
            max_steering_rad=view.get("max_steering_rad"),
            standstill_mps=view.get("standstill_mps"),
        )

    def step(self, inputs, params_view) -> dict[str, Any]:
        params = self._params(params_view)
        speed = inputs.latest("vehicle").speed if inputs.has("vehicle") else 0.0
        for command in self._pending:
            self._apply_command(command, speed, params)
        self._pending.clear()

        autonomy = inputs.latest("autonomy") if inputs.has("autonomy") else None
        operator = inputs.latest("operator") if inputs.has("operator") else None
        action = inputs.latest("action") if inputs.has("action") else None
        he_request = action is not None and action.action == "HARD_EMERGENCY"
        output, mode = self.gate.step(autonomy, operator, he_request, inputs.now, params)
        self.last_mode = mode
        report = GateReport(mode.value, output.throttle, output.brake_pressure,
                            output.steering_angle, self.gate.he_latched, inputs.now)
        return {"actuation": output, "report": report}

    def _apply_command(self, command: str, speed: float, params: GateParams) -> None:
        try:
            if command == "reset":
                self.gate.reset_at_standstill(speed, params)
            elif command == "manual_on":
                self.gate.set_manual_mode(True, speed, params)
            elif command == "manual_off":
                self.gate.set_manual_mode(False, speed, params)
            else:
                self.command_log.append((command, False, "unknown command"))
                return
        except NotAtStandstillError as exc:
            self.command_log.append((command, False, str(exc)))
            return
        self.command_log.append((command, True, ""))
