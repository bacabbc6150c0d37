"""Safety orchestration: watchdog, state machine, and behavior arbitration.

The watchdog folds the asynchronous per-module diagnostics into one report
published every cycle, overwriting any module that went silent with STALE.
The state machine is a pure rule evaluation over that report, the current
driving conditions, and the arbitrated behavior request; it resolves to the
most severe triggered action within a single cycle and latches the two
emergency levels. Race-control flags are translated to behavior requests in
a swappable adapter so series-specific flag changes never touch the rules.

Severity order of the four actions: Nominal < SafeStop < EmergencyStop <
HardEmergency. A safe stop only zeroes the target speed; an emergency stop
switches the controller to its stored emergency trajectory; a hard
emergency is executed downstream by the vehicle gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from pitwall.bus import SimBus, SimTime, TopicSpec, ms
from pitwall.modules import DIAG_TOPIC, DiagnosticLevel, ModuleStatus

REPORT_TOPIC = "/orchestration/software_state"
ACTION_TOPIC = "/orchestration/action"
CONDITIONS_TOPIC = "/orchestration/conditions"
TEAM_BEHAVIOR_TOPIC = "/command/team_behavior"
RACE_FLAG_TOPIC = "/command/race_flag"

DEFAULT_CYCLE = ms(20)
DEFAULT_STATUS_TIMEOUT = ms(100)  # five heartbeats at the default rate
DEFAULT_LATERAL_THRESHOLD_M = 2.0
UNKNOWN_DETAIL = "no status received"


class OrchestrationError(Exception):
    pass


class UnknownModuleError(OrchestrationError):
    pass


class UnknownFlagError(OrchestrationError):
    pass


class SafetyAction(IntEnum):
    NOMINAL = 0
    SAFE_STOP = 1
    EMERGENCY_STOP = 2
    HARD_EMERGENCY = 3


class BehaviorRequest(Enum):
    NONE = "none"
    DRIVE_FAST = "drive_fast"
    DRIVE_SLOW = "drive_slow"
    PIT = "pit"
    STOP = "stop"


# more restrictive requests win arbitration
_RESTRICTIVENESS = {
    BehaviorRequest.NONE: 0,
    BehaviorRequest.DRIVE_FAST: 1,
    BehaviorRequest.DRIVE_SLOW: 2,
    BehaviorRequest.PIT: 3,
    BehaviorRequest.STOP: 4,
}


class RaceFlag(Enum):
    GREEN = "green"
    YELLOW = "yellow"
    RED = "red"
    CHECKERED = "checkered"
    PIT_ORDER = "pit_order"


_FLAG_TO_BEHAVIOR = {
    RaceFlag.GREEN: BehaviorRequest.DRIVE_FAST,
    RaceFlag.YELLOW: BehaviorRequest.DRIVE_SLOW,
    RaceFlag.RED: BehaviorRequest.STOP,
    RaceFlag.CHECKERED: BehaviorRequest.DRIVE_SLOW,
    RaceFlag.PIT_ORDER: BehaviorRequest.PIT,
}


def translate_race_flag(flag: RaceFlag | str) -> BehaviorRequest:
    if isinstance(flag, str):
        try:
            flag = RaceFlag(flag)
        except ValueError:
            raise UnknownFlagError(flag) from None
    return _FLAG_TO_BEHAVIOR[flag]


def arbitrate_behavior(team: BehaviorRequest, race_control: BehaviorRequest) -> BehaviorRequest:
    return team if _RESTRICTIVENESS[team] >= _RESTRICTIVENESS[race_control] else race_control


# ----------------------------------------------------------------------
# messages
# ----------------------------------------------------------------------

@dataclass
class SoftwareStateReport:
    cycle: int
    stamp: SimTime
    states: dict  # module id -> DiagnosticLevel name
    details: dict  # module id -> detail string


@dataclass
class DrivingConditions:
    trajectory_valid: bool = False
    tracking_ok: bool = False
    lateral_offset: float = 0.0
    localization_ok: bool = False
    basestation_link_ok: bool = True
    stamp: SimTime = 0


@dataclass
class SafetyActionMsg:
    action: str  # SafetyAction name
    reason: str
    speed_cap_mps: Optional[float]  # None: uncapped
    use_emergency_trajectory: bool
    stamp: SimTime

    def severity(self) -> SafetyAction:
        return SafetyAction[self.action]


@dataclass
class BehaviorRequestMsg:
    request: str  # BehaviorRequest value
    source: str  # "team" or "race_control"


@dataclass
class RaceFlagMsg:
    flag: str


# ----------------------------------------------------------------------
# watchdog
# ----------------------------------------------------------------------

class Watchdog:
    """Aggregates asynchronous module statuses into a cyclic report.

    Reception time, not the sender's stamp, decides staleness: a module
    that stops reporting gets overwritten with STALE once its last status
    is older than the timeout, and a module that never reported counts as
    STALE from the start (distinctly labeled in the details).
    """

    def __init__(self, modules: list[str], status_timeout: SimTime = DEFAULT_STATUS_TIMEOUT):
        self._modules = list(modules)
        self._timeout = status_timeout
        self._latest: dict[str, ModuleStatus] = {}
        self._received_at: dict[str, SimTime] = {}
        self._cycle = 0

    @property
    def modules(self) -> list[str]:
        return list(self._modules)

    def ingest(self, status: ModuleStatus, received_at: SimTime) -> None:
        if status.module_id not in self._modules:
            raise UnknownModuleError(status.module_id)
        self._latest[status.module_id] = status
        self._received_at[status.module_id] = received_at

    def cycle(self, now: SimTime) -> SoftwareStateReport:
        self._cycle += 1
        states: dict[str, str] = {}
        details: dict[str, str] = {}
        for module in self._modules:
            status = self._latest.get(module)
            if status is None:
                states[module] = DiagnosticLevel.STALE.name
                details[module] = UNKNOWN_DETAIL
            elif now - self._received_at[module] > self._timeout:
                states[module] = DiagnosticLevel.STALE.name
                details[module] = f"status timeout ({status.level} before silence)"
            else:
                states[module] = status.level
                details[module] = status.detail
        return SoftwareStateReport(self._cycle, now, states, details)


# ----------------------------------------------------------------------
# state machine
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SafetyConfig:
    critical_modules: frozenset[str] = frozenset({"control", "state_estimation"})
    lateral_threshold_m: float = DEFAULT_LATERAL_THRESHOLD_M
    slow_speed_mps: float = 15.0
    pit_speed_mps: float = 10.0


def evaluate_rules(levels: dict[str, DiagnosticLevel],
                   conditions: DrivingConditions,
                   behavior: BehaviorRequest,
                   config: SafetyConfig) -> tuple[SafetyAction, str]:
    """Single-cycle rule resolution: evaluate everything, take the most
    severe triggered action. Pure function, no latch state."""
    action = SafetyAction.NOMINAL
    reason = ""

    def trigger(candidate: SafetyAction, why: str) -> None:
        nonlocal action, reason
        if candidate > action:
            action = candidate
            reason = why

    for module, level in levels.items():
        if level < DiagnosticLevel.ERROR:
            continue
        if module in config.critical_modules:
            trigger(SafetyAction.HARD_EMERGENCY, f"critical module {module} {level.name}")
        else:
            trigger(SafetyAction.SAFE_STOP, f"module {module} {level.name}")
    if conditions.lateral_offset > config.lateral_threshold_m:
        trigger(SafetyAction.HARD_EMERGENCY,
                f"lateral offset {conditions.lateral_offset:.2f} m")
    if not conditions.localization_ok:
        trigger(SafetyAction.HARD_EMERGENCY, "localization failed")
    if not conditions.trajectory_valid:
        trigger(SafetyAction.EMERGENCY_STOP, "no valid trajectory")
    if not conditions.tracking_ok:
        trigger(SafetyAction.EMERGENCY_STOP, "tracking failure")
    if not conditions.basestation_link_ok:
        trigger(SafetyAction.SAFE_STOP, "basestation link lost")
    if behavior is BehaviorRequest.STOP:
        trigger(SafetyAction.SAFE_STOP, "stop requested")
    return action, reason


class SafetyStateMachine:
    """Latching wrapper around the pure rules.

    Driving starts disabled: until one cycle resolves fully nominal the
    output is a non-latching safe stop, which keeps a cold stack from
    latching a hard emergency before its data paths warm up. Once enabled,
    a hard emergency latches until an operator reset at standstill and an
    emergency stop holds until standstill.
    """

    def __init__(self, config: SafetyConfig = SafetyConfig()):
        self.config = config
        self.driving_enabled = False
        self.hard_latched = False
        self.hard_reason = ""
        self.em_latched = False
        self.em_reason = ""
        self.standstill = True

    def note_vehicle_speed(self, speed: float, standstill_threshold: float = 0.1) -> None:
        self.standstill = speed < standstill_threshold

    def request_reset(self) -> bool:
        """Operator reset; only honored at standstill."""
        if not self.standstill:
            return False
        self.hard_latched = False
        self.em_latched = False
        self.driving_enabled = False
        return True

    def step(self, report: SoftwareStateReport, conditions: DrivingConditions,
             behavior: BehaviorRequest, now: SimTime) -> SafetyActionMsg:
        levels = {module: DiagnosticLevel[name] for module, name in report.states.items()}
        raw, reason = evaluate_rules(levels, conditions, behavior, self.config)

        if not self.driving_enabled:
            if raw is SafetyAction.NOMINAL:
                self.driving_enabled = True
                return self._directive(SafetyAction.NOMINAL, "", behavior, now)
            return self._directive(SafetyAction.SAFE_STOP, f"startup: {reason}", behavior, now)

        if raw is SafetyAction.HARD_EMERGENCY and not self.hard_latched:
            self.hard_latched = True
            self.hard_reason = reason
        if self.hard_latched:
            return self._directive(SafetyAction.HARD_EMERGENCY, self.hard_reason, behavior, now)

        if raw is SafetyAction.EMERGENCY_STOP and not self.em_latched:
            self.em_latched = True
            self.em_reason = reason
        if self.em_latched:
            if self.standstill and raw < SafetyAction.EMERGENCY_STOP:
                self.em_latched = False
            else:
                return self._directive(SafetyAction.EMERGENCY_STOP, self.em_reason,
                                       behavior, now)
        return self._directive(raw, reason, behavior, now)

    def _directive(self, action: SafetyAction, reason: str,
                   behavior: BehaviorRequest, now: SimTime) -> SafetyActionMsg:
        if action is SafetyAction.NOMINAL:
            cap = {
                BehaviorRequest.NONE: 0.0,
                BehaviorRequest.DRIVE_FAST: None,
                BehaviorRequest.DRIVE_SLOW: self.config.slow_speed_mps,
                BehaviorRequest.PIT: self.config.pit_speed_mps,
                BehaviorRequest.STOP: 0.0,
            }[behavior]
        else:
            cap = 0.0
        return SafetyActionMsg(
            action=action.name,
            reason="" if action is SafetyAction.NOMINAL else reason,
            speed_cap_mps=cap,
            use_emergency_trajectory=action is SafetyAction.EMERGENCY_STOP,
            stamp=now,
        )


# ----------------------------------------------------------------------
# bus wiring
# ----------------------------------------------------------------------

@dataclass
class OrchestratorConfig:
    cycle_period: SimTime = DEFAULT_CYCLE
    status_timeout: SimTime = DEFAULT_STATUS_TIMEOUT
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    standstill_threshold: float = 0.1


class Orchestrator:
    """Watchdog plus state machine on a 20 ms cycle.

    Subscribes to the shared diagnostics topic, the driving-conditions
    topic, and both behavior sources; publishes the software state report
    and the safety action every cycle regardless of input activity.
    """

    def __init__(self, bus: SimBus, modules: list[str],
                 config: OrchestratorConfig = OrchestratorConfig(),
                 owner: str = "orchestration"):
        self.bus = bus
        self.config = config
        self.watchdog = Watchdog(modules, config.status_timeout)
        self.state_machine = SafetyStateMachine(config.safety)
        self.team_request = BehaviorRequest.NONE
        self.race_control_request = BehaviorRequest.NONE
        self.unknown_flags = 0
        self._conditions = DrivingConditions()
        self._owner = owner

        if not bus.has_topic(REPORT_TOPIC):
            bus.register_topic(TopicSpec(REPORT_TOPIC, SoftwareStateReport,
                                         nominal_period=config.cycle_period))
        if not bus.has_topic(ACTION_TOPIC):
            bus.register_topic(TopicSpec(ACTION_TOPIC, SafetyActionMsg,
                                         nominal_period=config.cycle_period))
        self._report_pub = bus.advertise(REPORT_TOPIC, owner)
        self._action_pub = bus.advertise(ACTION_TOPIC, owner)

        bus.subscribe(DIAG_TOPIC, self._on_status, owner, queue_depth=64)
        bus.subscribe(CONDITIONS_TOPIC, self._on_conditions, owner)
        bus.subscribe(TEAM_BEHAVIOR_TOPIC, self._on_team_behavior, owner)
        bus.subscribe(RACE_FLAG_TOPIC, self._on_race_flag, owner)
        bus.schedule_timer(config.cycle_period, self._cycle, owner)

        self.last_report: Optional[SoftwareStateReport] = None
        self.last_action: Optional[SafetyActionMsg] = None

    def _on_status(self, envelope) -> None:
        status: ModuleStatus = envelope.payload
        if status.module_id in self.watchdog.modules:
            self.watchdog.ingest(status, self.bus.now)

    def _on_conditions(self, envelope) -> None:
        self._conditions = envelope.payload

    def _on_team_behavior(self, envelope) -> None:
        msg: BehaviorRequestMsg = envelope.payload
        try:
            self.team_request = BehaviorRequest(msg.request)
        except ValueError:
            pass  # malformed team request: keep the previous one

    def _on_race_flag(self, envelope) -> None:
        msg: RaceFlagMsg = envelope.payload
        try:
            self.race_control_request = translate_race_flag(msg.flag)
        except UnknownFlagError:
            self.unknown_flags += 1  # previous request stays in force

    def note_vehicle_speed(self, speed: float) -> None:
        self.state_machine.note_vehicle_speed(speed, self.config.standstill_threshold)

    def request_reset(self) -> bool:
        return self.state_machine.request_reset()

    def behavior(self) -> BehaviorRequest:
        return arbitrate_behavior(self.team_request, self.race_control_request)

    def _cycle(self, now: SimTime) -> None:
        report = self.watchdog.cycle(now)
        self._report_pub.publish(report)
        action = self.state_machine.step(report, self._conditions, self.behavior(), now)
        self._action_pub.publish(action)
        self.last_report = report
        self.last_action = action
