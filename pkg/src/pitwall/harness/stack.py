"""Stack assembly from a wiring description.

The wiring file owns the topic table, the module list (core name, bindings,
timeouts, heartbeat, compute delay), the watchdog registry, and criticality
assignment. Module order in the file is load order, which also fixes the
deterministic ordering of same-instant timers: anything listed before the
orchestration entry reports into the same cycle, anything after it (the
gate) reacts to that cycle's outputs within the same instant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

from pitwall.bus import SimBus, TopicSpec, ms, us
from pitwall.gate import ActuationCommand, GateCommandMsg, GateCore, GateReport, OperatorInput
from pitwall.harness import mocks
from pitwall.harness.messages import (
    BasestationLinkMsg,
    Odometry,
    SensorSample,
    Trajectory,
    VehicleState,
)
from pitwall.harness.vehicle import FINAL_ACTUATION_TOPIC, TRUTH_TOPIC, VehiclePlant
from pitwall.modules import InputBinding, Module, ModuleConfig, OutputBinding, wrap
from pitwall.orchestration import (
    BehaviorRequestMsg,
    DrivingConditions,
    Orchestrator,
    OrchestratorConfig,
    RaceFlagMsg,
    SafetyActionMsg,
    SafetyConfig,
    SoftwareStateReport,
)
from pitwall.params import ParamStore
from pitwall.tsl import EnvelopeRecorder, LogWriter, SignalHub

GATE_STATE_TOPIC = "/gate/state"
OPERATOR_TOPIC = "/command/operator"
GATE_COMMAND_TOPIC = "/command/gate"
BASESTATION_TOPIC = "/command/basestation"

MESSAGE_TYPES: dict[str, type] = {
    "VehicleState": VehicleState,
    "SensorSample": SensorSample,
    "Odometry": Odometry,
    "Trajectory": Trajectory,
    "ActuationCommand": ActuationCommand,
    "OperatorInput": OperatorInput,
    "GateCommandMsg": GateCommandMsg,
    "GateReport": GateReport,
    "BasestationLinkMsg": BasestationLinkMsg,
    "BehaviorRequestMsg": BehaviorRequestMsg,
    "RaceFlagMsg": RaceFlagMsg,
    "DrivingConditions": DrivingConditions,
    "SafetyActionMsg": SafetyActionMsg,
    "SoftwareStateReport": SoftwareStateReport,
}

CORE_FACTORIES: dict[str, Any] = {
    "sensor_driver": mocks.SensorDriverCore,
    "state_estimation": mocks.StateEstimationCore,
    "planner": mocks.PlannerCore,
    "controller": mocks.ControllerCore,
    "conditions_monitor": mocks.ConditionsMonitorCore,
    "gate": GateCore,
    "recorder": mocks.RecorderCore,
}


class WiringError(Exception):
    pass


@dataclass
class Stack:
    bus: SimBus
    params: ParamStore
    plant: VehiclePlant
    hub: SignalHub
    modules: dict[str, Module]
    cores: dict[str, Any]
    orchestrator: Orchestrator
    recorder: Optional[EnvelopeRecorder] = None
    writer: Optional[LogWriter] = None
    wiring: dict = field(default_factory=dict)

    @property
    def gate_core(self) -> GateCore:
        return self.cores["gate"]


def load_wiring(name_or_path: str) -> dict:
    """Load a wiring description; bare names resolve to bundled files."""
    if "/" in name_or_path or name_or_path.endswith(".json"):
        with open(name_or_path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    ref = resources.files("pitwall.harness") / "wiring" / f"{name_or_path}.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def register_wiring_topics(bus: SimBus, wiring: dict) -> None:
    for spec in wiring.get("topics", []):
        type_name = spec["type"]
        if type_name not in MESSAGE_TYPES:
            raise WiringError(f"unknown message type {type_name}")
        period = ms(spec["period_ms"]) if "period_ms" in spec else None
        bus.register_topic(TopicSpec(spec["name"], MESSAGE_TYPES[type_name],
                                     nominal_period=period,
                                     queue_depth=spec.get("depth", 1)))


def register_consumer_topics(bus: SimBus, wiring: dict) -> None:
    """Everything a stack run records, for consumer-only replay buses:
    the wiring topics plus those the plant, diagnostics, and signal hub
    register implicitly."""
    from pitwall.modules import DIAG_TOPIC, DIAG_QUEUE_DEPTH, ModuleStatus
    from pitwall.tsl import (FRAME_TOPIC, LOG_QUEUE_DEPTH, SCHEMA_TOPIC,
                             SignalFrameMsg, SignalSchemaMsg)

    register_wiring_topics(bus, wiring)
    bus.register_topic(TopicSpec(TRUTH_TOPIC, VehicleState, nominal_period=ms(10)))
    bus.register_topic(TopicSpec(FINAL_ACTUATION_TOPIC, ActuationCommand,
                                 nominal_period=ms(10)))
    bus.register_topic(TopicSpec(DIAG_TOPIC, ModuleStatus, queue_depth=DIAG_QUEUE_DEPTH))
    bus.register_topic(TopicSpec(SCHEMA_TOPIC, SignalSchemaMsg, queue_depth=LOG_QUEUE_DEPTH))
    bus.register_topic(TopicSpec(FRAME_TOPIC, SignalFrameMsg, queue_depth=LOG_QUEUE_DEPTH))


def build_stack(wiring: dict | str = "stack_default", seed: int = 0, paced: bool = False,
                initial_speed: float = 0.0, log_path=None) -> Stack:
    if isinstance(wiring, str):
        wiring = load_wiring(wiring)

    bus = SimBus(seed=seed, paced=paced)
    params = ParamStore()
    register_wiring_topics(bus, wiring)

    hub = SignalHub(bus)
    plant = VehiclePlant(bus, params, initial_speed=initial_speed)

    modules: dict[str, Module] = {}
    cores: dict[str, Any] = {}
    orchestrator: Optional[Orchestrator] = None
    module_ids = [entry["id"] for entry in wiring.get("modules", [])
                  if entry.get("core") != "orchestration"]

    for entry in wiring.get("modules", []):
        if entry.get("core") == "orchestration":
            orchestrator = _build_orchestrator(bus, entry, wiring, module_ids)
            continue
        config, core = _build_module_parts(entry)
        modules[config.module_id] = wrap(bus, core, config, params, hub)
        cores[config.module_id] = core

    if orchestrator is None:
        raise WiringError("wiring must contain an orchestration entry")

    _wire_glue(bus, orchestrator, cores)

    recorder = None
    writer = None
    if log_path is not None:
        writer = LogWriter(log_path)
        for schema in hub.schemas:  # announced before the recorder attached
            writer.write_schema(schema)
        record = wiring.get("record", "all")
        topics = bus.topic_names() if record == "all" else list(record)
        recorder = EnvelopeRecorder(bus, topics, writer)
        if "recorder" in cores:
            cores["recorder"].recorder_ref = recorder

    return Stack(bus, params, plant, hub, modules, cores, orchestrator,
                 recorder, writer, wiring)


def _build_module_parts(entry: dict) -> tuple[ModuleConfig, Any]:
    core_name = entry["core"]
    if core_name not in CORE_FACTORIES:
        raise WiringError(f"unknown core {core_name}")
    core = CORE_FACTORIES[core_name]()
    inputs = tuple(
        InputBinding(
            name=binding["name"],
            topic=binding["topic"],
            required=binding.get("required", True),
            timeout=ms(binding["timeout_ms"]) if "timeout_ms" in binding else None,
            step_on_expiry=binding.get("step_on_expiry", False),
        )
        for binding in entry.get("inputs", [])
    )
    outputs = tuple(OutputBinding(b["name"], b["topic"]) for b in entry.get("outputs", []))
    trigger = entry.get("trigger", {})
    config = ModuleConfig(
        module_id=entry["id"],
        inputs=inputs,
        outputs=outputs,
        timer_period=ms(trigger["timer_ms"]) if "timer_ms" in trigger else None,
        trigger_input=trigger.get("input"),
        heartbeat_period=ms(entry.get("heartbeat_ms", 20)),
        compute_delay=us(entry.get("compute_delay_us", 0)),
        signals=tuple(entry.get("signals", [])),
    )
    return config, core


def _build_orchestrator(bus: SimBus, entry: dict, wiring: dict,
                        module_ids: list[str]) -> Orchestrator:
    critical = frozenset(wiring.get("critical_modules", ["control", "state_estimation"]))
    safety = SafetyConfig(critical_modules=critical,
                          lateral_threshold_m=entry.get("lateral_threshold_m", 2.0),
                          slow_speed_mps=entry.get("slow_speed_mps", 15.0),
                          pit_speed_mps=entry.get("pit_speed_mps", 10.0))
    config = OrchestratorConfig(
        cycle_period=ms(entry.get("cycle_ms", 20)),
        status_timeout=ms(entry.get("status_timeout_ms", 100)),
        safety=safety,
    )
    watchdog_modules = wiring.get("watchdog_modules", module_ids)
    return Orchestrator(bus, watchdog_modules, config)


def _wire_glue(bus: SimBus, orchestrator: Orchestrator, cores: dict[str, Any]) -> None:
    bus.subscribe(TRUTH_TOPIC,
                  lambda env: orchestrator.note_vehicle_speed(env.payload.speed),
                  owner="orchestration")
    gate_core = cores.get("gate")

    def on_gate_command(envelope) -> None:
        command = envelope.payload.command
        if gate_core is not None:
            gate_core.handle_command(command)
        if command == "reset":
            orchestrator.request_reset()

    bus.subscribe(GATE_COMMAND_TOPIC, on_gate_command, owner="orchestration")
