"""Scripted fault-injection scenarios with declarative assertions.

A scenario is a JSON document: duration, wiring reference, parameter
overrides, fault injections, a timed operator/race-control script, and a
list of assertions evaluated against the collected run data. Runs are
deterministic for a given seed; the runner records an event trace and a
telemetry log alongside the assertion verdicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from pitwall.bus import FaultKind, FaultSpec, SimBus, SimTime, ms
from pitwall.gate import GateCommandMsg, OperatorInput
from pitwall.harness.messages import BasestationLinkMsg, Trajectory
from pitwall.harness.stack import (
    BASESTATION_TOPIC,
    GATE_COMMAND_TOPIC,
    GATE_STATE_TOPIC,
    OPERATOR_TOPIC,
    Stack,
    build_stack,
)
from pitwall.harness.vehicle import TRUTH_TOPIC
from pitwall.modules import DIAG_TOPIC
from pitwall.orchestration import (
    ACTION_TOPIC,
    RACE_FLAG_TOPIC,
    TEAM_BEHAVIOR_TOPIC,
    BehaviorRequestMsg,
    RaceFlagMsg,
)
from pitwall.tsl import FRAME_TOPIC, SCHEMA_TOPIC

STANDSTILL_MPS = 0.1


class ScenarioError(Exception):
    pass


class ScenarioInvalidError(ScenarioError):
    pass


@dataclass
class Scenario:
    name: str
    duration: SimTime
    wiring: str = "stack_default"
    initial_speed: float = 0.0
    params: dict = field(default_factory=dict)
    faults: list = field(default_factory=list)  # FaultSpec
    script: list = field(default_factory=list)  # raw event dicts
    assertions: list = field(default_factory=list)  # raw assertion dicts

    def validate(self) -> None:
        if self.duration <= 0:
            raise ScenarioInvalidError("duration must be positive")
        for fault in self.faults:
            if fault.activation > self.duration:
                raise ScenarioInvalidError(f"fault at {fault.activation} beyond duration")
        for event in self.script:
            if ms(event.get("at_ms", 0)) > self.duration:
                raise ScenarioInvalidError("script event beyond duration")


_FAULT_KINDS = {
    "crash_module": FaultKind.CRASH_MODULE,
    "drop_topic": FaultKind.DROP_TOPIC,
    "delay_topic": FaultKind.DELAY_TOPIC,
    "freeze_module": FaultKind.FREEZE_MODULE,
}


def scenario_from_dict(doc: dict) -> Scenario:
    faults = [
        FaultSpec(
            kind=_FAULT_KINDS[f["kind"]],
            target=f["target"],
            activation=ms(f["at_ms"]),
            delay=ms(f.get("delay_ms", 0)),
            duration=ms(f.get("duration_ms", 0)),
        )
        for f in doc.get("faults", [])
    ]
    scenario = Scenario(
        name=doc["name"],
        duration=ms(doc["duration_ms"]),
        wiring=doc.get("wiring", "stack_default"),
        initial_speed=doc.get("initial_speed_mps", 0.0),
        params=doc.get("params", {}),
        faults=faults,
        script=doc.get("script", []),
        assertions=doc.get("assertions", []),
    )
    scenario.validate()
    return scenario


def bundled_scenario_names() -> list[str]:
    base = resources.files("pitwall.harness") / "scenarios"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path: str) -> Scenario:
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ScenarioInvalidError(f"scenario file not found: {name_or_path}")
        return scenario_from_dict(json.loads(path.read_text(encoding="utf-8")))
    ref = resources.files("pitwall.harness") / "scenarios" / f"{name_or_path}.json"
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioInvalidError(f"unknown scenario: {name_or_path}") from None
    return scenario_from_dict(json.loads(text))


# ----------------------------------------------------------------------
# run-data collection
# ----------------------------------------------------------------------

class Collected:
    """Timelines gathered during a run, the substrate for assertions."""

    def __init__(self):
        self.statuses: list[tuple[SimTime, str, str, str]] = []
        self.actions: list[tuple[SimTime, str, str]] = []
        self.gate: list[tuple[SimTime, str, float, float]] = []
        self.vehicle: list[tuple[SimTime, float, float, float]] = []
        self.signals: dict[tuple[str, str], list[tuple[SimTime, float]]] = {}
        self._schemas: dict[int, tuple[str, list[str]]] = {}

    def attach(self, bus: SimBus) -> None:
        bus.subscribe(DIAG_TOPIC, self._on_status, "collector", queue_depth=64)
        bus.subscribe(ACTION_TOPIC, self._on_action, "collector", queue_depth=64)
        bus.subscribe(GATE_STATE_TOPIC, self._on_gate, "collector", queue_depth=64)
        bus.subscribe(TRUTH_TOPIC, self._on_vehicle, "collector", queue_depth=64)
        bus.subscribe(SCHEMA_TOPIC, self._on_schema, "collector", queue_depth=128)
        bus.subscribe(FRAME_TOPIC, self._on_frame, "collector", queue_depth=128)

    def _on_status(self, env):
        s = env.payload
        self.statuses.append((bus_time(env), s.module_id, s.level, s.detail))

    def _on_action(self, env):
        a = env.payload
        self.actions.append((a.stamp, a.action, a.reason))

    def _on_gate(self, env):
        g = env.payload
        self.gate.append((g.stamp, g.mode, g.brake_pressure, g.throttle))

    def _on_vehicle(self, env):
        v = env.payload
        self.vehicle.append((v.stamp, v.speed, v.position_s, v.lateral_offset))

    def _on_schema(self, env):
        m = env.payload
        self._schemas[m.schema_id] = (m.source_module, list(m.signal_names))

    def _on_frame(self, env):
        m = env.payload
        schema = self._schemas.get(m.schema_id)
        if schema is None:
            return
        module, names = schema
        for name, value in zip(names, m.values):
            self.signals.setdefault((module, name), []).append((m.stamp, value))


def bus_time(env) -> SimTime:
    return env.payload.stamp if hasattr(env.payload, "stamp") else env.publish_stamp


# ----------------------------------------------------------------------
# assertions
# ----------------------------------------------------------------------

@dataclass
class AssertionResult:
    description: str
    passed: bool
    measured_ns: Optional[SimTime] = None
    note: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        measured = "" if self.measured_ns is None else f" at t={self.measured_ns / 1e6:.3f} ms"
        note = f" ({self.note})" if self.note else ""
        return f"[{mark}] {self.description}{measured}{note}"


def _window(spec: dict) -> tuple[SimTime, SimTime]:
    after = ms(spec.get("after_ms", 0))
    by = ms(spec["by_ms"]) if "by_ms" in spec else None
    return after, by


def _first_in_window(events, after, by):
    for t, *rest in events:
        if t < after:
            continue
        if by is not None and t > by:
            return None
        return (t, *rest)
    return None


def evaluate_assertion(spec: dict, data: Collected, duration: SimTime) -> AssertionResult:
    kind = spec["type"]
    if kind == "module_level":
        after, by = _window(spec)
        hits = [(t,) for t, module, level, _ in data.statuses
                if module == spec["module"] and level == spec["level"]]
        hit = _first_in_window(hits, after, by)
        desc = f"{spec['module']} reports {spec['level']} in [{after / 1e6:.0f}, " \
               f"{(by or duration) / 1e6:.0f}] ms"
        return _timed_result(desc, hit, spec)
    if kind == "module_level_never":
        hits = [t for t, module, level, _ in data.statuses
                if module == spec["module"] and level == spec["level"]
                and t >= ms(spec.get("after_ms", 0))]
        return AssertionResult(f"{spec['module']} never reports {spec['level']}",
                               passed=not hits,
                               measured_ns=hits[0] if hits else None)
    if kind == "action":
        after, by = _window(spec)
        hits = [(t,) for t, action, _ in data.actions if action == spec["action"]]
        hit = _first_in_window(hits, after, by)
        desc = f"action {spec['action']} in [{after / 1e6:.0f}, {(by or duration) / 1e6:.0f}] ms"
        return _timed_result(desc, hit, spec)
    if kind == "action_never":
        after = ms(spec.get("after_ms", 0))
        by = ms(spec["by_ms"]) if "by_ms" in spec else None
        hits = [t for t, action, _ in data.actions
                if action == spec["action"] and t >= after and (by is None or t <= by)]
        window = "" if by is None else f" in [{after / 1e6:.0f}, {by / 1e6:.0f}] ms"
        return AssertionResult(f"action {spec['action']} never published{window}",
                               passed=not hits,
                               measured_ns=hits[0] if hits else None)
    if kind == "gate_brake_at_least":
        after, by = _window(spec)
        hits = [(t,) for t, _, brake, _ in data.gate if brake >= spec["bar"]]
        hit = _first_in_window(hits, after, by)
        desc = f"gate brake >= {spec['bar']} bar in [{after / 1e6:.0f}, " \
               f"{(by or duration) / 1e6:.0f}] ms"
        return _timed_result(desc, hit, spec)
    if kind == "gate_mode":
        after, by = _window(spec)
        hits = [(t,) for t, mode, _, _ in data.gate if mode == spec["mode"]]
        hit = _first_in_window(hits, after, by)
        desc = f"gate mode {spec['mode']} in [{after / 1e6:.0f}, {(by or duration) / 1e6:.0f}] ms"
        return _timed_result(desc, hit, spec)
    if kind == "standstill_by":
        deadline = ms(spec["by_ms"])
        reached = None
        for t, speed, _, _ in data.vehicle:
            if speed < STANDSTILL_MPS and t >= ms(spec.get("after_ms", 0)):
                reached = t
                break
        still_at_end = data.vehicle and data.vehicle[-1][1] < STANDSTILL_MPS
        ok = reached is not None and reached <= deadline and still_at_end
        return AssertionResult(f"standstill by {deadline / 1e6:.0f} ms", ok, reached)
    if kind == "speed_at_least":
        deadline = ms(spec["by_ms"])
        peak = max((speed for t, speed, _, _ in data.vehicle if t <= deadline), default=0.0)
        return AssertionResult(
            f"speed reaches {spec['mps']} m/s by {deadline / 1e6:.0f} ms",
            peak >= spec["mps"], note=f"peak {peak:.2f} m/s")
    if kind == "signal_constant":
        after = ms(spec.get("after_ms", 0))
        series = [v for t, v in data.signals.get((spec["module"], spec["signal"]), [])
                  if t >= after]
        ok = len(series) > 0 and all(v == series[0] for v in series)
        return AssertionResult(
            f"signal {spec['module']}.{spec['signal']} constant after {after / 1e6:.0f} ms",
            ok, note=f"{len(series)} samples")
    raise ScenarioInvalidError(f"unknown assertion type: {kind}")


def _timed_result(desc: str, hit, spec: dict) -> AssertionResult:
    if hit is None:
        return AssertionResult(desc, False)
    measured = hit[0]
    if "exact_ns" in spec and measured != spec["exact_ns"]:
        return AssertionResult(desc, False, measured,
                               note=f"expected exactly {spec['exact_ns']} ns")
    return AssertionResult(desc, True, measured)


# ----------------------------------------------------------------------
# runner
# ----------------------------------------------------------------------

@dataclass
class ScenarioResult:
    name: str
    passed: bool
    assertions: list[AssertionResult]
    data: Collected
    stack: Stack
    trace_lines: list[str]
    log_path: Optional[str]

    def report_lines(self) -> list[str]:
        lines = [result.line() for result in self.assertions]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"scenario {self.name}: {verdict}")
        return lines


def prepare_scenario(scenario: Scenario, seed: int = 0, log_path=None,
                     extra_param_docs: Optional[list[str]] = None,
                     paced: bool = False) -> tuple[Stack, Collected]:
    """Build the stack, apply overrides, arm faults and script, attach
    collectors; the caller drives the run."""
    scenario.validate()
    stack = build_stack(scenario.wiring, seed=seed, paced=paced,
                        initial_speed=scenario.initial_speed, log_path=log_path)
    bus = stack.bus

    merged: dict[str, Any] = dict(scenario.params)
    for doc in extra_param_docs or []:
        parsed = json.loads(doc) if doc.strip() else {}
        merged.update(parsed)
    if merged:
        stack.params.apply_overrides(merged)

    data = Collected()
    data.attach(bus)

    for fault in scenario.faults:
        bus.inject_fault(fault)
    _schedule_script(stack, scenario.script)
    return stack, data


def run_scenario(scenario: Scenario, seed: int = 0, log_path=None,
                 trace_path=None, extra_param_docs: Optional[list[str]] = None,
                 paced: bool = False) -> ScenarioResult:
    stack, data = prepare_scenario(scenario, seed=seed, log_path=log_path,
                                   extra_param_docs=extra_param_docs, paced=paced)
    bus = stack.bus
    bus.run_until(scenario.duration)

    if stack.writer is not None:
        stack.writer.close()
    if trace_path is not None:
        bus.dump_trace(trace_path)

    results = [evaluate_assertion(spec, data, scenario.duration)
               for spec in scenario.assertions]
    passed = all(r.passed for r in results)
    return ScenarioResult(scenario.name, passed, results, data, stack,
                          bus.trace_lines(), str(log_path) if log_path else None)


def _schedule_script(stack: Stack, script: list[dict]) -> None:
    bus = stack.bus
    flag_pub = bus.advertise(RACE_FLAG_TOPIC, "script")
    behavior_pub = bus.advertise(TEAM_BEHAVIOR_TOPIC, "script")
    operator_pub = bus.advertise(OPERATOR_TOPIC, "script")
    gate_pub = bus.advertise(GATE_COMMAND_TOPIC, "script")
    base_pub = bus.advertise(BASESTATION_TOPIC, "script")
    trajectory_pub = bus.advertise("/planning/trajectory", "script") \
        if bus.has_topic("/planning/trajectory") else None

    def apply(event: dict):
        def run(now: SimTime, event=event) -> None:
            if "flag" in event:
                flag_pub.publish(RaceFlagMsg(event["flag"]))
            elif "behavior" in event:
                behavior_pub.publish(BehaviorRequestMsg(event["behavior"], "team"))
            elif "operator" in event:
                op = event["operator"]
                operator_pub.publish(OperatorInput(
                    op.get("throttle", 0.0), op.get("brake", 0.0),
                    op.get("steering", 0.0), op.get("override", False), stamp=now))
            elif "gate_command" in event:
                gate_pub.publish(GateCommandMsg(event["gate_command"]))
            elif "basestation_ok" in event:
                base_pub.publish(BasestationLinkMsg(event["basestation_ok"]))
            elif "lateral_offset" in event:
                spec = event["lateral_offset"]
                stack.plant.command_lateral_offset(spec["target"], ms(spec.get("over_ms", 0)))
            elif "inject_trajectory" in event:
                if trajectory_pub is None:
                    raise ScenarioInvalidError("no trajectory topic to inject into")
                spec = event["inject_trajectory"]
                state = stack.plant.state
                cruise = spec.get("cruise", 30.0)
                points = [[state.position_s + 20.0 * i, cruise] for i in range(31)]
                trajectory_pub.publish(Trajectory("performance", points, stamp=now,
                                                  traj_id=90_000 + now % 1000))
            else:
                raise ScenarioInvalidError(f"unknown script event: {event}")

        return run

    for event in script:
        at = ms(event.get("at_ms", 0))
        repeat = event.get("repeat_ms")
        until = ms(event["until_ms"]) if "until_ms" in event else None
        if repeat is None:
            bus.schedule_once(at, apply(event), owner="script")
        else:
            t = at
            while until is not None and t <= until:
                bus.schedule_once(t, apply(event), owner="script")
                t += ms(repeat)
