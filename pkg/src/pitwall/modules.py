"""Standardized module model: one generic wrapper hosts interchangeable
algorithm cores behind a framework-independent interface.

The wrapper owns everything middleware-facing: topic bindings, the
heartbeat timer, input timeout monitors, parameter declaration, and signal
logging. A core only ever sees plain input records and a parameter view,
so the same implementation runs under any host and two implementations of
the same module swap without touching the topic graph.

A module that can no longer produce meaningful outputs reports STALE once,
immediately, and stops publishing functional outputs; the heartbeat keeps
repeating STALE so the rest of the stack can tell "degraded" from "dead".
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, Optional, Protocol, runtime_checkable

from pitwall.bus import Publisher, SimBus, SimTime, StampedEnvelope, TopicSpec, ms
from pitwall.params import ParamStore, ParamView
from pitwall.tsl import SignalGroup, SignalHub

DIAG_TOPIC = "/diagnostics"
DIAG_QUEUE_DEPTH = 64  # all modules share the topic; a cycle's worth must fit

DEFAULT_HEARTBEAT = ms(20)
TIMEOUT_PERIODS = 3  # default input timeout, in publisher nominal periods


class ModuleKitError(Exception):
    pass


class UnboundTopicError(ModuleKitError):
    pass


class InvalidTimeoutError(ModuleKitError):
    pass


class DiagnosticLevel(IntEnum):
    OK = 0
    WARN = 1
    ERROR = 2
    STALE = 3


@dataclass
class ModuleStatus:
    module_id: str
    level: str  # DiagnosticLevel name; kept primitive for the wire
    detail: str
    stamp: SimTime

    def severity(self) -> DiagnosticLevel:
        return DiagnosticLevel[self.level]


@dataclass(frozen=True)
class Degraded:
    """Returned by a core instead of outputs when it cannot run normally.

    ``outputs`` may carry one final output record (for example a sample
    marked invalid) that goes out atomically with the degradation.
    """
    level: DiagnosticLevel
    detail: str
    outputs: Optional[dict[str, Any]] = None


@runtime_checkable
class AlgorithmCore(Protocol):
    def step(self, inputs: "Inputs", params: ParamView) -> Optional[dict[str, Any] | Degraded]:
        ...


@dataclass(frozen=True)
class InputBinding:
    name: str
    topic: str
    required: bool = True
    timeout: Optional[SimTime] = None  # None: 3x publisher period, or no timeout
    step_on_expiry: bool = False  # run the core once when this input times out


@dataclass(frozen=True)
class OutputBinding:
    name: str
    topic: str


@dataclass(frozen=True)
class ModuleConfig:
    module_id: str
    inputs: tuple[InputBinding, ...] = ()
    outputs: tuple[OutputBinding, ...] = ()
    timer_period: Optional[SimTime] = None  # timer-driven when set
    trigger_input: Optional[str] = None  # subscription-driven when set
    heartbeat_period: SimTime = DEFAULT_HEARTBEAT
    compute_delay: SimTime = 0
    signals: tuple[str, ...] = ()


class _Monitor:
    __slots__ = ("binding", "timeout", "last_rx", "last_payload", "expiry_token")

    def __init__(self, binding: InputBinding, timeout: Optional[SimTime]):
        self.binding = binding
        self.timeout = timeout
        self.last_rx: Optional[SimTime] = None
        self.last_payload: Any = None
        self.expiry_token = 0

    def valid(self, now: SimTime) -> bool:
        if self.last_rx is None:
            return False
        if self.timeout is None:
            return True
        return now - self.last_rx <= self.timeout


class Inputs:
    """Read-only record of the module's inputs handed to the core each step."""

    def __init__(self, monitors: dict[str, _Monitor], now: SimTime):
        self._monitors = monitors
        self.now = now

    def has(self, name: str) -> bool:
        return self._monitors[name].last_rx is not None

    def latest(self, name: str) -> Any:
        return self._monitors[name].last_payload

    def valid(self, name: str) -> bool:
        return self._monitors[name].valid(self.now)

    def age(self, name: str) -> Optional[SimTime]:
        monitor = self._monitors[name]
        return None if monitor.last_rx is None else self.now - monitor.last_rx


class Module:
    """Generic wrapper executing one core under the bus. Built via wrap()."""

    def __init__(self, bus: SimBus, core: AlgorithmCore, config: ModuleConfig,
                 params: ParamStore, signal_hub: Optional[SignalHub] = None):
        self.bus = bus
        self.core = core
        self.config = config
        self.module_id = config.module_id
        self.params_view = params.scoped(config.module_id)
        self.stale = False
        self.stale_detail = ""
        self._core_level = DiagnosticLevel.OK
        self._core_detail = ""
        self._monitors: dict[str, _Monitor] = {}
        self._publishers: dict[str, Publisher] = {}
        self.signal_group: Optional[SignalGroup] = None

        declare = getattr(core, "declare_params", None)
        if declare is not None:
            declare(self.params_view)

        if signal_hub is not None and config.signals:
            self.signal_group = signal_hub.register(config.module_id, list(config.signals))
            bind = getattr(core, "bind_signals", None)
            if bind is not None:
                bind(self.signal_group)

        for binding in config.inputs:
            if not bus.has_topic(binding.topic):
                raise UnboundTopicError(f"{config.module_id}: input topic {binding.topic}")
            timeout = binding.timeout
            if timeout is None:
                period = bus.topic(binding.topic).spec.nominal_period
                timeout = None if period is None else TIMEOUT_PERIODS * period
            if timeout is not None and timeout <= 0:
                raise InvalidTimeoutError(f"{config.module_id}: {binding.name} timeout {timeout}")
            self._monitors[binding.name] = _Monitor(binding, timeout)
            bus.subscribe(binding.topic, self._receiver(binding), owner=config.module_id)

        for binding in config.outputs:
            if not bus.has_topic(binding.topic):
                raise UnboundTopicError(f"{config.module_id}: output topic {binding.topic}")
            self._publishers[binding.name] = bus.advertise(binding.topic, config.module_id)

        if not bus.has_topic(DIAG_TOPIC):
            bus.register_topic(TopicSpec(DIAG_TOPIC, ModuleStatus, queue_depth=DIAG_QUEUE_DEPTH))
        self._status_pub = bus.advertise(DIAG_TOPIC, config.module_id)

        if config.timer_period is not None:
            bus.schedule_timer(config.timer_period, self._on_timer, owner=config.module_id)
        bus.schedule_timer(config.heartbeat_period, self.heartbeat_tick, owner=config.module_id)

    # ------------------------------------------------------------------
    # event paths
    # ------------------------------------------------------------------

    def _receiver(self, binding: InputBinding) -> Callable[[StampedEnvelope], None]:
        def deliver(envelope: StampedEnvelope) -> None:
            self.deliver(binding.name, envelope)

        return deliver

    def deliver(self, name: str, envelope: StampedEnvelope) -> None:
        if self.stale:
            return
        monitor = self._monitors[name]
        monitor.last_rx = self.bus.now
        monitor.last_payload = envelope.payload
        if monitor.binding.step_on_expiry and monitor.timeout is not None:
            monitor.expiry_token += 1
            token = monitor.expiry_token
            self.bus.schedule_once(self.bus.now + monitor.timeout + 1,
                                   lambda now, m=monitor, tok=token: self._on_expiry(m, tok),
                                   owner=self.module_id)
        if self.config.trigger_input == name:
            self.run_step()

    def _on_expiry(self, monitor: _Monitor, token: int) -> None:
        if self.stale or token != monitor.expiry_token:
            return
        if not monitor.valid(self.bus.now):
            self.run_step()

    def _on_timer(self, _now: SimTime) -> None:
        self.run_step()

    def run_step(self) -> None:
        if self.stale:
            return
        inputs = Inputs(self._monitors, self.bus.now)
        try:
            result = self.core.step(inputs, self.params_view)
        except Exception as exc:
            self._core_level = DiagnosticLevel.ERROR
            self._core_detail = f"step failed: {exc!r}"
            return
        if result is None:
            return
        if isinstance(result, Degraded):
            if result.outputs:
                self._publish_outputs(result.outputs)
            self._core_level = result.level
            self._core_detail = result.detail
            if result.level is DiagnosticLevel.STALE:
                self.report_stale(result.detail)
            return
        self._core_level = DiagnosticLevel.OK
        self._core_detail = ""
        self._publish_outputs(result)

    def _publish_outputs(self, outputs: dict[str, Any]) -> None:
        delay = self.config.compute_delay
        if delay <= 0:
            for name, payload in outputs.items():
                self._publishers[name].publish(payload)
            return

        def flush(_now: SimTime, outputs=outputs) -> None:
            if self.stale:
                return
            for name, payload in outputs.items():
                self._publishers[name].publish(payload)

        self.bus.schedule_once(self.bus.now + delay, flush, owner=self.module_id)

    # ------------------------------------------------------------------
    # diagnostics
    # ------------------------------------------------------------------

    def heartbeat_tick(self, _now: Optional[SimTime] = None) -> ModuleStatus:
        try:
            level, detail = self._current_level()
        except Exception as exc:  # must never miss a beat
            level, detail = DiagnosticLevel.ERROR, f"diagnostics failed: {exc!r}"
        status = ModuleStatus(self.module_id, level.name, detail, self.bus.now)
        self._status_pub.publish(status)
        return status

    def _current_level(self) -> tuple[DiagnosticLevel, str]:
        if self.stale:
            return DiagnosticLevel.STALE, self.stale_detail
        level = self._core_level
        details = [self._core_detail] if self._core_detail else []
        now = self.bus.now
        for monitor in self._monitors.values():
            if monitor.valid(now):
                continue
            if monitor.binding.required:
                level = max(level, DiagnosticLevel.ERROR)
                details.append(f"input {monitor.binding.topic} invalid")
            elif monitor.last_rx is not None:
                # optional inputs only degrade once they stop after starting
                level = max(level, DiagnosticLevel.WARN)
                details.append(f"optional input {monitor.binding.topic} timed out")
        return level, "; ".join(details)

    def report_stale(self, detail: str) -> None:
        if self.stale:
            return
        self.stale = True
        self.stale_detail = detail
        status = ModuleStatus(self.module_id, DiagnosticLevel.STALE.name, detail, self.bus.now)
        self._status_pub.publish(status)

    def monitor_state(self, name: str) -> tuple[Optional[SimTime], bool]:
        monitor = self._monitors[name]
        return monitor.last_rx, monitor.valid(self.bus.now)


def wrap(bus: SimBus, core: AlgorithmCore, config: ModuleConfig, params: ParamStore,
         signal_hub: Optional[SignalHub] = None) -> Module:
    """Bind a core to the bus under the standardized module contract."""
    if config.trigger_input is not None:
        names = {binding.name for binding in config.inputs}
        if config.trigger_input not in names:
            raise UnboundTopicError(
                f"{config.module_id}: trigger input {config.trigger_input} not bound")
    return Module(bus, core, config, params, signal_hub)
