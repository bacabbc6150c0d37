"""In-process publish/subscribe bus with a deterministic virtual-time executor.

All simulation activity funnels through one event queue ordered by
(virtual time, event-kind priority, insertion sequence), so two runs with
identical registrations and seeds replay the exact same event sequence.
Every published message is wrapped in a stamped envelope carrying the
publisher id, a per-(publisher, topic) sequence counter, and the virtual
publish time. Subscriber queues default to depth one: a burst of publishes
between two callback turns delivers only the latest message (best effort).

Fault injection hooks (module crash, topic drop/delay, module freeze) are
applied as first-class events so failure scenarios are reproducible.
"""

from __future__ import annotations

import heapq
import json
import random
import time as _time
from collections import deque
from dataclasses import dataclass, asdict, is_dataclass
from enum import Enum
from typing import Any, Callable, Optional

SimTime = int  # virtual nanoseconds since executor start

MS = 1_000_000
US = 1_000
SECOND = 1_000_000_000


def ms(value: float) -> SimTime:
    """Milliseconds to virtual nanoseconds."""
    return int(round(value * MS))


def us(value: float) -> SimTime:
    """Microseconds to virtual nanoseconds."""
    return int(round(value * US))


def sec(value: float) -> SimTime:
    """Seconds to virtual nanoseconds."""
    return int(round(value * SECOND))


# Event-kind priorities at equal virtual time: faults apply first, then
# deliveries, then timers; ties break on insertion sequence.
_PRIO_FAULT = 0
_PRIO_DELIVER = 1
_PRIO_TIMER = 2

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash; dependency-free and stable across runs."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def encode_payload(payload: Any) -> bytes:
    """Canonical byte encoding of a message payload.

    Payloads are flat dataclasses of JSON-representable fields; sorted keys
    and fixed separators make the encoding byte-stable for hashing, trace
    comparison, and log recording.
    """
    if is_dataclass(payload) and not isinstance(payload, type):
        obj = asdict(payload)
    else:
        obj = payload
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_payload(message_type: type, data: bytes) -> Any:
    """Rebuild a payload dataclass from its canonical byte encoding."""
    obj = json.loads(data.decode("utf-8"))
    if is_dataclass(message_type):
        return message_type(**obj)
    return obj


class BusError(Exception):
    pass


class DuplicateTopicError(BusError):
    pass


class InvalidSpecError(BusError):
    pass


class UnknownTopicError(BusError):
    pass


class TypeMismatchError(BusError):
    pass


class PublishAfterCrashError(BusError):
    pass


class InvalidPeriodError(BusError):
    pass


class ActivationInPastError(BusError):
    pass


class ExecutorStartedError(BusError):
    """Raised for configuration calls that must precede the first run."""


class FaultKind(Enum):
    CRASH_MODULE = "crash_module"
    DROP_TOPIC = "drop_topic"
    DELAY_TOPIC = "delay_topic"
    FREEZE_MODULE = "freeze_module"


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    target: str  # module id or topic name
    activation: SimTime
    delay: SimTime = 0  # DELAY_TOPIC only
    duration: SimTime = 0  # FREEZE_MODULE only


@dataclass(frozen=True)
class TopicSpec:
    name: str
    message_type: type
    nominal_period: Optional[SimTime] = None
    queue_depth: int = 1


@dataclass(frozen=True)
class StampedEnvelope:
    topic: str
    publisher_id: str
    sequence: int
    publish_stamp: SimTime
    payload: Any


class _Topic:
    __slots__ = ("spec", "subscriptions", "dropped", "delay")

    def __init__(self, spec: TopicSpec):
        self.spec = spec
        self.subscriptions: list[Subscription] = []
        self.dropped = False
        self.delay: SimTime = 0


class Subscription:
    """A subscriber binding: bounded queue plus the owning module id."""

    __slots__ = ("topic", "callback", "owner", "queue", "index")

    def __init__(self, topic: _Topic, callback: Callable[[StampedEnvelope], None],
                 owner: str, depth: int, index: int):
        self.topic = topic
        self.callback = callback
        self.owner = owner
        # entries are (deliver_at, envelope); append drops the oldest on overflow
        self.queue: deque = deque(maxlen=depth)
        self.index = index


class Publisher:
    """Publishing handle bound to one topic and one owning module."""

    __slots__ = ("_bus", "_topic", "owner")

    def __init__(self, bus: "SimBus", topic: _Topic, owner: str):
        self._bus = bus
        self._topic = topic
        self.owner = owner

    @property
    def topic_name(self) -> str:
        return self._topic.spec.name

    def publish(self, payload: Any) -> StampedEnvelope:
        return self._bus._publish(self._topic, self.owner, payload)


class _Timer:
    __slots__ = ("period", "callback", "owner", "fired", "rng", "sigma", "last_fire", "cancelled")

    def __init__(self, period: SimTime, callback, owner: str,
                 sigma: SimTime, rng: Optional[random.Random]):
        self.period = period
        self.callback = callback
        self.owner = owner
        self.fired = 0
        self.sigma = sigma
        self.rng = rng
        self.last_fire: SimTime = 0
        self.cancelled = False

    def next_nominal(self) -> SimTime:
        return (self.fired + 1) * self.period

    def jitter(self) -> SimTime:
        if self.sigma <= 0 or self.rng is None:
            return 0
        offset = self.rng.gauss(0.0, float(self.sigma))
        bound = 3.0 * self.sigma
        return int(max(-bound, min(bound, offset)))


class SimBus:
    """Message bus plus single-threaded deterministic executor.

    Callbacks all run on the executor's thread of control; a callback that
    raises crashes only its owning module (the run continues). With
    ``paced=True`` the virtual clock is slaved to the wall clock at 1 ms
    granularity so an interactive console can keep up; batch runs leave it
    off and execute as fast as possible.
    """

    def __init__(self, seed: int = 0, paced: bool = False):
        self.seed = seed
        self.paced = paced
        self._now: SimTime = 0
        self._started = False
        self._event_seq = 0
        self._events: list = []  # heap of (t, prio, seq, thunk)
        self._topics: dict[str, _Topic] = {}
        self._sub_count = 0
        self._sequences: dict[tuple[str, str], int] = {}
        self._crashed: dict[str, str] = {}  # module id -> reason
        self._frozen_until: dict[str, SimTime] = {}
        self._pending_faults: list[FaultSpec] = []
        self._timers: list[_Timer] = []
        self.trace: list[dict] = []
        self._boundary_hooks: list[Callable[[SimTime], None]] = []
        self._events_processed = 0
        self._pace_anchor: Optional[float] = None
        self._stop_requested = False

    # ------------------------------------------------------------------
    # registration
    # ------------------------------------------------------------------

    @property
    def now(self) -> SimTime:
        return self._now

    def register_topic(self, spec: TopicSpec) -> _Topic:
        if self._started:
            raise ExecutorStartedError("topics must be registered before the executor starts")
        if not spec.name:
            raise InvalidSpecError("topic name must be non-empty")
        if spec.queue_depth < 1:
            raise InvalidSpecError(f"queue depth must be positive, got {spec.queue_depth}")
        if spec.nominal_period is not None and spec.nominal_period <= 0:
            raise InvalidSpecError(f"nominal period must be positive, got {spec.nominal_period}")
        if spec.name in self._topics:
            raise DuplicateTopicError(spec.name)
        topic = _Topic(spec)
        self._topics[spec.name] = topic
        return topic

    def topic(self, name: str) -> _Topic:
        try:
            return self._topics[name]
        except KeyError:
            raise UnknownTopicError(name) from None

    def has_topic(self, name: str) -> bool:
        return name in self._topics

    def topic_names(self) -> list[str]:
        return list(self._topics)

    def graph_snapshot(self) -> dict:
        """Topology view for configuration comparison: topics, subscriptions,
        and timer rasters, all in registration order."""
        return {
            "topics": [(t.spec.name, t.spec.message_type.__name__,
                        t.spec.nominal_period, t.spec.queue_depth)
                       for t in self._topics.values()],
            "subscriptions": [(t.spec.name, sub.owner)
                              for t in self._topics.values()
                              for sub in t.subscriptions],
            "timers": [(timer.owner, timer.period) for timer in self._timers],
        }

    def advertise(self, topic: str | _Topic, owner: str) -> Publisher:
        handle = self.topic(topic) if isinstance(topic, str) else topic
        return Publisher(self, handle, owner)

    def subscribe(self, topic: str | _Topic, callback: Callable[[StampedEnvelope], None],
                  owner: str, queue_depth: Optional[int] = None) -> Subscription:
        handle = self.topic(topic) if isinstance(topic, str) else topic
        depth = handle.spec.queue_depth if queue_depth is None else queue_depth
        if depth < 1:
            raise InvalidSpecError("subscription queue depth must be positive")
        sub = Subscription(handle, callback, owner, depth, self._sub_count)
        self._sub_count += 1
        handle.subscriptions.append(sub)
        return sub

    def schedule_timer(self, period: SimTime, callback: Callable[[SimTime], None],
                       owner: str, jitter_sigma: SimTime = 0) -> _Timer:
        if period <= 0:
            raise InvalidPeriodError(f"timer period must be positive, got {period}")
        rng = None
        if jitter_sigma > 0:
            rng = random.Random(f"{self.seed}:timer:{owner}:{len(self._timers)}")
        timer = _Timer(period, callback, owner, jitter_sigma, rng)
        self._timers.append(timer)
        self._schedule_timer_fire(timer)
        return timer

    def schedule_once(self, at: SimTime, callback: Callable[[SimTime], None], owner: str) -> None:
        """One-shot callback at an absolute virtual time (>= now)."""
        if at < self._now:
            raise ActivationInPastError(f"cannot schedule at {at} before now {self._now}")

        def thunk():
            if self._is_silenced(owner):
                return None
            callback(self._now)
            return None  # one-shots are plumbing; only effective events trace

        thunk.owner = owner
        self._push(at, _PRIO_TIMER, thunk)

    def add_boundary_hook(self, hook: Callable[[SimTime], None]) -> None:
        """Called between events; the pacing/bridge layer injects commands here."""
        self._boundary_hooks.append(hook)

    # ------------------------------------------------------------------
    # publishing and delivery
    # ------------------------------------------------------------------

    def _publish(self, topic: _Topic, owner: str, payload: Any) -> StampedEnvelope:
        spec = topic.spec
        if owner in self._crashed:
            raise PublishAfterCrashError(f"{owner} publishing on {spec.name} after crash")
        if not isinstance(payload, spec.message_type):
            raise TypeMismatchError(
                f"{spec.name} expects {spec.message_type.__name__}, got {type(payload).__name__}")
        key = (owner, spec.name)
        seq = self._sequences.get(key, 0) + 1
        self._sequences[key] = seq
        envelope = StampedEnvelope(spec.name, owner, seq, self._now, payload)
        if not topic.dropped:
            deliver_at = self._now + topic.delay
            for sub in topic.subscriptions:
                sub.queue.append((deliver_at, envelope))
                self._push(deliver_at, _PRIO_DELIVER, self._make_delivery(sub))
        return envelope

    def inject_envelope(self, envelope: StampedEnvelope) -> None:
        """Deliver a pre-stamped envelope (replay path); bypasses sequence counters."""
        if envelope.publish_stamp < self._now:
            raise ActivationInPastError("replayed envelope stamped in the past")
        topic = self.topic(envelope.topic)

        def emit(_now: SimTime, topic=topic, envelope=envelope):
            if topic.dropped:
                return
            deliver_at = self._now + topic.delay
            for sub in topic.subscriptions:
                sub.queue.append((deliver_at, envelope))
                self._push(deliver_at, _PRIO_DELIVER, self._make_delivery(sub))

        self.schedule_once(envelope.publish_stamp, emit, owner="__replay__")

    def _make_delivery(self, sub: Subscription):
        def thunk():
            if not sub.queue:
                return None
            deliver_at, envelope = sub.queue[0]
            if deliver_at > self._now:
                return None
            if self._is_silenced(sub.owner):
                # frozen subscribers keep the entry; crashed ones never resume
                if sub.owner in self._crashed:
                    sub.queue.popleft()
                return None
            sub.queue.popleft()
            sub.callback(envelope)
            return {
                "t_ns": self._now,
                "kind": "deliver",
                "topic": envelope.topic,
                "pub": envelope.publisher_id,
                "seq": envelope.sequence,
                "hash": f"{fnv1a_64(encode_payload(envelope.payload)):016x}",
            }

        thunk.owner = sub.owner
        return thunk

    # ------------------------------------------------------------------
    # timers
    # ------------------------------------------------------------------

    def _schedule_timer_fire(self, timer: _Timer) -> None:
        nominal = timer.next_nominal()
        while nominal <= self._now:
            timer.fired += 1
            nominal = timer.next_nominal()
        fire_at = max(nominal + timer.jitter(), timer.last_fire, self._now)

        def thunk():
            if timer.cancelled or self._is_silenced(timer.owner):
                if timer.owner in self._crashed or timer.cancelled:
                    return None  # crashed: never reschedule
                timer.fired += 1  # frozen: skip this firing, keep the raster
                self._schedule_timer_fire(timer)
                return None
            timer.fired += 1
            timer.last_fire = self._now
            fired_index = timer.fired
            self._schedule_timer_fire(timer)
            timer.callback(self._now)
            return {
                "t_ns": self._now,
                "kind": "timer",
                "topic": None,
                "pub": timer.owner,
                "seq": fired_index,
                "hash": None,
            }

        thunk.owner = timer.owner
        self._push(fire_at, _PRIO_TIMER, thunk)

    # ------------------------------------------------------------------
    # faults
    # ------------------------------------------------------------------

    def inject_fault(self, fault: FaultSpec) -> None:
        if fault.activation < self._now:
            raise ActivationInPastError(
                f"fault activation {fault.activation} is before now {self._now}")
        if fault.kind in (FaultKind.DROP_TOPIC, FaultKind.DELAY_TOPIC):
            self.topic(fault.target)  # validate early

        def thunk():
            self._apply_fault(fault)
            return {
                "t_ns": self._now,
                "kind": "fault",
                "topic": fault.target if fault.kind in (FaultKind.DROP_TOPIC, FaultKind.DELAY_TOPIC) else None,
                "pub": fault.target if fault.kind in (FaultKind.CRASH_MODULE, FaultKind.FREEZE_MODULE) else None,
                "seq": 0,
                "hash": None,
            }

        thunk.owner = "__executor__"
        self._push(fault.activation, _PRIO_FAULT, thunk)

    def _apply_fault(self, fault: FaultSpec) -> None:
        if fault.kind is FaultKind.CRASH_MODULE:
            self._crash(fault.target, "fault injection")
        elif fault.kind is FaultKind.DROP_TOPIC:
            self.topic(fault.target).dropped = True
        elif fault.kind is FaultKind.DELAY_TOPIC:
            self.topic(fault.target).delay = fault.delay
        elif fault.kind is FaultKind.FREEZE_MODULE:
            until = self._now + fault.duration
            self._frozen_until[fault.target] = until

            def thaw(module=fault.target, until=until):
                if self._frozen_until.get(module) != until:
                    return None
                del self._frozen_until[module]
                for topic in self._topics.values():
                    for sub in topic.subscriptions:
                        if sub.owner == module and sub.queue:
                            self._push(self._now, _PRIO_DELIVER, self._make_delivery(sub))
                return None

            # thaw via a raw push so the freeze itself cannot silence it
            thaw.owner = "__executor__"
            self._push(until, _PRIO_FAULT, thaw)

    def _crash(self, module: str, reason: str) -> None:
        if module not in self._crashed:
            self._crashed[module] = reason

    def crash_module(self, module: str, reason: str = "requested") -> None:
        self._crash(module, reason)

    def is_crashed(self, module: str) -> bool:
        return module in self._crashed

    @property
    def crashed_modules(self) -> dict[str, str]:
        return dict(self._crashed)

    def _is_silenced(self, owner: str) -> bool:
        if owner in self._crashed:
            return True
        until = self._frozen_until.get(owner)
        return until is not None and self._now < until

    # ------------------------------------------------------------------
    # execution
    # ------------------------------------------------------------------

    def _push(self, t: SimTime, prio: int, thunk) -> None:
        self._event_seq += 1
        heapq.heappush(self._events, (t, prio, self._event_seq, thunk))

    def request_stop(self) -> None:
        """Ask a running run_until to return early; safe from other threads."""
        self._stop_requested = True

    def run_until(self, t_end: SimTime) -> int:
        """Process every event stamped <= t_end; returns effective event count."""
        self._started = True
        processed = 0
        if self.paced and self._pace_anchor is None:
            self._pace_anchor = _time.monotonic() - self._now / SECOND
        while self._events and self._events[0][0] <= t_end and not self._stop_requested:
            t = self._events[0][0]
            if self.paced:
                self._pace_to(t)
            for hook in self._boundary_hooks:
                hook(self._now)
            if self._stop_requested:
                break
            if self._events and self._events[0][0] <= t_end:
                t, _prio, _seq, thunk = heapq.heappop(self._events)
                self._now = t
                record = self._run_thunk(thunk)
                if record is not None:
                    self.trace.append(record)
                    processed += 1
        if self.paced and not self._stop_requested:
            self._pace_to(t_end)
        for hook in self._boundary_hooks:
            hook(self._now)
        if not self._stop_requested:
            self._now = max(self._now, t_end)
        self._events_processed += processed
        return processed

    def _run_thunk(self, thunk):
        try:
            return thunk()
        except Exception as exc:  # crash isolation: only the owner dies
            owner = getattr(thunk, "owner", "__unknown__")
            self._crash(owner, f"callback raised: {exc!r}")
            return {
                "t_ns": self._now,
                "kind": "fault",
                "topic": None,
                "pub": owner,
                "seq": 0,
                "hash": None,
            }

    def _pace_to(self, t: SimTime) -> None:
        target_wall = self._pace_anchor + t / SECOND
        while not self._stop_requested:
            lag = target_wall - _time.monotonic()
            if lag <= 0:
                return
            _time.sleep(min(lag, 0.001))
            for hook in self._boundary_hooks:
                hook(self._now)

    # ------------------------------------------------------------------
    # trace
    # ------------------------------------------------------------------

    def trace_lines(self) -> list[str]:
        return [json.dumps(rec, separators=(",", ":")) for rec in self.trace]

    def dump_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.trace_lines():
                fh.write(line)
                fh.write("\n")
