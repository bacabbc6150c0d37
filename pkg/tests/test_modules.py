"""Module wrapper: heartbeats, input monitors, stale semantics, and
strategy-pattern isolation."""

from dataclasses import dataclass

import pytest

from pitwall.bus import SimBus, TopicSpec, ms, sec
from pitwall.modules import (
    DIAG_TOPIC,
    Degraded,
    DiagnosticLevel,
    InputBinding,
    InvalidTimeoutError,
    ModuleConfig,
    ModuleStatus,
    OutputBinding,
    UnboundTopicError,
    wrap,
)
from pitwall.params import ParamStore


@dataclass
class Reading:
    value: float
    valid: bool = True


@dataclass
class Command:
    value: float


class EchoCore:
    """Republishes its trigger input; degrades when the sample is invalid."""

    def step(self, inputs, params):
        if not inputs.valid("source"):
            return Degraded(DiagnosticLevel.STALE, "source lost",
                            outputs={"out": Command(-1.0)})
        reading = inputs.latest("source")
        if not reading.valid:
            return Degraded(DiagnosticLevel.ERROR, "malformed sample")
        return {"out": Command(reading.value)}


class DoublingCore:
    """Same record types as EchoCore, different computation."""

    def step(self, inputs, params):
        if not inputs.valid("source"):
            return None
        return {"out": Command(inputs.latest("source").value * 2)}


def build(core=None, *, timeout=ms(30), step_on_expiry=False, trigger="source",
          timer=None, required=True, compute_delay=0, seed=0):
    bus = SimBus(seed=seed)
    bus.register_topic(TopicSpec("/in", Reading, nominal_period=ms(10)))
    bus.register_topic(TopicSpec("/out", Command))
    params = ParamStore()
    config = ModuleConfig(
        module_id="echo",
        inputs=(InputBinding("source", "/in", required=required, timeout=timeout,
                             step_on_expiry=step_on_expiry),),
        outputs=(OutputBinding("out", "/out"),),
        trigger_input=trigger if timer is None else None,
        timer_period=timer,
        compute_delay=compute_delay,
    )
    module = wrap(bus, core or EchoCore(), config, params)
    return bus, module


def statuses_of(bus, module_id):
    return [r for r in bus.trace
            if r["kind"] == "deliver" and r["topic"] == DIAG_TOPIC and r["pub"] == module_id]


class TestWrap:
    def test_unbound_input_topic(self):
        bus = SimBus()
        with pytest.raises(UnboundTopicError):
            wrap(bus, EchoCore(),
                 ModuleConfig("m", inputs=(InputBinding("x", "/missing"),)),
                 ParamStore())

    def test_unbound_output_topic(self):
        bus = SimBus()
        bus.register_topic(TopicSpec("/in", Reading))
        with pytest.raises(UnboundTopicError):
            wrap(bus, EchoCore(),
                 ModuleConfig("m", inputs=(InputBinding("x", "/in"),),
                              outputs=(OutputBinding("y", "/missing"),)),
                 ParamStore())

    def test_invalid_timeout(self):
        bus = SimBus()
        bus.register_topic(TopicSpec("/in", Reading))
        with pytest.raises(InvalidTimeoutError):
            wrap(bus, EchoCore(),
                 ModuleConfig("m", inputs=(InputBinding("x", "/in", timeout=0),)),
                 ParamStore())

    def test_default_timeout_is_three_periods(self):
        bus, module = build(timeout=None)
        assert module._monitors["source"].timeout == 3 * ms(10)

    def test_swapping_cores_keeps_graph(self):
        bus_a, _ = build(EchoCore())
        bus_b, _ = build(DoublingCore())
        assert bus_a.graph_snapshot() == bus_b.graph_snapshot()


class TestDeliveryAndStep:
    def test_subscription_trigger_publishes_same_instant(self):
        bus, module = build()
        pub = bus.advertise("/in", owner="sensor")
        outputs = []
        bus.subscribe("/out", lambda env: outputs.append((bus.now, env.payload.value)),
                      owner="sink")
        bus.schedule_timer(ms(10), lambda now: pub.publish(Reading(now * 1.0)), owner="sensor")
        bus.run_until(ms(40))
        assert outputs == [(ms(10), float(ms(10))), (ms(20), float(ms(20))),
                           (ms(30), float(ms(30))), (ms(40), float(ms(40)))]

    def test_compute_delay_shifts_output(self):
        bus, module = build(compute_delay=ms(2))
        pub = bus.advertise("/in", owner="sensor")
        outputs = []
        bus.subscribe("/out", lambda env: outputs.append(bus.now), owner="sink")
        bus.schedule_timer(ms(10), lambda now: pub.publish(Reading(1.0)), owner="sensor")
        bus.run_until(ms(30))
        assert outputs == [ms(12), ms(22), ms(32)][:len(outputs)]
        assert outputs[0] == ms(12)

    def test_malformed_sample_gives_error_no_output(self):
        bus, module = build()
        pub = bus.advertise("/in", owner="sensor")
        outputs = []
        bus.subscribe("/out", lambda env: outputs.append(env), owner="sink")
        bus.schedule_once(ms(5), lambda now: pub.publish(Reading(1.0, valid=False)),
                          owner="sensor")
        bus.run_until(ms(20))
        assert outputs == []
        status = module.heartbeat_tick()
        assert status.level == "ERROR"
        assert "malformed" in status.detail

    def test_step_exception_keeps_module_alive(self):
        class Bomb:
            def step(self, inputs, params):
                raise RuntimeError("boom")

        bus, module = build(Bomb())
        pub = bus.advertise("/in", owner="sensor")
        bus.schedule_once(ms(5), lambda now: pub.publish(Reading(1.0)), owner="sensor")
        bus.run_until(ms(20))
        assert not bus.is_crashed("echo")
        status = module.heartbeat_tick()
        assert status.level == "ERROR"
        assert "step failed" in status.detail

    def test_message_after_stale_ignored(self):
        bus, module = build()
        pub = bus.advertise("/in", owner="sensor")
        outputs = []
        bus.subscribe("/out", lambda env: outputs.append(env), owner="sink")
        module.report_stale("shutting down")
        bus.schedule_once(ms(5), lambda now: pub.publish(Reading(1.0)), owner="sensor")
        bus.run_until(ms(20))
        assert outputs == []
        assert module.monitor_state("source") == (None, False)


class TestHeartbeat:
    def test_all_fresh_ok(self):
        bus, module = build()
        pub = bus.advertise("/in", owner="sensor")
        bus.schedule_timer(ms(10), lambda now: pub.publish(Reading(1.0)), owner="sensor")
        levels = []
        bus.subscribe(DIAG_TOPIC, lambda env: levels.append(env.payload), owner="watch",
                      queue_depth=64)
        bus.run_until(ms(100))
        assert levels
        assert all(s.level == "OK" for s in levels[1:])  # first beat may predate data

    def test_required_timeout_reports_error_naming_topic(self):
        bus, module = build(step_on_expiry=False)
        pub = bus.advertise("/in", owner="sensor")
        pub.publish(Reading(1.0))
        bus.run_until(ms(1))
        bus.run_until(ms(100))
        status = module.heartbeat_tick()
        assert status.level == "ERROR"
        assert "/in" in status.detail

    def test_optional_timeout_caps_at_warn(self):
        bus, module = build(required=False)
        pub = bus.advertise("/in", owner="sensor")
        pub.publish(Reading(1.0))  # flows once, then goes silent
        status_levels = []
        bus.subscribe(DIAG_TOPIC, lambda env: status_levels.append(env.payload.level),
                      owner="watch", queue_depth=64)
        bus.run_until(ms(100))
        assert status_levels[0] == "OK"  # within the 30 ms timeout
        assert status_levels[-1] == "WARN"
        assert "ERROR" not in status_levels

    def test_optional_never_received_stays_ok(self):
        bus, module = build(required=False)
        status = module.heartbeat_tick()
        assert status.level == "OK"

    def test_never_valid_before_first_reception(self):
        bus, module = build()
        assert module.monitor_state("source") == (None, False)
        status = module.heartbeat_tick()
        assert status.level == "ERROR"

    def test_stale_heartbeat_continues(self):
        bus, module = build()
        module.report_stale("done")
        statuses = []
        bus.subscribe(DIAG_TOPIC, lambda env: statuses.append(env.payload), owner="watch",
                      queue_depth=64)
        bus.run_until(ms(100))
        heartbeats = [s for s in statuses if s.stamp > 0]
        assert heartbeats
        assert all(s.level == "STALE" for s in heartbeats)

    def test_heartbeat_rate(self):
        bus, module = build()
        stamps = []
        bus.subscribe(DIAG_TOPIC, lambda env: stamps.append(env.payload.stamp), owner="watch",
                      queue_depth=64)
        bus.run_until(ms(100))
        assert stamps == [ms(20), ms(40), ms(60), ms(80), ms(100)]


class TestStale:
    def test_report_stale_immediate_and_idempotent(self):
        bus, module = build()
        statuses = []
        bus.subscribe(DIAG_TOPIC, lambda env: statuses.append(env.payload), owner="watch",
                      queue_depth=64)
        module.report_stale("lost all inertial inputs")
        module.report_stale("again")
        bus.run_until(ms(1))
        immediate = [s for s in statuses if s.stamp == 0]
        assert len(immediate) == 1
        assert immediate[0].level == "STALE"
        assert module.stale_detail == "lost all inertial inputs"

    def test_expiry_triggers_final_step_and_stale_chain(self):
        # A stops feeding B; B's expiry step emits one final marked-invalid
        # sample, and C (validity-checking) goes stale in that same delivery
        bus = SimBus()
        bus.register_topic(TopicSpec("/in", Reading, nominal_period=ms(10)))
        bus.register_topic(TopicSpec("/mid", Command))
        bus.register_topic(TopicSpec("/final", Command))
        params = ParamStore()

        class Producer:  # B: marks its last sample invalid when the source dies
            def step(self, inputs, params):
                if not inputs.valid("source"):
                    return Degraded(DiagnosticLevel.STALE, "source lost",
                                    outputs={"out": Command(-1.0)})
                return {"out": Command(inputs.latest("source").value)}

        class Checker:  # C: own validity check on delivered data
            def step(self, inputs, params):
                if inputs.latest("mid").value < 0:
                    return Degraded(DiagnosticLevel.STALE, "upstream invalid")
                return {"out": Command(0.0)}

        b = wrap(bus, Producer(), ModuleConfig(
            "b", inputs=(InputBinding("source", "/in", timeout=ms(15), step_on_expiry=True),),
            outputs=(OutputBinding("out", "/mid"),), trigger_input="source"), params)
        c = wrap(bus, Checker(), ModuleConfig(
            "c", inputs=(InputBinding("mid", "/mid", timeout=ms(30)),),
            outputs=(OutputBinding("out", "/final"),), trigger_input="mid"), params)

        pub = bus.advertise("/in", owner="a")

        def feed(now):
            if now <= ms(50):
                pub.publish(Reading(now * 1.0))

        bus.schedule_timer(ms(10), feed, owner="a")
        bus.run_until(ms(200))
        assert b.stale and c.stale
        assert b.stale_detail == "source lost"
        assert c.stale_detail == "upstream invalid"
        # B's final sample reaches C in the same instant B went stale
        final_mid = max(s["t_ns"] for s in bus.trace
                        if s["kind"] == "deliver" and s["topic"] == "/mid")
        assert final_mid == ms(50) + ms(15) + 1

    def test_reaction_chain_error_bound(self):
        # without a validity check, B flags ERROR no later than
        # stale_time + timeout + heartbeat period
        bus = SimBus()
        bus.register_topic(TopicSpec("/mid", Command, nominal_period=ms(10)))
        params = ParamStore()

        class Sink:
            def step(self, inputs, params):
                return None

        sink = wrap(bus, Sink(), ModuleConfig(
            "sink", inputs=(InputBinding("mid", "/mid", timeout=ms(30)),),
            heartbeat_period=ms(20)), params)
        pub = bus.advertise("/mid", owner="a")
        stop_at = ms(100)

        def feed(now):
            if now <= stop_at:
                pub.publish(Command(1.0))

        bus.schedule_timer(ms(10), feed, owner="a")
        errors = []
        bus.subscribe(DIAG_TOPIC, lambda env: errors.append(env.payload)
                      if env.payload.level == "ERROR" else None, owner="watch", queue_depth=64)
        bus.run_until(ms(300))
        assert errors
        first_error = min(s.stamp for s in errors)
        assert first_error <= stop_at + ms(30) + ms(20)
        assert first_error > stop_at + ms(30)  # not before the timeout expires
