"""Post-hoc latency and jitter analysis over recorded message stamps.

Enforced per-publisher stamping makes this possible without a tracing
framework: envelopes along a processing chain are matched by causality
(the latest upstream envelope at or before each downstream stamp), giving
per-hop and end-to-end latency. Inter-arrival jitter of the chain's final
topic is measured as the deviation of each arrival from the nearest
multiple of the declared reference period, which recovers the injected
timer jitter directly and is exactly zero for an undisturbed virtual-time
run.
"""

from __future__ import annotations

import bisect
import statistics
from dataclasses import dataclass
from typing import Optional

from pitwall.bus import SimBus, SimTime, StampedEnvelope, TopicSpec
from pitwall.tsl import EnvelopeRecord, read_log

MIN_SAMPLES = 100


class LatencyError(Exception):
    pass


class MissingTopicError(LatencyError):
    pass


class InsufficientSamplesError(LatencyError):
    pass


@dataclass(frozen=True)
class LatencyStats:
    count: int
    min_ns: int
    mean_ns: float
    max_ns: int

    @staticmethod
    def of(samples: list[int]) -> "LatencyStats":
        return LatencyStats(len(samples), min(samples),
                            statistics.fmean(samples), max(samples))

    def to_dict(self) -> dict:
        return {"count": self.count, "min_ns": self.min_ns,
                "mean_ns": self.mean_ns, "max_ns": self.max_ns}


@dataclass(frozen=True)
class InterArrivalStats:
    reference_period_ns: int
    count: int
    max_abs_deviation_ns: int
    std_deviation_ns: float

    def to_dict(self) -> dict:
        return {"reference_period_ns": self.reference_period_ns, "count": self.count,
                "max_abs_deviation_ns": self.max_abs_deviation_ns,
                "std_deviation_ns": self.std_deviation_ns}


@dataclass(frozen=True)
class ChainLatencyReport:
    chain: tuple[str, ...]
    per_hop: tuple[LatencyStats, ...]
    end_to_end: LatencyStats
    inter_arrival: InterArrivalStats

    def to_dict(self) -> dict:
        return {
            "chain": list(self.chain),
            "per_hop": [s.to_dict() for s in self.per_hop],
            "end_to_end": self.end_to_end.to_dict(),
            "inter_arrival": self.inter_arrival.to_dict(),
        }


def analyze_stamps(stamps_by_topic: dict[str, list[SimTime]], chain: list[str],
                   reference_period: SimTime) -> ChainLatencyReport:
    """Pure analysis over per-topic publish stamps (must be sorted)."""
    for topic in chain:
        if topic not in stamps_by_topic or not stamps_by_topic[topic]:
            raise MissingTopicError(topic)
    final = stamps_by_topic[chain[-1]]
    if len(final) < MIN_SAMPLES:
        raise InsufficientSamplesError(
            f"{len(final)} samples on {chain[-1]}, need {MIN_SAMPLES}")

    # walk each final envelope back to its root cause, hop by hop
    per_hop_samples: list[list[int]] = [[] for _ in chain[:-1]]
    end_to_end: list[int] = []
    for stamp in final:
        cursor = stamp
        complete = True
        for hop_index in range(len(chain) - 2, -1, -1):
            upstream = _latest_at_or_before(stamps_by_topic[chain[hop_index]], cursor)
            if upstream is None:
                complete = False
                break
            per_hop_samples[hop_index].append(cursor - upstream)
            cursor = upstream
        if complete:
            end_to_end.append(stamp - cursor)
    if not end_to_end:
        raise InsufficientSamplesError("no complete chains found")

    deviations = [s - round(s / reference_period) * reference_period for s in final]
    inter = InterArrivalStats(
        reference_period_ns=reference_period,
        count=len(deviations),
        max_abs_deviation_ns=max(abs(d) for d in deviations),
        std_deviation_ns=statistics.pstdev(deviations),
    )
    return ChainLatencyReport(
        chain=tuple(chain),
        per_hop=tuple(LatencyStats.of(s) for s in per_hop_samples),
        end_to_end=LatencyStats.of(end_to_end),
        inter_arrival=inter,
    )


def _latest_at_or_before(stamps: list[SimTime], t: SimTime) -> Optional[SimTime]:
    index = bisect.bisect_right(stamps, t)
    return stamps[index - 1] if index else None


def analyze_chain(log_path, chain: list[str],
                  reference_period: SimTime) -> ChainLatencyReport:
    """Analyze a recorded log file along a topic chain."""
    stamps: dict[str, list[SimTime]] = {topic: [] for topic in chain}
    for _, record in read_log(log_path):
        if isinstance(record, EnvelopeRecord) and record.topic in stamps:
            stamps[record.topic].append(record.stamp)
    for series in stamps.values():
        series.sort()
    return analyze_stamps(stamps, chain, reference_period)


# ----------------------------------------------------------------------
# relay chain: one timer-driven root, subscription-triggered republishers
# ----------------------------------------------------------------------

@dataclass
class ChainTick:
    index: int
    stamp: SimTime = 0


def build_relay_chain(bus: SimBus, hops: int, period: SimTime,
                      jitter_sigma: SimTime = 0,
                      topic_prefix: str = "/chain/hop") -> list[str]:
    """A high-frequency communication chain: the root node publishes on a
    timer (optionally jittered), every other node republishes directly from
    its subscription. Returns the topic names in chain order."""
    if hops < 1:
        raise LatencyError("need at least one hop")
    topics = [f"{topic_prefix}{i}" for i in range(hops + 1)]
    for name in topics:
        bus.register_topic(TopicSpec(name, ChainTick, nominal_period=period))
    root_pub = bus.advertise(topics[0], owner="chain_root")

    counter = {"n": 0}

    def root_tick(now: SimTime) -> None:
        counter["n"] += 1
        root_pub.publish(ChainTick(counter["n"], now))

    bus.schedule_timer(period, root_tick, owner="chain_root", jitter_sigma=jitter_sigma)

    for i in range(hops):
        relay_pub = bus.advertise(topics[i + 1], owner=f"chain_relay{i}")

        def relay(envelope: StampedEnvelope, pub=relay_pub) -> None:
            pub.publish(ChainTick(envelope.payload.index, envelope.publish_stamp))

        bus.subscribe(topics[i], relay, owner=f"chain_relay{i}")
    return topics
