#!/usr/bin/env python3
"""Record a full scenario run, replay the log into a consumer-only bus, and
check that a downstream consumer sees the identical message sequence."""

import sys
import tempfile
from pathlib import Path

from pitwall.bus import SimBus
from pitwall.harness.scenario import load_scenario, run_scenario
from pitwall.harness.stack import load_wiring, register_consumer_topics
from pitwall.tsl import replay


def main() -> int:
    scenario = load_scenario("fig6_imu_loss")
    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "run.tsl"
        original = run_scenario(scenario, seed=5, log_path=log)
        original_actions = [(t, action) for t, action, _ in original.data.actions]

        bus = SimBus()
        register_consumer_topics(bus, load_wiring(scenario.wiring))
        replayed_actions = []
        bus.subscribe("/orchestration/action",
                      lambda env: replayed_actions.append(
                          (env.publish_stamp, env.payload.action)),
                      owner="consumer", queue_depth=64)
        count = replay(log, bus)
        bus.run_until(scenario.duration)

        match = replayed_actions == original_actions
        print(f"replayed {count} envelopes; "
              f"{len(replayed_actions)} safety actions, "
              f"sequence identical: {match}")
        return 0 if match else 1


if __name__ == "__main__":
    sys.exit(main())
