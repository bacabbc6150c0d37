#!/usr/bin/env python3
"""Run every bundled scenario and summarize the assertion outcomes."""

import sys
import time

from pitwall.harness.scenario import bundled_scenario_names, load_scenario, run_scenario


def main() -> int:
    failures = 0
    for name in bundled_scenario_names():
        scenario = load_scenario(name)
        started = time.monotonic()
        result = run_scenario(scenario, seed=0)
        elapsed = time.monotonic() - started
        verdict = "PASS" if result.passed else "FAIL"
        print(f"{name:<24} {verdict}  ({scenario.duration / 1e9:.1f} s virtual, "
              f"{elapsed * 1000:.0f} ms wall, {len(result.trace_lines)} events)")
        if not result.passed:
            failures += 1
            for line in result.report_lines():
                print("   ", line)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
