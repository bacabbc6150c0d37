"""Command-line entry points for the simulation harness.

Subcommands: ``run`` executes a scenario and reports per-assertion results
(exit 0 on pass, 1 on assertion failure, 2 on usage errors), ``serve``
runs a scenario paced to wall time with the basestation bridge attached,
``analyze`` computes a chain latency report from a recorded log, and
``tslcat`` prints logged signal frames as CSV.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from pitwall.bus import ms
from pitwall.harness.latency import LatencyError, analyze_chain
from pitwall.params import ParamError
from pitwall.harness.scenario import (
    ScenarioError,
    bundled_scenario_names,
    load_scenario,
    run_scenario,
)
from pitwall.tsl import TslError, iter_named_frames, list_schemas

USAGE_ERROR = 2


def _read_param_files(paths: list[str]) -> list[str]:
    docs = []
    for path in paths:
        docs.append(Path(path).read_text(encoding="utf-8"))
    return docs


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_scenario(
        scenario,
        seed=args.seed,
        log_path=args.log,
        trace_path=args.trace,
        extra_param_docs=_read_param_files(args.params),
    )
    for line in result.report_lines():
        print(line)
    return 0 if result.passed else 1


def cmd_serve(args) -> int:
    from pitwall.harness.bridge import serve_scenario  # lazy: pulls in asyncio/websockets

    scenario = load_scenario(args.scenario)
    try:
        return serve_scenario(scenario, port=args.port, seed=args.seed,
                              extra_param_docs=_read_param_files(args.params),
                              log_path=args.log)
    except OSError as exc:  # typically: port already in use
        print(f"pitwall serve: {exc}", file=sys.stderr)
        return USAGE_ERROR


def cmd_analyze(args) -> int:
    chain = [t.strip() for t in args.chain.split(",") if t.strip()]
    if len(chain) < 2:
        print("analyze: need at least two topics in --chain", file=sys.stderr)
        return USAGE_ERROR
    report = analyze_chain(args.log, chain, reference_period=ms(args.period_ms))
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_tslcat(args) -> int:
    if args.schemas:
        for schema in list_schemas(args.log):
            names = ",".join(schema.signal_names)
            print(f"{schema.schema_id:016x} {schema.source_module} [{names}]")
        return 0
    columns: list[str] = []
    rows = []
    for stamp, named in iter_named_frames(args.log):
        for name in named:
            if name not in columns:
                columns.append(name)
        rows.append((stamp, named))
    print(",".join(["t_ns"] + columns))
    for stamp, named in rows:
        cells = [str(stamp)] + [repr(named[c]) if c in named else "" for c in columns]
        print(",".join(cells))
    return 0


def cmd_scenarios(_args) -> int:
    for name in bundled_scenario_names():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pitwall",
                                     description="deterministic autonomy-stack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and evaluate its assertions")
    run.add_argument("scenario", help="bundled scenario name or path to a scenario JSON")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--params", action="append", default=[],
                     help="parameter override file (repeatable; later files win)")
    run.add_argument("--trace", default=None, help="write the event trace (JSON lines)")
    run.add_argument("--log", default=None, help="write the telemetry log (TSL)")
    run.set_defaults(fn=cmd_run)

    serve = sub.add_parser("serve", help="run paced to wall time with the console bridge")
    serve.add_argument("scenario")
    serve.add_argument("--port", type=int, required=True)
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--params", action="append", default=[])
    serve.add_argument("--log", default=None)
    serve.set_defaults(fn=cmd_serve)

    analyze = sub.add_parser("analyze", help="chain latency report from a recorded log")
    analyze.add_argument("log")
    analyze.add_argument("--chain", required=True, help="comma-separated topic chain")
    analyze.add_argument("--period-ms", type=float, required=True,
                         help="reference period of the chain's final topic")
    analyze.set_defaults(fn=cmd_analyze)

    tslcat = sub.add_parser("tslcat", help="print logged signal frames as CSV")
    tslcat.add_argument("log")
    tslcat.add_argument("--schemas", action="store_true", help="list schemas instead")
    tslcat.set_defaults(fn=cmd_tslcat)

    scenarios = sub.add_parser("scenarios", help="list bundled scenarios")
    scenarios.set_defaults(fn=cmd_scenarios)
    return parser


def _mute_broken_pipe() -> int:
    # downstream closed (e.g. piped into head); not an error
    os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return _mute_broken_pipe()
    except (ScenarioError, TslError, LatencyError, ParamError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"pitwall: {exc}", file=sys.stderr)
        return USAGE_ERROR


def tslcat_entry(argv=None) -> int:
    """Standalone ``tslcat <file> [--schemas]`` entry point."""
    parser = argparse.ArgumentParser(prog="tslcat")
    parser.add_argument("log")
    parser.add_argument("--schemas", action="store_true")
    args = parser.parse_args(argv)
    try:
        return cmd_tslcat(args)
    except BrokenPipeError:
        return _mute_broken_pipe()
    except (TslError, FileNotFoundError) as exc:
        print(f"tslcat: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
