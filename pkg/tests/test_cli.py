"""CLI surface: subcommands, exit codes, output formats."""

import json

import pytest

from pitwall.harness.cli import main, tslcat_entry


def test_run_passing_scenario(capsys, tmp_path):
    code = main(["run", "operator_override", "--seed", "5",
                 "--trace", str(tmp_path / "trace.jsonl"),
                 "--log", str(tmp_path / "run.tsl")])
    out = capsys.readouterr().out
    assert code == 0
    assert "[PASS]" in out
    assert "scenario operator_override: PASS" in out
    assert (tmp_path / "trace.jsonl").exists()
    assert (tmp_path / "run.tsl").exists()


def test_run_missing_scenario_usage_error(capsys):
    code = main(["run", "missing.json"])
    assert code == 2
    assert "pitwall:" in capsys.readouterr().err


def test_run_failing_assertion_exit_one(tmp_path, capsys):
    doc = {
        "name": "impossible", "duration_ms": 500,
        "assertions": [{"type": "speed_at_least", "mps": 50.0, "by_ms": 400}],
    }
    path = tmp_path / "impossible.json"
    path.write_text(json.dumps(doc))
    code = main(["run", str(path)])
    assert code == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_params_flag_applies_overrides(tmp_path, capsys):
    # a brake-pressure override must show up in the gate output level
    doc = {
        "name": "params_check", "duration_ms": 3000,
        "script": [{"at_ms": 0, "flag": "green"}],
        "faults": [{"kind": "crash_module", "target": "imu_driver", "at_ms": 1000}],
        "assertions": [{"type": "gate_brake_at_least", "bar": 55.0,
                        "after_ms": 1000, "by_ms": 1100}],
    }
    scenario_path = tmp_path / "params_check.json"
    scenario_path.write_text(json.dumps(doc))
    base = tmp_path / "base.json"
    base.write_text('{"gate.brake_pressure_bar": 45.0}')
    override = tmp_path / "override.json"
    override.write_text('{"gate.brake_pressure_bar": 55.0}')
    # later files win
    code = main(["run", str(scenario_path), "--params", str(base),
                 "--params", str(override)])
    assert code == 0, capsys.readouterr().out


def test_params_unknown_key_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"typo.name": 1}')
    code = main(["run", "nominal_lap", "--params", str(bad)])
    assert code == 2
    assert "typo.name" in capsys.readouterr().err


def test_analyze_prints_json_report(tmp_path, capsys):
    from pitwall.bus import SimBus, ms, sec
    from pitwall.harness.latency import build_relay_chain
    from pitwall.tsl import EnvelopeRecorder, LogWriter

    bus = SimBus(seed=2)
    topics = build_relay_chain(bus, hops=2, period=ms(10))
    log = tmp_path / "chain.tsl"
    writer = LogWriter(log)
    EnvelopeRecorder(bus, topics, writer)
    bus.run_until(sec(2))
    writer.close()

    code = main(["analyze", str(log), "--chain", ",".join(topics), "--period-ms", "10"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["inter_arrival"]["max_abs_deviation_ns"] == 0


def test_analyze_missing_topic_usage_error(tmp_path, capsys):
    from pitwall.tsl import LogWriter
    log = tmp_path / "empty.tsl"
    LogWriter(log).close()
    code = main(["analyze", str(log), "--chain", "/a,/b", "--period-ms", "10"])
    assert code == 2


def test_tslcat_csv(tmp_path, capsys):
    from pitwall.tsl import LogWriter, SignalSchema, make_frame
    log = tmp_path / "x.tsl"
    writer = LogWriter(log)
    schema = SignalSchema.create("ctl", ["a", "b"])
    writer.write_schema(schema)
    writer.write_frame(make_frame(schema, [1.5, -2.0], stamp=1000))
    writer.close()

    code = main(["tslcat", str(log)])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert out[0] == "t_ns,a,b"
    assert out[1] == "1000,1.5,-2.0"

    code = main(["tslcat", str(log), "--schemas"])
    out = capsys.readouterr().out
    assert code == 0
    assert "ctl" in out and "[a,b]" in out


def test_tslcat_standalone_entry(tmp_path, capsys):
    from pitwall.tsl import LogWriter
    log = tmp_path / "empty.tsl"
    LogWriter(log).close()
    assert tslcat_entry([str(log)]) == 0


def test_scenarios_listing(capsys):
    code = main(["scenarios"])
    out = capsys.readouterr().out
    assert code == 0
    assert "fig6_imu_loss" in out
