"""Bridge protocol against a live paced simulation.

One server session exercises the full console surface: streaming, behavior
commands, rejection paths, operator override, and override expiry after a
dropped connection.
"""

import asyncio
import json
import threading

import pytest
from websockets.asyncio.client import connect

from pitwall.harness.bridge import serve_scenario
from pitwall.harness.scenario import scenario_from_dict


def start_server(duration_ms=40_000, seed=0):
    scenario = scenario_from_dict({
        "name": "bridge_test", "duration_ms": duration_ms,
        "script": [{"at_ms": 0, "flag": "green"}],
    })
    ready = threading.Event()
    port_box: list = []
    bridge_box: list = []
    thread = threading.Thread(
        target=serve_scenario, args=(scenario,),
        kwargs=dict(port=0, seed=seed, ready=ready, port_box=port_box,
                    bridge_box=bridge_box),
        daemon=True)
    thread.start()
    assert ready.wait(10), "bridge did not come up"
    return port_box[0], bridge_box[0], thread


async def next_of(ws, kind, *, predicate=lambda msg: True, timeout=15.0):
    loop = asyncio.get_event_loop()
    deadline = loop.time() + timeout
    while True:
        remaining = deadline - loop.time()
        if remaining <= 0:
            raise AssertionError(f"timed out waiting for {kind}")
        raw = await asyncio.wait_for(ws.recv(), timeout=remaining)
        msg = json.loads(raw)
        if msg.get("type") == kind and predicate(msg):
            return msg


def test_console_protocol_end_to_end():
    port, bridge, thread = start_server()
    try:
        asyncio.run(_drive_console(port))
    finally:
        bridge.stack.bus.request_stop()
        thread.join(timeout=10)


async def _drive_console(port):
    async with connect(f"ws://127.0.0.1:{port}") as ws:
        # all four stream types arrive
        await next_of(ws, "state")
        await next_of(ws, "diag")
        await next_of(ws, "action")
        await next_of(ws, "gate")

        # malformed input: error response, connection stays usable
        await ws.send("{not json")
        error = await next_of(ws, "error")
        assert "malformed" in error["reason"]

        # unknown flag value rejected at the bridge
        await ws.send(json.dumps({"cmd": "flag", "value": "purple"}))
        ack = await next_of(ws, "ack")
        assert ack["ok"] is False

        # wait until the car is moving, then command a stop
        await next_of(ws, "state", predicate=lambda m: m["payload"]["speed"] > 5.0)
        await ws.send(json.dumps({"cmd": "behavior", "value": "stop"}))
        ack = await next_of(ws, "ack", predicate=lambda m: m.get("cmd") == "behavior")
        assert ack["ok"] is True
        safe_stop = await next_of(
            ws, "action", predicate=lambda m: m["payload"]["action"] == "SAFE_STOP")
        assert safe_stop["t_ns"] - ack["t_ns"] <= 100_000_000  # within 100 ms virtual

        # reset is refused while the vehicle still moves
        await next_of(ws, "state", predicate=lambda m: m["payload"]["speed"] > 1.0)
        await ws.send(json.dumps({"cmd": "reset"}))
        ack = await next_of(ws, "ack", predicate=lambda m: m.get("cmd") == "reset")
        assert ack["ok"] is False
        assert "standstill" in ack["reason"]

        # back to racing for the override test
        await ws.send(json.dumps({"cmd": "behavior", "value": "drive_fast"}))
        await next_of(ws, "ack")
        await next_of(ws, "state", predicate=lambda m: m["payload"]["speed"] > 5.0)

        # second connection streams a brake override at 20 Hz, then drops
        override_ws = await connect(f"ws://127.0.0.1:{port}")
        stop_streaming = asyncio.Event()

        async def stream_override():
            while not stop_streaming.is_set():
                await override_ws.send(json.dumps(
                    {"cmd": "operator", "brake": 1.0, "override": True}))
                await asyncio.sleep(0.05)

        streamer = asyncio.create_task(stream_override())
        engaged = await next_of(
            ws, "gate",
            predicate=lambda m: m["payload"]["mode"] == "manual_override_longitudinal")
        assert engaged["payload"]["brake_pressure"] > 0.0

        # kill the connection mid-override: the server-side operator timeout
        # must clear the override without any explicit release message
        stop_streaming.set()
        streamer.cancel()
        await override_ws.close()
        released = await next_of(
            ws, "gate", predicate=lambda m: m["payload"]["mode"] == "autonomous")
        assert released["t_ns"] - engaged["t_ns"] <= 700_000_000
        # the gate held the override for at most the 250 ms operator timeout
        # plus one cycle after the final operator message aged out


def test_reject_unknown_command():
    port, bridge, thread = start_server(duration_ms=15_000)
    try:
        async def run():
            async with connect(f"ws://127.0.0.1:{port}") as ws:
                await ws.send(json.dumps({"cmd": "warp"}))
                ack = await next_of(ws, "ack")
                assert ack["ok"] is False
                assert "unknown command" in ack["reason"]

        asyncio.run(run())
    finally:
        bridge.stack.bus.request_stop()
        thread.join(timeout=10)
