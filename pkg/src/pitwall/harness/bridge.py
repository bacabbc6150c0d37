"""Basestation bridge: JSON over WebSocket into a live paced simulation.

The simulation runs on a worker thread with virtual time paced to the wall
clock; the bridge's asyncio loop owns the WebSocket server. Outbound
telemetry (vehicle state, software state report, safety action, gate
state) is streamed to every client; inbound commands are validated,
acknowledged, and applied on the simulation thread at the next event
boundary. A malformed command gets an error response and the connection
stays open; the simulation is never exposed to client failures - in
particular a dropped socket mid-override simply lets the operator input
age out at the gate.
"""

from __future__ import annotations

import asyncio
import json
import math
import queue
import threading
from dataclasses import asdict
from typing import Any, Optional

from websockets.asyncio.server import broadcast, serve
from websockets.exceptions import ConnectionClosed

from pitwall.bus import SimTime
from pitwall.gate import GateCommandMsg, OperatorInput
from pitwall.harness.scenario import Scenario, prepare_scenario
from pitwall.harness.stack import GATE_COMMAND_TOPIC, GATE_STATE_TOPIC, OPERATOR_TOPIC, Stack
from pitwall.harness.vehicle import TRUTH_TOPIC
from pitwall.orchestration import (
    ACTION_TOPIC,
    RACE_FLAG_TOPIC,
    REPORT_TOPIC,
    TEAM_BEHAVIOR_TOPIC,
    BehaviorRequest,
    BehaviorRequestMsg,
    RaceFlag,
    RaceFlagMsg,
)

BEHAVIOR_VALUES = {b.value for b in BehaviorRequest}
FLAG_VALUES = {f.value for f in RaceFlag}

STREAM_TOPICS = (
    (TRUTH_TOPIC, "state"),
    (REPORT_TOPIC, "diag"),
    (ACTION_TOPIC, "action"),
    (GATE_STATE_TOPIC, "gate"),
)


class Bridge:
    """Couples one stack to one WebSocket endpoint."""

    def __init__(self, stack: Stack, duration: SimTime):
        self.stack = stack
        self.duration = duration
        self.outbound: "queue.Queue[str]" = queue.Queue()
        self.commands: "queue.Queue[dict]" = queue.Queue()
        self.latest_speed = 0.0
        self.standstill_threshold = stack.params.get_value("gate.standstill_mps")
        self._pubs = {
            "behavior": stack.bus.advertise(TEAM_BEHAVIOR_TOPIC, "bridge"),
            "flag": stack.bus.advertise(RACE_FLAG_TOPIC, "bridge"),
            "operator": stack.bus.advertise(OPERATOR_TOPIC, "bridge"),
            "gate": stack.bus.advertise(GATE_COMMAND_TOPIC, "bridge"),
        }
        for topic, kind in STREAM_TOPICS:
            stack.bus.subscribe(topic, self._streamer(kind), owner="bridge", queue_depth=64)
        stack.bus.add_boundary_hook(self._pump_commands)
        self.sim_done = threading.Event()

    # -- simulation thread side -------------------------------------------

    def _streamer(self, kind: str):
        def on_envelope(envelope) -> None:
            payload = asdict(envelope.payload)
            if kind == "state":
                self.latest_speed = envelope.payload.speed
            message = json.dumps(
                {"type": kind, "t_ns": envelope.publish_stamp, "payload": payload},
                separators=(",", ":"))
            self.outbound.put(message)

        return on_envelope

    def _pump_commands(self, now: SimTime) -> None:
        while True:
            try:
                command = self.commands.get_nowait()
            except queue.Empty:
                return
            self._apply(command, now)

    def _apply(self, command: dict, now: SimTime) -> None:
        kind = command["cmd"]
        if kind == "behavior":
            self._pubs["behavior"].publish(BehaviorRequestMsg(command["value"], "team"))
        elif kind == "flag":
            self._pubs["flag"].publish(RaceFlagMsg(command["value"]))
        elif kind == "operator":
            self._pubs["operator"].publish(OperatorInput(
                command.get("throttle", 0.0), command.get("brake", 0.0),
                command.get("steering", 0.0), command.get("override", False), stamp=now))
        elif kind == "reset":
            self._pubs["gate"].publish(GateCommandMsg("reset"))
        elif kind == "manual_mode":
            self._pubs["gate"].publish(
                GateCommandMsg("manual_on" if command.get("enable") else "manual_off"))

    def run_simulation(self) -> None:
        try:
            self.stack.bus.run_until(self.duration)
        finally:
            if self.stack.writer is not None:
                self.stack.writer.close()
            self.sim_done.set()

    # -- asyncio side ------------------------------------------------------

    def validate(self, command: dict) -> Optional[str]:
        """Returns a rejection reason, or None when the command is acceptable."""
        kind = command.get("cmd")
        if kind == "behavior":
            if command.get("value") not in BEHAVIOR_VALUES:
                return f"unknown behavior: {command.get('value')!r}"
        elif kind == "flag":
            if command.get("value") not in FLAG_VALUES:
                return f"unknown flag: {command.get('value')!r}"
        elif kind == "operator":
            for field_name in ("throttle", "brake", "steering"):
                value = command.get(field_name, 0.0)
                if not isinstance(value, (int, float)) or not math.isfinite(value):
                    return f"operator.{field_name} must be a finite number"
            if not isinstance(command.get("override", False), bool):
                return "operator.override must be a boolean"
        elif kind == "reset":
            if self.latest_speed >= self.standstill_threshold:
                return f"not at standstill ({self.latest_speed:.2f} m/s)"
        elif kind == "manual_mode":
            if not isinstance(command.get("enable"), bool):
                return "manual_mode.enable must be a boolean"
            if command["enable"] and self.latest_speed >= self.standstill_threshold:
                return f"not at standstill ({self.latest_speed:.2f} m/s)"
        else:
            return f"unknown command: {kind!r}"
        return None

    async def handle_client(self, websocket) -> None:
        try:
            async for raw in websocket:
                try:
                    command = json.loads(raw)
                    if not isinstance(command, dict):
                        raise ValueError("command must be a JSON object")
                except (json.JSONDecodeError, ValueError, UnicodeDecodeError) as exc:
                    await websocket.send(json.dumps(
                        {"type": "error", "reason": f"malformed command: {exc}"}))
                    continue
                reason = self.validate(command)
                if reason is not None:
                    await websocket.send(json.dumps(
                        {"type": "ack", "cmd": command.get("cmd"), "ok": False,
                         "reason": reason, "t_ns": self.stack.bus.now}))
                    continue
                self.commands.put(command)
                await websocket.send(json.dumps(
                    {"type": "ack", "cmd": command["cmd"], "ok": True,
                     "t_ns": self.stack.bus.now}))
        except ConnectionClosed:
            return  # the gate's operator timeout handles a drop mid-override

    async def run_server(self, port: int, ready: Optional[threading.Event] = None,
                         port_box: Optional[list] = None) -> None:
        sim_thread = threading.Thread(target=self.run_simulation, name="sim", daemon=True)
        async with serve(self.handle_client, "127.0.0.1", port) as server:
            bound_port = server.sockets[0].getsockname()[1] if server.sockets else port
            print(f"pitwall bridge listening on ws://127.0.0.1:{bound_port}", flush=True)
            if port_box is not None:
                port_box.append(bound_port)
            if ready is not None:
                ready.set()
            sim_thread.start()
            try:
                while not self.sim_done.is_set():
                    await self._flush_outbound(server)
                    await asyncio.sleep(0.005)
                await self._flush_outbound(server)
            finally:
                server.close()
        sim_thread.join(timeout=5)

    async def _flush_outbound(self, server) -> None:
        messages = []
        while True:
            try:
                messages.append(self.outbound.get_nowait())
            except queue.Empty:
                break
        if not messages:
            return
        connections = server.connections if hasattr(server, "connections") else []
        for message in messages:
            broadcast(connections, message)


def serve_scenario(scenario: Scenario, port: int, seed: int = 0,
                   extra_param_docs: Optional[list[str]] = None,
                   log_path=None, ready: Optional[threading.Event] = None,
                   port_box: Optional[list] = None,
                   bridge_box: Optional[list] = None) -> int:
    """Blocking entry point: paced simulation plus WebSocket endpoint."""
    stack, _data = prepare_scenario(scenario, seed=seed, log_path=log_path,
                                    extra_param_docs=extra_param_docs, paced=True)
    bridge = Bridge(stack, scenario.duration)
    if bridge_box is not None:
        bridge_box.append(bridge)
    try:
        asyncio.run(bridge.run_server(port, ready=ready, port_box=port_box))
    except KeyboardInterrupt:
        stack.bus.request_stop()
    return 0
