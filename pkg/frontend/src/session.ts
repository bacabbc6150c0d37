/**
 * Console session: one WebSocket to the bridge, reconnecting with backoff.
 *
 * The session keeps the latest snapshot per stream type, flags the stream
 * stale when nothing has arrived for a second, and keeps a command log in
 * which every sent command ends in exactly one outcome: ack, reject, or
 * timeout. Acks are matched to commands in send order (the bridge answers
 * each command on the connection that sent it, in order).
 *
 * The override stream sends operator inputs at 20 Hz while engaged and an
 * explicit release when disengaged. If the transport dies instead, the
 * server-side operator timeout (250 ms) clears the override; nothing here
 * can leave it stuck.
 */

import type {
  ActionPayload,
  ClientCommand,
  DiagPayload,
  GatePayload,
  ServerMessage,
  VehicleStatePayload,
} from "./protocol.js";
import { parseServerMessage } from "./protocol.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((event: unknown) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onerror: ((event: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export type CommandOutcome = "pending" | "ack" | "reject" | "timeout";

export interface CommandRecord {
  seq: number;
  command: ClientCommand;
  sentAtMs: number;
  outcome: CommandOutcome;
  reason?: string;
  ackTNs?: number;
}

export type ConnectionState = "idle" | "connecting" | "open" | "closed";

export interface SessionOptions {
  factory: WebSocketFactory;
  ackTimeoutMs?: number;
  staleAfterMs?: number;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  operatorRateMs?: number;
  now?: () => number;
}

export interface Snapshots {
  state?: { t_ns: number; payload: VehicleStatePayload };
  diag?: { t_ns: number; payload: DiagPayload };
  action?: { t_ns: number; payload: ActionPayload };
  gate?: { t_ns: number; payload: GatePayload };
}

export interface OperatorLevers {
  throttle: number;
  brake: number;
  steering: number;
}

export class ConsoleSession {
  readonly url: string;
  state: ConnectionState = "idle";
  latest: Snapshots = {};
  commandLog: CommandRecord[] = [];
  lastMessageAtMs: number | null = null;
  lastErrorReason: string | null = null;
  reconnectAttempts = 0;

  private readonly options: Required<SessionOptions>;
  private socket: WebSocketLike | null = null;
  private pendingAcks: CommandRecord[] = [];
  private nextSeq = 1;
  private closedByUser = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private overrideTimer: ReturnType<typeof setInterval> | null = null;
  private overrideLevers: (() => OperatorLevers) | null = null;
  private listeners: Array<() => void> = [];

  constructor(url: string, options: SessionOptions) {
    this.url = url;
    this.options = {
      ackTimeoutMs: 2000,
      staleAfterMs: 1000,
      reconnectBaseMs: 250,
      reconnectMaxMs: 4000,
      operatorRateMs: 50,
      now: () => Date.now(),
      ...options,
    };
  }

  onUpdate(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  // -- connection lifecycle ---------------------------------------------

  connect(): void {
    this.closedByUser = false;
    this.open();
  }

  private open(): void {
    this.state = "connecting";
    this.notify();
    let socket: WebSocketLike;
    try {
      socket = this.options.factory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.state = "open";
      this.reconnectAttempts = 0;
      this.lastMessageAtMs = this.options.now();
      this.notify();
    };
    socket.onmessage = (event) => this.handleMessage(String(event.data));
    socket.onerror = () => undefined; // close always follows
    socket.onclose = () => {
      this.state = "closed";
      this.socket = null;
      this.stopOverride(false); // transport gone: server timeout takes over
      this.failPending("timeout", "connection closed");
      this.notify();
      if (!this.closedByUser) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.closedByUser || this.reconnectTimer !== null) return;
    const delay = Math.min(
      this.options.reconnectBaseMs * 2 ** this.reconnectAttempts,
      this.options.reconnectMaxMs,
    );
    this.reconnectAttempts += 1;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      if (!this.closedByUser) this.open();
    }, delay);
  }

  close(): void {
    this.closedByUser = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.stopOverride(false);
    this.socket?.close();
    this.socket = null;
    this.state = "closed";
    this.notify();
  }

  get connected(): boolean {
    return this.state === "open";
  }

  isStale(): boolean {
    if (!this.connected || this.lastMessageAtMs === null) return true;
    return this.options.now() - this.lastMessageAtMs > this.options.staleAfterMs;
  }

  // -- inbound -----------------------------------------------------------

  private handleMessage(raw: string): void {
    const message = parseServerMessage(raw);
    this.lastMessageAtMs = this.options.now();
    if (message === null) return;
    switch (message.type) {
      case "state":
      case "diag":
      case "action":
      case "gate":
        this.latest[message.type] = {
          t_ns: message.t_ns,
          payload: message.payload,
        } as never;
        break;
      case "ack": {
        const record = this.pendingAcks.shift();
        if (record) {
          record.outcome = message.ok ? "ack" : "reject";
          record.reason = message.reason;
          record.ackTNs = message.t_ns;
        }
        break;
      }
      case "error":
        this.lastErrorReason = message.reason;
        break;
    }
    this.notify();
  }

  private failPending(outcome: CommandOutcome, reason: string): void {
    for (const record of this.pendingAcks) {
      record.outcome = outcome;
      record.reason = reason;
    }
    this.pendingAcks = [];
  }

  // -- outbound ----------------------------------------------------------

  send(command: ClientCommand): CommandRecord | null {
    if (!this.connected || this.socket === null) {
      return null; // commands are disabled while disconnected
    }
    const record: CommandRecord = {
      seq: this.nextSeq++,
      command,
      sentAtMs: this.options.now(),
      outcome: "pending",
    };
    this.commandLog.push(record);
    this.pendingAcks.push(record);
    this.socket.send(JSON.stringify(command));
    setTimeout(() => {
      if (record.outcome === "pending") {
        record.outcome = "timeout";
        record.reason = "no acknowledgment";
        this.pendingAcks = this.pendingAcks.filter((r) => r !== record);
        this.notify();
      }
    }, this.options.ackTimeoutMs);
    this.notify();
    return record;
  }

  sendBehavior(value: "drive_fast" | "drive_slow" | "pit" | "stop" | "none") {
    return this.send({ cmd: "behavior", value });
  }

  sendFlag(value: "green" | "yellow" | "red" | "checkered" | "pit_order") {
    return this.send({ cmd: "flag", value });
  }

  sendReset() {
    return this.send({ cmd: "reset" });
  }

  sendManualMode(enable: boolean) {
    return this.send({ cmd: "manual_mode", enable });
  }

  // -- operator override stream ------------------------------------------

  get overrideActive(): boolean {
    return this.overrideTimer !== null;
  }

  startOverride(levers: () => OperatorLevers): void {
    if (this.overrideTimer !== null) return;
    this.overrideLevers = levers;
    const push = () => {
      const values = this.overrideLevers ? this.overrideLevers() : null;
      if (!values) return;
      this.send({ cmd: "operator", ...values, override: true });
    };
    push();
    this.overrideTimer = setInterval(push, this.options.operatorRateMs);
    this.notify();
  }

  stopOverride(sendRelease = true): void {
    if (this.overrideTimer !== null) {
      clearInterval(this.overrideTimer);
      this.overrideTimer = null;
    }
    this.overrideLevers = null;
    if (sendRelease && this.connected) {
      // explicit release reaches the gate immediately, faster than the
      // 250 ms server-side expiry
      this.send({ cmd: "operator", throttle: 0, brake: 0, steering: 0, override: false });
    }
    this.notify();
  }
}
