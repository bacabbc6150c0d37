/**
 * Wire types for the simulation bridge: JSON over WebSocket.
 *
 * Server messages stream continuously (state / diag / action / gate plus
 * per-command acks); client messages are commands. Parsing is defensive:
 * anything that does not match the envelope shape is reported as malformed
 * rather than thrown across the UI.
 */

export type DiagnosticLevel = "OK" | "WARN" | "ERROR" | "STALE";

export interface VehicleStatePayload {
  position_s: number;
  lateral_offset: number;
  speed: number;
  brake_pressure_applied: number;
  throttle_applied: number;
  stamp: number;
}

export interface DiagPayload {
  cycle: number;
  stamp: number;
  states: Record<string, DiagnosticLevel>;
  details: Record<string, string>;
}

export interface ActionPayload {
  action: "NOMINAL" | "SAFE_STOP" | "EMERGENCY_STOP" | "HARD_EMERGENCY";
  reason: string;
  speed_cap_mps: number | null;
  use_emergency_trajectory: boolean;
  stamp: number;
}

export interface GatePayload {
  mode: "autonomous" | "hard_emergency" | "manual_override_longitudinal" | "manual_driving";
  throttle: number;
  brake_pressure: number;
  steering_angle: number;
  he_latched: boolean;
  stamp: number;
}

export type StreamMessage =
  | { type: "state"; t_ns: number; payload: VehicleStatePayload }
  | { type: "diag"; t_ns: number; payload: DiagPayload }
  | { type: "action"; t_ns: number; payload: ActionPayload }
  | { type: "gate"; t_ns: number; payload: GatePayload };

export interface AckMessage {
  type: "ack";
  cmd: string;
  ok: boolean;
  reason?: string;
  t_ns: number;
}

export interface ErrorMessage {
  type: "error";
  reason: string;
}

export type ServerMessage = StreamMessage | AckMessage | ErrorMessage;

export type BehaviorValue = "drive_fast" | "drive_slow" | "pit" | "stop" | "none";
export type FlagValue = "green" | "yellow" | "red" | "checkered" | "pit_order";

export interface OperatorCommand {
  cmd: "operator";
  throttle: number;
  brake: number;
  steering: number;
  override: boolean;
}

export type ClientCommand =
  | { cmd: "behavior"; value: BehaviorValue }
  | { cmd: "flag"; value: FlagValue }
  | OperatorCommand
  | { cmd: "reset" }
  | { cmd: "manual_mode"; enable: boolean };

const STREAM_TYPES = new Set(["state", "diag", "action", "gate"]);

export function parseServerMessage(raw: string): ServerMessage | null {
  let value: unknown;
  try {
    value = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null) return null;
  const msg = value as Record<string, unknown>;
  if (msg.type === "ack" && typeof msg.cmd === "string" && typeof msg.ok === "boolean") {
    return msg as unknown as AckMessage;
  }
  if (msg.type === "error" && typeof msg.reason === "string") {
    return msg as unknown as ErrorMessage;
  }
  if (
    typeof msg.type === "string" &&
    STREAM_TYPES.has(msg.type) &&
    typeof msg.t_ns === "number" &&
    typeof msg.payload === "object" &&
    msg.payload !== null
  ) {
    return msg as unknown as StreamMessage;
  }
  return null;
}
