/**
 * Pure view models: everything the DOM shows is derived here from the
 * latest snapshots, so rendering is snapshot-testable without a browser.
 */

import type { ActionPayload, DiagPayload, DiagnosticLevel, GatePayload } from "./protocol.js";

export const LEVEL_SEVERITY: Record<DiagnosticLevel, number> = {
  OK: 0,
  WARN: 1,
  ERROR: 2,
  STALE: 3,
};

export const LEVEL_COLORS: Record<DiagnosticLevel, string> = {
  OK: "#2e7d32",
  WARN: "#f9a825",
  ERROR: "#c62828",
  STALE: "#6a1b9a",
};

export interface DiagRow {
  moduleId: string;
  level: DiagnosticLevel;
  detail: string;
  ageMs: number;
  color: string;
}

/** Grid rows for the latest software state report: one row per module,
 * worst level first, ties alphabetical. Age is measured against the
 * report's own stamp. */
export function buildDiagnosticsView(report: DiagPayload, nowNs: number): DiagRow[] {
  const rows = Object.keys(report.states).map((moduleId) => {
    const level = report.states[moduleId];
    return {
      moduleId,
      level,
      detail: report.details[moduleId] ?? "",
      ageMs: Math.max(0, (nowNs - report.stamp) / 1e6),
      color: LEVEL_COLORS[level],
    };
  });
  rows.sort((a, b) =>
    LEVEL_SEVERITY[b.level] - LEVEL_SEVERITY[a.level] ||
    a.moduleId.localeCompare(b.moduleId));
  return rows;
}

export const ACTION_COLORS: Record<ActionPayload["action"], string> = {
  NOMINAL: "#2e7d32",
  SAFE_STOP: "#f9a825",
  EMERGENCY_STOP: "#ef6c00",
  HARD_EMERGENCY: "#c62828",
};

export interface ActionView {
  label: string;
  reason: string;
  color: string;
  speedCap: string;
}

export function buildActionView(action: ActionPayload | undefined): ActionView {
  if (!action) {
    return { label: "-", reason: "no data", color: "#555", speedCap: "" };
  }
  const cap = action.speed_cap_mps === null ? "uncapped" : `${action.speed_cap_mps} m/s`;
  return {
    label: action.action.replace("_", " "),
    reason: action.reason,
    color: ACTION_COLORS[action.action],
    speedCap: cap,
  };
}

export interface GateView {
  mode: string;
  heLatched: boolean;
  brakeBar: number;
  throttlePct: number;
}

export function buildGateView(gate: GatePayload | undefined): GateView {
  if (!gate) return { mode: "-", heLatched: false, brakeBar: 0, throttlePct: 0 };
  return {
    mode: gate.mode.replaceAll("_", " "),
    heLatched: gate.he_latched,
    brakeBar: gate.brake_pressure,
    throttlePct: gate.throttle * 100,
  };
}

export function formatSpeed(mps: number): string {
  return `${mps.toFixed(1)} m/s (${(mps * 3.6).toFixed(0)} km/h)`;
}
