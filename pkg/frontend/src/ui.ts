/**
 * DOM rendering and control wiring. All state lives in the session; this
 * layer re-renders from the latest snapshots whenever the session updates
 * (throttled to animation frames) and forwards control interactions.
 */

import type { ConsoleSession } from "./session.js";
import {
  buildActionView,
  buildDiagnosticsView,
  buildGateView,
  formatSpeed,
} from "./views.js";

export function mountConsole(root: HTMLElement, session: ConsoleSession): void {
  root.innerHTML = `
    <header>
      <h1>pitwall console</h1>
      <span id="conn" class="badge"></span>
      <span id="stale" class="badge stale hidden">STREAM STALE</span>
    </header>
    <section class="strip">
      <div class="panel"><h2>safety action</h2><div id="action" class="big"></div>
        <div id="action-reason" class="dim"></div><div id="action-cap" class="dim"></div></div>
      <div class="panel"><h2>gate</h2><div id="gate-mode" class="big"></div>
        <div id="gate-latch" class="dim"></div></div>
      <div class="panel"><h2>vehicle</h2><div id="speed" class="big"></div>
        <label>throttle <progress id="throttle" max="100" value="0"></progress></label>
        <label>brake <progress id="brake" max="60" value="0"></progress>
          <span id="brake-bar" class="dim"></span></label></div>
    </section>
    <section class="strip">
      <div class="panel"><h2>behavior</h2>
        <button data-behavior="drive_fast">drive fast</button>
        <button data-behavior="drive_slow">drive slow</button>
        <button data-behavior="pit">pit</button>
        <button data-behavior="stop">stop</button></div>
      <div class="panel"><h2>race flags</h2>
        <button data-flag="green">green</button>
        <button data-flag="yellow">yellow</button>
        <button data-flag="red">red</button>
        <button data-flag="checkered">checkered</button>
        <button data-flag="pit_order">pit order</button></div>
      <div class="panel"><h2>manual intervention</h2>
        <label><input type="checkbox" id="override-toggle"> longitudinal override</label>
        <label>brake <input type="range" id="op-brake" min="0" max="100" value="0"></label>
        <label>throttle <input type="range" id="op-throttle" min="0" max="100" value="0"></label>
        <label><input type="checkbox" id="manual-toggle"> manual driving mode</label>
        <button id="reset" class="danger">reset hard emergency</button></div>
    </section>
    <section class="strip">
      <div class="panel grow"><h2>module diagnostics</h2>
        <table id="diag"><thead><tr>
          <th>module</th><th>level</th><th>detail</th><th>age</th>
        </tr></thead><tbody></tbody></table></div>
      <div class="panel"><h2>command log</h2><ul id="cmdlog"></ul></div>
    </section>`;

  const el = (id: string) => root.querySelector(`#${id}`) as HTMLElement;
  const opBrake = el("op-brake") as HTMLInputElement;
  const opThrottle = el("op-throttle") as HTMLInputElement;
  const overrideToggle = el("override-toggle") as HTMLInputElement;
  const manualToggle = el("manual-toggle") as HTMLInputElement;

  root.querySelectorAll<HTMLButtonElement>("[data-behavior]").forEach((button) => {
    button.addEventListener("click", () =>
      session.sendBehavior(button.dataset.behavior as never));
  });
  root.querySelectorAll<HTMLButtonElement>("[data-flag]").forEach((button) => {
    button.addEventListener("click", () => session.sendFlag(button.dataset.flag as never));
  });
  overrideToggle.addEventListener("change", () => {
    if (overrideToggle.checked) {
      session.startOverride(() => ({
        throttle: Number(opThrottle.value) / 100,
        brake: Number(opBrake.value) / 100,
        steering: 0,
      }));
    } else {
      session.stopOverride();
    }
  });
  manualToggle.addEventListener("change", () => {
    const record = session.sendManualMode(manualToggle.checked);
    if (record === null) manualToggle.checked = !manualToggle.checked;
  });
  el("reset").addEventListener("click", () => {
    if (window.confirm("Clear the hard-emergency latch? Vehicle must be at standstill.")) {
      session.sendReset();
    }
  });

  let renderQueued = false;
  const render = () => {
    renderQueued = false;
    el("conn").textContent = session.state;
    el("conn").className = `badge ${session.state === "open" ? "ok" : "bad"}`;
    el("stale").classList.toggle("hidden", !session.isStale());

    const action = buildActionView(session.latest.action?.payload);
    el("action").textContent = action.label;
    el("action").style.color = action.color;
    el("action-reason").textContent = action.reason;
    el("action-cap").textContent = action.speedCap && `target cap: ${action.speedCap}`;

    const gate = buildGateView(session.latest.gate?.payload);
    el("gate-mode").textContent = gate.mode;
    el("gate-latch").textContent = gate.heLatched ? "hard-emergency latched" : "";
    (el("throttle") as HTMLProgressElement).value = gate.throttlePct;
    (el("brake") as HTMLProgressElement).value = gate.brakeBar;
    el("brake-bar").textContent = `${gate.brakeBar.toFixed(1)} bar`;

    const vehicle = session.latest.state?.payload;
    el("speed").textContent = vehicle ? formatSpeed(vehicle.speed) : "-";

    const tbody = root.querySelector("#diag tbody") as HTMLElement;
    const diag = session.latest.diag;
    if (diag) {
      const rows = buildDiagnosticsView(diag.payload, session.latest.state?.t_ns ?? diag.t_ns);
      tbody.innerHTML = rows.map((row) => `
        <tr>
          <td>${row.moduleId}</td>
          <td style="color:${row.color};font-weight:bold">${row.level}</td>
          <td>${row.detail}</td>
          <td>${row.ageMs.toFixed(0)} ms</td>
        </tr>`).join("");
    }

    const log = el("cmdlog");
    log.innerHTML = session.commandLog.slice(-8).reverse().map((record) => {
      const reason = record.reason ? ` - ${record.reason}` : "";
      return `<li class="${record.outcome}">#${record.seq} ${record.command.cmd}: ` +
        `${record.outcome}${reason}</li>`;
    }).join("");

    // keep the controls honest while disconnected
    root.querySelectorAll("button, input").forEach((node) => {
      (node as HTMLButtonElement).disabled = !session.connected;
    });
  };

  session.onUpdate(() => {
    if (!renderQueued) {
      renderQueued = true;
      requestAnimationFrame(render);
    }
  });
  window.setInterval(render, 250); // stale banner refresh
  render();
}
