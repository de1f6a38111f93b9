// Steering console: mission entry, live voxel view, dashboard, controls.

import { decodeGrid, type ControlCommand, type ServerMessage } from "./protocol";
import { MISSION_PRESETS, ViewerState } from "./state";
import { VoxelScene } from "./render";
import { renderBreakdown, renderGates, renderHistogram, renderSparkline, renderStatus } from "./dashboard";

interface AxisInfo {
  index: number;
  name: string;
  lo: number;
  hi: number;
  kind: string;
}

const state = new ViewerState();
let socket: WebSocket | null = null;
let scene: VoxelScene | null = null;
let pendingGrid: ReturnType<typeof decodeGrid> | null = null;

const $ = (id: string) => document.getElementById(id)!;

function send(cmd: ControlCommand): void {
  if (socket && socket.readyState === WebSocket.OPEN) {
    socket.send(JSON.stringify(cmd));
  }
}

function banner(text: string | null): void {
  const el = $("banner");
  el.textContent = text ?? "";
  el.classList.toggle("hidden", !text);
}

function refreshControls(): void {
  const c = state.controls();
  ($("btn-start") as HTMLButtonElement).disabled = !c.start;
  ($("btn-pause") as HTMLButtonElement).disabled = !c.pause;
  ($("btn-resume") as HTMLButtonElement).disabled = !c.resume;
  ($("btn-restart") as HTMLButtonElement).disabled = !c.restart;
  ($("btn-stop") as HTMLButtonElement).disabled = !c.stop;
  document.querySelectorAll<HTMLInputElement>(".pin-toggle").forEach(el => {
    el.disabled = !c.pin;
  });
}

function refreshPins(): void {
  document.querySelectorAll<HTMLElement>(".axis-row").forEach(row => {
    const idx = Number(row.dataset.index);
    const pinned = state.pinnedAxes.has(idx);
    row.classList.toggle("pinned", pinned);
    const toggle = row.querySelector<HTMLInputElement>(".pin-toggle");
    if (toggle) toggle.checked = pinned;
    if (pinned) {
      const slider = row.querySelector<HTMLInputElement>(".axis-slider");
      if (slider) slider.value = String(state.pinnedAxes.get(idx));
    }
  });
}

function onMessage(raw: string): void {
  let msg: ServerMessage;
  try {
    msg = JSON.parse(raw) as ServerMessage;
  } catch {
    banner("undecodable frame from server");
    return;
  }
  if (msg.type === "error") {
    state.apply(msg);
    banner(`server: ${msg.reason}`);
    return;
  }
  const advanced = state.apply(msg);
  if (msg.type === "generation" && advanced) {
    try {
      pendingGrid = decodeGrid(msg.grid); // stale frames already dropped
    } catch (e) {
      banner(`payload rejected: ${e}`);
    }
    renderGates($("gates"), msg);
    renderBreakdown($("breakdown"), msg);
    renderHistogram($("histogram"), msg);
    renderSparkline($("sparkline") as HTMLCanvasElement, state);
    refreshPins();
  }
  renderStatus($("status"), state);
  refreshControls();
}

function connect(): void {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  socket = new WebSocket(`${proto}://${location.host}/ws`);
  socket.onmessage = ev => onMessage(String(ev.data));
  socket.onclose = () => {
    banner("connection lost; reconnecting…");
    setTimeout(connect, 1500);
  };
  socket.onopen = () => banner(null);
}

function missionFromForm(): Record<string, unknown> {
  return {
    mass: Number(($("f-mass") as HTMLInputElement).value),
    range: Number(($("f-range") as HTMLInputElement).value),
    cruise_speed: Number(($("f-speed") as HTMLInputElement).value),
    box: [
      Number(($("f-box-l") as HTMLInputElement).value),
      Number(($("f-box-h") as HTMLInputElement).value),
      Number(($("f-box-w") as HTMLInputElement).value),
    ],
    engine_cap: Number(($("f-engines") as HTMLSelectElement).value),
    areal_density: Number(($("f-areal") as HTMLInputElement).value),
  };
}

function applyPreset(name: string): void {
  const p = MISSION_PRESETS[name];
  if (!p) return;
  ($("f-mass") as HTMLInputElement).value = String(p.mass);
  ($("f-range") as HTMLInputElement).value = String(p.range);
  ($("f-speed") as HTMLInputElement).value = String(p.cruise_speed);
  const box = p.box as number[];
  ($("f-box-l") as HTMLInputElement).value = String(box[0]);
  ($("f-box-h") as HTMLInputElement).value = String(box[1]);
  ($("f-box-w") as HTMLInputElement).value = String(box[2]);
  ($("f-engines") as HTMLSelectElement).value = String(p.engine_cap);
  ($("f-areal") as HTMLInputElement).value = String(p.areal_density);
}

async function buildAxisPanel(): Promise<void> {
  const res = await fetch("/api/axes");
  const axes = (await res.json()) as AxisInfo[];
  const panel = $("axes");
  panel.innerHTML = "";
  for (const axis of axes) {
    const row = document.createElement("div");
    row.className = "axis-row";
    row.dataset.index = String(axis.index);
    row.innerHTML = `
      <input type="checkbox" class="pin-toggle" title="pin/release" disabled>
      <span class="axis-name">${axis.name}</span>
      <input type="range" class="axis-slider" min="-1" max="1" step="0.01" value="0">
      <span class="axis-value">0.00</span>`;
    const slider = row.querySelector<HTMLInputElement>(".axis-slider")!;
    const valueEl = row.querySelector<HTMLElement>(".axis-value")!;
    const toggle = row.querySelector<HTMLInputElement>(".pin-toggle")!;
    slider.addEventListener("input", () => {
      valueEl.textContent = Number(slider.value).toFixed(2);
      if (toggle.checked) {
        send({ type: "pin_axis", index: axis.index, value: Number(slider.value) });
      }
    });
    toggle.addEventListener("change", () => {
      if (toggle.checked) {
        send({ type: "pin_axis", index: axis.index, value: Number(slider.value) });
      } else {
        send({ type: "unpin_axis", index: axis.index });
      }
    });
    panel.appendChild(row);
  }
}

function wireControls(): void {
  $("btn-start").addEventListener("click", () => {
    send({
      type: "start",
      mission: missionFromForm(),
      seed: Number(($("f-seed") as HTMLInputElement).value) || 0,
      ga: {
        population: Number(($("f-pop") as HTMLInputElement).value) || 60,
        generations: Number(($("f-gens") as HTMLInputElement).value) || 80,
        resolution: Number(($("f-res") as HTMLInputElement).value) || 64,
      },
    });
  });
  $("btn-pause").addEventListener("click", () => { send({ type: "pause" }); state.notePaused(); refreshControls(); renderStatus($("status"), state); });
  $("btn-resume").addEventListener("click", () => { send({ type: "resume" }); state.noteResumed(); refreshControls(); renderStatus($("status"), state); });
  $("btn-restart").addEventListener("click", () => send({ type: "force_restart" }));
  $("btn-stop").addEventListener("click", () => send({ type: "stop" }));
  document.querySelectorAll<HTMLButtonElement>("[data-preset]").forEach(btn => {
    btn.addEventListener("click", () => applyPreset(btn.dataset.preset!));
  });
}

function animate(last = performance.now()): void {
  requestAnimationFrame(() => {
    const now = performance.now();
    if (scene) {
      if (pendingGrid) {
        scene.setGrid(pendingGrid); // only the newest frame is rendered
        pendingGrid = null;
      }
      scene.frame(now - last);
    }
    animate(now);
  });
}

window.addEventListener("DOMContentLoaded", () => {
  scene = new VoxelScene($("voxels") as HTMLCanvasElement);
  window.addEventListener("resize", () => scene?.resize());
  applyPreset("drone");
  wireControls();
  void buildAxisPanel();
  connect();
  refreshControls();
  animate();
});
