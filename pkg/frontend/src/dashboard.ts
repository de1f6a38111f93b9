// Per-metric dashboard: gate table with pass/fail coloring, topology
// histogram bars, and a sigma/stagnation sparkline.

import type { GenerationMessage } from "./protocol";
import { gateRows, ViewerState } from "./state";

const fmt = (v: number): string =>
  Math.abs(v) >= 1000 ? v.toFixed(0) : Math.abs(v) >= 10 ? v.toFixed(1) : v.toFixed(3);

export function renderGates(el: HTMLElement, msg: GenerationMessage): void {
  const rows = gateRows(msg.breakdown)
    .map(r => `<tr class="${r.pass ? "pass" : "fail"}">
      <td>${r.name}</td><td>${fmt(r.value)}</td><td>${r.pass ? "ok" : "out"}</td></tr>`)
    .join("");
  el.innerHTML = `<table><thead><tr><th>gate</th><th>value</th><th></th></tr></thead>
    <tbody>${rows}</tbody></table>`;
}

export function renderBreakdown(el: HTMLElement, msg: GenerationMessage): void {
  const entries = Object.entries(msg.breakdown)
    .filter(([k]) => !k.startsWith("prior_dev_"))
    .map(([k, v]) => `<tr><td>${k}</td><td>${fmt(v)}</td></tr>`)
    .join("");
  el.innerHTML = `<table><tbody>${entries}</tbody></table>`;
}

export function renderHistogram(el: HTMLElement, msg: GenerationMessage): void {
  const hist = msg.topology_histogram;
  const total = Object.values(hist).reduce((a, b) => a + b, 0) || 1;
  el.innerHTML = Object.entries(hist)
    .map(([name, n]) => {
      const pct = (100 * n) / total;
      return `<div class="bar-row"><span class="bar-label">${name}</span>
        <div class="bar"><div class="bar-fill" style="width:${pct}%"></div></div>
        <span class="bar-count">${n}</span></div>`;
    })
    .join("");
}

export function renderStatus(el: HTMLElement, state: ViewerState): void {
  const msg = state.latest;
  if (!msg) {
    el.textContent = `phase: ${state.phase}`;
    return;
  }
  el.innerHTML = `generation <b>${msg.generation}</b> · fitness
    <b>${fmt(msg.breakdown.fitness ?? 0)}</b> · ${msg.feasible
      ? '<span class="pass">feasible</span>' : '<span class="fail">infeasible</span>'}
    · σ ${msg.sigma.toFixed(3)} · stagnation ${msg.stagnation}
    · diversity ${msg.diversity.toFixed(2)} · ${state.phase}`;
}

export function renderSparkline(canvas: HTMLCanvasElement, state: ViewerState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const series = [
    { data: state.fitnessHistory, color: "#58b06b", max: 1 },
    { data: state.sigmaHistory, color: "#4f8fd6", max: 0.6 },
    { data: state.stagnationHistory, color: "#d6804f", max: 30 },
  ];
  for (const s of series) {
    if (s.data.length < 2) continue;
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.data.forEach((v, i) => {
      const x = (i / (s.data.length - 1)) * (w - 4) + 2;
      const y = h - 2 - Math.min(v / s.max, 1) * (h - 4);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}
