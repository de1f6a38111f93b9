// Session state machine.  The viewer is stateless with respect to the
// run: it reconstructs everything it shows from the message stream, so a
// page reload mid-run resumes correct display at the next frame.  Pin
// state reflects only server acknowledgements (the pinned_axes field of
// the latest generation), never local intent.

import type { GenerationMessage, ServerMessage } from "./protocol";

export type Phase = "idle" | "running" | "paused" | "finished";

export interface Controls {
  start: boolean;
  pause: boolean;
  resume: boolean;
  restart: boolean;
  stop: boolean;
  pin: boolean;
}

export class ViewerState {
  phase: Phase = "idle";
  runId: string | null = null;
  lastGeneration = -1;
  latest: GenerationMessage | null = null;
  pinnedAxes = new Map<number, number>();
  sigmaHistory: number[] = [];
  stagnationHistory: number[] = [];
  fitnessHistory: number[] = [];
  lastError: string | null = null;
  droppedStale = 0;

  // Returns true when the frame advanced the display (stale frames drop).
  apply(msg: ServerMessage): boolean {
    switch (msg.type) {
      case "started":
        this.phase = "running";
        this.runId = msg.run_id;
        this.lastGeneration = -1;
        this.latest = null;
        this.pinnedAxes.clear();
        this.sigmaHistory = [];
        this.stagnationHistory = [];
        this.fitnessHistory = [];
        this.lastError = null;
        return true;
      case "generation": {
        if (msg.generation <= this.lastGeneration) {
          this.droppedStale++;
          return false; // displayed generation index never decreases
        }
        this.lastGeneration = msg.generation;
        this.latest = msg;
        this.pinnedAxes = new Map(msg.pinned_axes);
        this.sigmaHistory.push(msg.sigma);
        this.stagnationHistory.push(msg.stagnation);
        this.fitnessHistory.push(msg.breakdown.fitness ?? 0);
        return true;
      }
      case "finished":
        this.phase = "finished";
        return true;
      case "error":
        this.lastError = msg.reason;
        return true;
    }
  }

  notePaused(): void {
    if (this.phase === "running") this.phase = "paused";
  }

  noteResumed(): void {
    if (this.phase === "paused") this.phase = "running";
  }

  controls(): Controls {
    return {
      start: this.phase === "idle" || this.phase === "finished",
      pause: this.phase === "running",
      resume: this.phase === "paused",
      restart: this.phase === "running" || this.phase === "paused",
      stop: this.phase === "running" || this.phase === "paused",
      pin: this.phase === "running" || this.phase === "paused",
    };
  }
}

// Feasibility gate coloring for the breakdown table; mirrors the engine's
// gate set so a feasible frame renders all-green.
export interface GateRow {
  name: string;
  value: number;
  pass: boolean;
}

export function gateRows(b: Record<string, number>): GateRow[] {
  const ldOff = b.ld_target > 0 ? Math.abs(b.lift_to_drag / b.ld_target - 1) : 1;
  return [
    { name: "lift_to_drag", value: b.lift_to_drag, pass: ldOff <= 0.10 },
    { name: "root_stress_mpa", value: b.root_stress / 1e6, pass: b.stress_score >= 1.0 },
    { name: "static_margin_full", value: b.static_margin_full,
      pass: b.static_margin_full >= 0.05 && b.static_margin_full <= 0.25 },
    { name: "static_margin_empty", value: b.static_margin_empty,
      pass: b.static_margin_empty >= 0.05 && b.static_margin_empty <= 0.25 },
    { name: "range_ratio", value: b.range_ratio, pass: b.range_ratio >= 0.99 },
    { name: "envelope_violation_m", value: b.envelope_violation,
      pass: b.envelope_violation === 0 },
    { name: "mount_multiplier", value: b.mount_multiplier,
      pass: b.mount_multiplier === 1 },
  ];
}

export const MISSION_PRESETS: Record<string, Record<string, unknown>> = {
  airliner: { mass: 45000, range: 3500, cruise_speed: 230,
              box: [40, 12, 36], engine_cap: 2, areal_density: 45 },
  bizjet: { mass: 12000, range: 5000, cruise_speed: 240,
            box: [25, 8, 22], engine_cap: 2, areal_density: 35 },
  drone: { mass: 600, range: 2000, cruise_speed: 90,
           box: [12, 4, 14], engine_cap: 1, areal_density: 12 },
};
