"""Run orchestration: mission ingestion, streaming protocol, headless CLI.

The wire protocol is JSON text frames both ways.  The client sends control
commands (start/pause/resume/pin_axis/unpin_axis/force_restart/stop); the
server pushes exactly one generation message per completed generation, in
order, each carrying the full diagnostic breakdown and the best
individual's voxel grid as a base64 run-length payload with a checksum.

Commands are queued and drained at generation boundaries only, so the
evaluation path stays pure and a run is bit-reproducible for a fixed seed
when no commands arrive.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import queue as queue_mod
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from fastapi import WebSocket, WebSocketDisconnect

from . import gridfmt
from .anatomy import EnvelopeSpec, N_PARAMS, PARAM_SPECS
from .evolve import AblationFlags, ControlQueue, GaConfig, GenerationRecord, RunResult, run
from .physics import MissionSpec, PhysicsConfig

MISSION_KEYS = ("mass", "range", "cruise_speed", "box", "engine_cap", "areal_density")
OPTIONAL_KEYS = ("engine_max_length", "engine_max_diameter", "physics")
PHYSICS_KEYS = ("air_density", "gravity", "tsfc", "yield_stress", "ultimate_factor",
                "limit_load", "oswald_e", "fuel_density", "ld_target")


class MissionParseError(ValueError):
    pass


def parse_document(text: str) -> tuple[MissionSpec, PhysicsConfig]:
    """Parse a mission document: the six mission keys, optional per-engine
    caps, and an optional physics-override block.  Unknown keys are
    rejected outright: a typo in a mission file must not silently fall
    back to a default."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MissionParseError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise MissionParseError("mission document must be a JSON object")
    missing = [k for k in MISSION_KEYS if k not in doc]
    if missing:
        raise MissionParseError("missing required keys: " + ", ".join(missing))
    unknown = [k for k in doc if k not in MISSION_KEYS + OPTIONAL_KEYS]
    if unknown:
        raise MissionParseError("unknown keys: " + ", ".join(sorted(unknown)))

    def positive(key, value):
        if not isinstance(value, (int, float)) or value <= 0:
            raise MissionParseError(f"'{key}' must be a positive number, got {value!r}")
        return float(value)

    box = doc["box"]
    if (not isinstance(box, (list, tuple)) or len(box) != 3
            or any(not isinstance(v, (int, float)) or v <= 0 for v in box)):
        raise MissionParseError("'box' must be three positive numbers [length, height, width] in m")
    env_kwargs = dict(box_length=float(box[0]), box_height=float(box[1]),
                      box_width=float(box[2]))
    for key in ("engine_max_length", "engine_max_diameter"):
        if key in doc:
            env_kwargs[key] = positive(key, doc[key])
    cap = doc["engine_cap"]
    if cap not in (1, 2, 4):
        raise MissionParseError(f"'engine_cap' must be 1, 2, or 4, got {cap!r}")
    mission = MissionSpec(
        mass=positive("mass", doc["mass"]),
        range_km=positive("range", doc["range"]),
        cruise_speed=positive("cruise_speed", doc["cruise_speed"]),
        envelope=EnvelopeSpec(**env_kwargs),
        engine_cap=int(cap),
        areal_density=positive("areal_density", doc["areal_density"]),
    )
    cfg = PhysicsConfig()
    overrides = doc.get("physics", {})
    if not isinstance(overrides, dict):
        raise MissionParseError("'physics' must be an object of overrides")
    for key, value in overrides.items():
        if key not in PHYSICS_KEYS:
            raise MissionParseError(f"unknown physics override: {key}")
        setattr(cfg, key, positive(key, value))
    return mission, cfg


def parse_mission(text: str) -> MissionSpec:
    return parse_document(text)[0]


# ---------------------------------------------------------------------------
# Generation messages
# ---------------------------------------------------------------------------

def make_run_id(mission_doc: dict, seed: int, flags: AblationFlags, ga: GaConfig) -> str:
    blob = json.dumps({"mission": mission_doc, "seed": seed,
                       "flags": flags.to_dict(),
                       "ga": asdict(ga)}, sort_keys=True)
    return hashlib.sha1(blob.encode()).hexdigest()[:12]


def generation_message(run_id: str, record: GenerationRecord,
                       include_payload: bool = True) -> dict:
    best = record.best
    msg = {
        "type": "generation",
        "run_id": run_id,
        "generation": record.generation,
        "best": {
            "topology": best.ng.topology.value,
            "values": [float(v) for v in best.ng.values],
        },
        "breakdown": best.breakdown.to_flat_dict() if best.breakdown else {},
        "mounts": best.mounts.to_dict() if best.mounts else {"multiplier": 1.0, "parts": []},
        "topology_histogram": record.histogram,
        "diversity": record.diversity,
        "stagnation": record.stagnation,
        "sigma": record.sigma,
        "pinned_axes": [[int(i), float(v)] for i, v in sorted(record.pinned_axes.items())],
        "feasible": record.feasible,
        "grid": gridfmt.encode_payload(record.grid) if include_payload
                else {"crc32": gridfmt.grid_crc(record.grid)},
    }
    return msg


def dump_message(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Headless runner
# ---------------------------------------------------------------------------

@dataclass
class HeadlessOutcome:
    exit_code: int
    run_dir: Path
    result: RunResult


def load_prior_model(path: str | None = None):
    from . import prior as prior_mod
    cache = path or prior_mod.default_cache_path()
    if os.path.exists(cache):
        return prior_mod.PriorScorer(prior_mod.load_model(cache))
    return None


def run_headless(mission_path, out_dir, seed: int = 0,
                 ga_cfg: GaConfig | None = None,
                 flags: AblationFlags | None = None,
                 prior_model=None, prior_path: str | None = None,
                 stop_on_feasible: bool = False) -> HeadlessOutcome:
    """Execute one run without a client; write the full artifact set.

    Artifacts: metrics.jsonl (one generation message per line), the final
    best grid in the binary format, the final genome, and a manifest
    echoing seed/flags/config.  Exit code 0 iff a feasible design was
    found; 2 otherwise (artifacts still written).
    """
    text = Path(mission_path).read_text(encoding="utf-8")
    mission, phys_cfg = parse_document(text)
    mission_doc = json.loads(text)
    ga_cfg = ga_cfg or GaConfig()
    flags = flags or AblationFlags()
    if prior_model is None and flags.prior:
        prior_model = load_prior_model(prior_path)
    if prior_model is None:
        flags.prior = False

    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    run_id = make_run_id(mission_doc, seed, flags, ga_cfg)

    metrics_path = run_dir / "metrics.jsonl"
    last_record: list[GenerationRecord] = []
    with open(metrics_path, "w", encoding="utf-8") as metrics:
        def sink(record: GenerationRecord):
            metrics.write(dump_message(generation_message(run_id, record)) + "\n")
            last_record.clear()
            last_record.append(record)

        result = run(mission, ga_cfg, phys_cfg, flags=flags, seed=seed,
                     prior_model=prior_model, sink=sink,
                     stop_on_feasible=stop_on_feasible)

    if last_record:
        gridfmt.write_grid(last_record[0].grid, run_dir / "best_grid.avxg")
    best = result.best
    genome_doc = {
        "topology": best.ng.topology.value,
        "normalized": [float(v) for v in best.ng.values],
        "breakdown": best.breakdown.to_flat_dict() if best.breakdown else {},
    }
    (run_dir / "best_genome.json").write_text(
        json.dumps(genome_doc, sort_keys=True, indent=2), encoding="utf-8")
    manifest = {
        "run_id": run_id,
        "seed": seed,
        "flags": flags.to_dict(),
        "ga": asdict(ga_cfg),
        "mission": mission_doc,
        "generations_run": result.completed_generations,
        "generations_to_feasible": result.generations_to_feasible,
        "prior_active": flags.prior,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")
    exit_code = 0 if result.generations_to_feasible is not None else 2
    return HeadlessOutcome(exit_code=exit_code, run_dir=run_dir, result=result)


def run_replicates(mission_path, out_dir, seeds: list[int],
                   ga_cfg: GaConfig | None = None,
                   flags: AblationFlags | None = None,
                   prior_model=None, stop_on_feasible: bool = False) -> int:
    """Independent seeded runs plus an aggregate summary; exit 0 iff any
    replicate found a feasible design."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in seeds:
        sub = out / f"run_{seed:04d}"
        outcome = run_headless(mission_path, sub, seed=seed, ga_cfg=ga_cfg,
                               flags=AblationFlags(**flags.to_dict()) if flags else None,
                               prior_model=prior_model,
                               stop_on_feasible=stop_on_feasible)
        best = outcome.result.best
        rows.append({
            "seed": seed,
            "exit_code": outcome.exit_code,
            "generations_to_feasible": outcome.result.generations_to_feasible,
            "best_fitness": best.breakdown.fitness if best.breakdown else 0.0,
            "best_topology": best.ng.topology.value,
        })
    summary = {
        "replicates": len(seeds),
        "feasible_runs": sum(1 for r in rows if r["exit_code"] == 0),
        "runs": rows,
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2),
                                      encoding="utf-8")
    return 0 if summary["feasible_runs"] > 0 else 2


# ---------------------------------------------------------------------------
# WebSocket service
# ---------------------------------------------------------------------------

class RunSession:
    """One live run owned by one socket session."""

    def __init__(self):
        self.control = ControlQueue()
        self.outbound: queue_mod.Queue = queue_mod.Queue()
        self.thread: threading.Thread | None = None
        self.done = threading.Event()

    @property
    def active(self) -> bool:
        return self.thread is not None and not self.done.is_set()

    def start(self, mission: MissionSpec, phys_cfg: PhysicsConfig,
              ga_cfg: GaConfig, flags: AblationFlags, seed: int,
              prior_model, run_id: str) -> None:
        def worker():
            try:
                def sink(record: GenerationRecord):
                    self.outbound.put(generation_message(run_id, record))

                result = run(mission, ga_cfg, phys_cfg, flags=flags, seed=seed,
                             prior_model=prior_model, sink=sink, control=self.control)
                self.outbound.put({
                    "type": "finished", "run_id": run_id,
                    "generations_run": result.completed_generations,
                    "generations_to_feasible": result.generations_to_feasible,
                    "stopped": result.stopped,
                })
            except Exception as e:  # surfaced to the client, session survives
                self.outbound.put({"type": "error", "reason": f"run failed: {e}"})
            finally:
                self.done.set()

        self.thread = threading.Thread(target=worker, daemon=True)
        self.thread.start()


CONTROL_TYPES = ("pause", "resume", "pin_axis", "unpin_axis", "force_restart", "stop")


def handle_client_frame(session: RunSession, frame: str, prior_model) -> dict | None:
    """Validate one inbound frame; returns an immediate reply or None."""
    try:
        cmd = json.loads(frame)
        if not isinstance(cmd, dict) or "type" not in cmd:
            raise ValueError("frame must be an object with a 'type'")
    except (json.JSONDecodeError, ValueError) as e:
        return {"type": "error", "reason": f"malformed frame: {e}"}
    kind = cmd["type"]
    if kind == "start":
        if session.active:
            return {"type": "error", "reason": "a run is already live on this session"}
        try:
            mission, phys_cfg = parse_document(json.dumps(cmd.get("mission", {})))
        except MissionParseError as e:
            return {"type": "error", "reason": str(e)}
        seed = int(cmd.get("seed", 0))
        flags = AblationFlags(**cmd.get("flags", {})) if cmd.get("flags") else AblationFlags()
        ga_kwargs = cmd.get("ga", {})
        try:
            ga_cfg = GaConfig(**ga_kwargs)
        except (TypeError, ValueError) as e:
            return {"type": "error", "reason": f"bad ga config: {e}"}
        model = prior_model if flags.prior else None
        if model is None:
            flags.prior = False
        run_id = make_run_id(cmd.get("mission", {}), seed, flags, ga_cfg)
        session.start(mission, phys_cfg, ga_cfg, flags, seed, model, run_id)
        return {"type": "started", "run_id": run_id, "flags": flags.to_dict()}
    if kind in CONTROL_TYPES:
        if kind == "pin_axis":
            idx = cmd.get("index")
            val = cmd.get("value")
            if (not isinstance(idx, int) or not 0 <= idx < N_PARAMS
                    or not isinstance(val, (int, float)) or not -1.0 <= val <= 1.0):
                return {"type": "error",
                        "reason": f"pin_axis needs index in [0,{N_PARAMS}) and value in [-1,1]"}
        if kind == "unpin_axis" and not isinstance(cmd.get("index"), int):
            return {"type": "error", "reason": "unpin_axis needs an integer index"}
        if not session.active:
            return {"type": "error", "reason": "no live run"}
        session.control.push(cmd)
        return None
    return {"type": "error", "reason": f"unknown command type: {kind!r}"}


def create_app(prior_path: str | None = None, frontend_dir: str | None = None):
    """FastAPI app exposing the run protocol at /ws plus axis metadata."""
    import asyncio

    from fastapi import FastAPI
    from fastapi.responses import JSONResponse

    app = FastAPI(title="aerovolve")
    prior_model = load_prior_model(prior_path)

    @app.get("/api/axes")
    def axes():
        return JSONResponse([{"index": i, "name": s.name, "lo": s.lo, "hi": s.hi,
                              "kind": s.kind.value}
                             for i, s in enumerate(PARAM_SPECS)])

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = RunSession()
        loop = asyncio.get_event_loop()

        async def pump_outbound():
            while True:
                try:
                    msg = await loop.run_in_executor(
                        None, session.outbound.get, True, 0.05)
                except Exception:
                    msg = None
                if msg is not None:
                    await ws.send_text(dump_message(msg))

        pump = asyncio.ensure_future(pump_outbound())
        try:
            while True:
                frame = await ws.receive_text()
                reply = handle_client_frame(session, frame, prior_model)
                if reply is not None:
                    # replies ride the outbound queue too: one sender, no
                    # interleaved frames
                    session.outbound.put(reply)
        except WebSocketDisconnect:
            pass
        finally:
            if session.active:
                session.control.push({"type": "stop"})
                session.control.push({"type": "resume"})
            pump.cancel()

    root = frontend_dir or os.path.join(os.path.dirname(__file__), "..", "..",
                                        "frontend", "dist")
    if os.path.isdir(root):
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=root, html=True), name="viewer")
    return app


def serve(bind: str = "127.0.0.1:8000", prior_path: str | None = None) -> None:
    import uvicorn
    host, _, port = bind.partition(":")
    uvicorn.run(create_app(prior_path), host=host or "127.0.0.1",
                port=int(port or 8000), log_level="info")
