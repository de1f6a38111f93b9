"""Generate wire-format fixtures for the viewer tests.

Produces 100 grid payloads exactly as the engine streams them, plus a few
deliberately corrupted ones, so the client decoder is tested against real
producer output rather than a reimplementation.
"""

import json
import sys
from pathlib import Path

import numpy as np

from aerovolve import anatomy as an
from aerovolve.anatomy import EnvelopeSpec
from aerovolve.gridfmt import encode_payload
from aerovolve.voxelizer import voxelize

ENV = EnvelopeSpec(60, 25, 66)


class Mission:
    def __init__(self, mass):
        self.mass = mass


def main(out_path: str) -> None:
    rng = np.random.default_rng(2024)
    payloads = []
    for i in range(100):
        topo = an.TOPOLOGIES[i % 5]
        mission = Mission((800.0, 9000.0, 45000.0)[i % 3])
        ng = an.seed_individual(topo, mission, rng)
        genome = an.decode(ng, ENV)
        grid = voxelize(genome, ENV, 32 if i % 2 else 48)
        payloads.append({
            "payload": encode_payload(grid),
            "occupied": int(grid.occupied_count()),
        })
    corrupted = []
    good = payloads[0]["payload"]
    bad_crc = dict(good)
    bad_crc["crc32"] = (bad_crc["crc32"] ^ 1) & 0xFFFFFFFF
    corrupted.append({"payload": bad_crc, "reason": "crc"})
    bad_len = dict(good)
    bad_len["payload_b64"] = bad_len["payload_b64"][:-8]
    corrupted.append({"payload": bad_len, "reason": "truncated"})
    doc = {"payloads": payloads, "corrupted": corrupted}
    Path(out_path).write_text(json.dumps(doc))
    print(f"wrote {len(payloads)} payloads to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/payloads.json")
