"""Mount-consistency scoring: are parts actually attached to their hosts?

Generative shape models love floating engines.  We measure, for every
nominally-attached part, a signed penetration depth d against its host
structure on the voxel grid (the grid is what physics sees, so the grid is
what gets judged), then map d through a five-branch piecewise-linear score
that saturates at 1 for well-seated parts: there is deliberately no reward
for burying a part deeper than "firmly mounted".

Depth convention, in meters:
  d > 0  host voxels lie inside the part's bounding box; d is their extent
         along the part's mounting axis.
  d = 0  exact face contact.
  d < 0  the gap: minimum distance between the part's box and the nearest
         host voxel, measured between voxel centers minus one pitch (face-
         adjacent voxels therefore score d = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .voxelizer import Label, PartAabb, VoxelGrid

SCORE_FIRM = 0.75     # score at d = d_m * e; below this the penalty engages
SCORE_CONTACT = 0.30  # score at exact contact
PENALTY_FLOOR = 0.05  # keeps crushed individuals rankable


@dataclass
class MountThresholds:
    """Dimensionless penetration thresholds, in units of part size."""

    d_m: float = 0.05   # minimum firm-mount penetration fraction
    d_g: float = 0.15   # good penetration fraction (score saturates)
    d_x: float = 0.50   # maximum tolerated gap fraction

    def __post_init__(self):
        if not (0.0 < self.d_m < self.d_g):
            raise ValueError("thresholds must satisfy 0 < d_m < d_g")
        if self.d_x <= 0.0:
            raise ValueError("d_x must be positive")


def mount_score(d: float, e: float, t: MountThresholds = MountThresholds()) -> float:
    """Five-branch attachment score; continuous and nondecreasing in d."""
    if e <= 0.0:
        raise ValueError(f"characteristic size must be positive, got {e}")
    if d >= t.d_g * e:
        return 1.0
    if d >= t.d_m * e:
        return 0.75 + 0.25 * (d - t.d_m * e) / ((t.d_g - t.d_m) * e)
    if d >= 0.0:
        return 0.30 + 0.45 * d / (t.d_m * e)
    if d >= -t.d_x * e:
        return max(0.0, 0.30 * (1.0 + d / (t.d_x * e)))
    return 0.0


@dataclass
class MountEntry:
    part: str
    component: int
    host: str
    depth: float           # m, signed; NaN when the part never rasterized
    char_size: float       # m
    score: float
    applicable: bool = True

    def to_dict(self) -> dict:
        return {
            "part": self.part, "component": self.component, "host": self.host,
            "depth_m": None if np.isnan(self.depth) else float(self.depth),
            "char_size_m": float(self.char_size),
            "score": float(self.score), "applicable": self.applicable,
        }


@dataclass
class MountReport:
    entries: list[MountEntry] = field(default_factory=list)
    multiplier: float = 1.0

    def to_dict(self) -> dict:
        return {"multiplier": float(self.multiplier),
                "parts": [e.to_dict() for e in self.entries]}


def penetration_depth(part: PartAabb, grid: VoxelGrid) -> float:
    """Signed penetration of a part's AABB against its host labels."""
    if not part.hosts:
        raise ValueError(f"part {part.part.name} has no defined host set")
    host_vals = [int(h) for h in part.hosts]
    box_lo, box_hi = part.bounds
    sl = tuple(slice(lo, hi + 1) for lo, hi in zip(box_lo, box_hi))
    sub = grid.labels[sl]
    inside = np.isin(sub, host_vals)
    pitch = grid.voxel_pitch
    if inside.any():
        axis = part.mount_axis
        idx = np.nonzero(inside)[axis]
        return float((idx.max() - idx.min() + 1) * pitch)
    host_mask = np.isin(grid.labels, host_vals)
    coords = np.argwhere(host_mask)
    if coords.size == 0:
        return float(-np.inf)
    lo = np.asarray(box_lo)
    hi = np.asarray(box_hi)
    # distance from each host voxel center to the part box, in index units
    delta = np.maximum(lo - coords, 0) + np.maximum(coords - hi, 0)
    dist = np.sqrt((delta.astype(float) ** 2).sum(axis=1)).min()
    return float(-(dist - 1.0) * pitch)


def mount_penalty(entries: list[MountEntry]) -> float:
    """Product of sub-firm scores (floored); 1 when everything is seated."""
    mult = 1.0
    for e in entries:
        if e.applicable and e.score < SCORE_FIRM:
            mult *= max(e.score, PENALTY_FLOOR)
    return mult


def evaluate_mounts(parts: list[PartAabb], grid: VoxelGrid, genome,
                    thresholds: MountThresholds = MountThresholds()) -> MountReport:
    """Score every mount-checked part; missing expected parts score 0.

    A part the genome claims to have but that never rasterized (an engine
    buried wholly inside the fuselage, a vanishingly small stabilizer) is
    treated as a floating part, not a free pass; otherwise the search could
    dodge the penalty by hiding hardware.
    """
    report = MountReport()
    comp_counter: dict[Label, int] = {}
    engine_components = 0
    for p in parts:
        comp_counter[p.part] = comp_counter.get(p.part, 0) + 1
        if p.part is Label.ENGINE:
            engine_components += 1
        if not p.hosts:
            if p.part in (Label.WING, Label.FUSELAGE):
                continue
            report.entries.append(MountEntry(
                part=p.part.name.lower(), component=comp_counter[p.part],
                host="none", depth=float("nan"),
                char_size=p.characteristic_size, score=1.0, applicable=False))
            continue
        d = penetration_depth(p, grid)
        s = mount_score(d, p.characteristic_size, thresholds) if np.isfinite(d) else 0.0
        report.entries.append(MountEntry(
            part=p.part.name.lower(), component=comp_counter[p.part],
            host="|".join(h.name.lower() for h in p.hosts),
            depth=d, char_size=p.characteristic_size, score=s))

    expected_engines = 1 if genome.engine_count == 1 else (2 if genome.engine_count == 2 else 4)
    for missing in range(engine_components, expected_engines):
        report.entries.append(MountEntry(
            part="engine", component=missing + 1, host="fuselage|wing",
            depth=float("nan"), char_size=genome.engine_size, score=0.0))

    report.multiplier = mount_penalty(report.entries)
    return report


def overlap_fallback_multiplier(parts: list[PartAabb], grid: VoxelGrid) -> float:
    """Plain component-overlap penalty used by the mount-scoring ablation.

    Discourages parts interpenetrating their neighbours too deeply but
    gives no credit for attachment, so floating hardware goes unpunished —
    the classic failure mode the signed-depth score exists to fix.
    """
    mult = 1.0
    for p in parts:
        if p.part in (Label.FUSELAGE, Label.WING):
            continue
        sl = tuple(slice(lo, hi + 1) for lo, hi in zip(p.lo, p.hi))
        sub = grid.labels[sl]
        others = np.count_nonzero((sub != 0) & (sub != int(p.part)))
        frac = others / max(p.voxel_count, 1)
        if frac > 0.6:
            mult *= float(np.exp(-2.0 * (frac - 0.6)))
    return mult
