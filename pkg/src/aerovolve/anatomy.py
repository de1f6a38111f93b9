"""Aircraft genome: 25 named shape parameters plus a tail-topology tag.

The genome is the unit of evolution.  Every parameter has an explicit
physical range and a linear map to [-1, 1]; the search always operates on
the normalized vector while rendering and physics operate on the physical
one.  Tail topology is an explicit categorical gene so that per-class
elitism has an unambiguous label; the continuous tail parameters are
interpreted conditionally on it (a flying wing simply ignores them).

Seeding is class-conditioned and mass-tiered: a 600 kg endurance drone
must not start at airliner scale, and a T-tail seed must start with its
stabilizer actually at the top of the fin.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

N_PARAMS = 25


class TailTopology(enum.Enum):
    CONVENTIONAL = "conventional"
    T_TAIL = "t_tail"
    CRUCIFORM = "cruciform"
    V_TAIL = "v_tail"
    FLYING_WING = "flying_wing"


TOPOLOGIES = tuple(TailTopology)


class ParamKind(enum.Enum):
    CONTINUOUS = "continuous"
    FLAG = "flag"          # snapped to {0, 1}; normalized value > 0 means "exists"
    ENGINE_COUNT = "count"  # snapped to {1, 2, 4} by thirds of the normalized axis


@dataclass(frozen=True)
class ParamSpec:
    name: str
    lo: float
    hi: float
    kind: ParamKind = ParamKind.CONTINUOUS


# Canonical gene order.  Axis indices used for pinning and for the prior's
# per-dimension deviations refer to positions in this table.
PARAM_SPECS: tuple[ParamSpec, ...] = (
    ParamSpec("fuselage_length", 8.0, 60.0),
    ParamSpec("fuselage_radius", 0.5, 3.5),
    ParamSpec("nose_fineness", 1.0, 4.0),
    ParamSpec("tailcone_fineness", 1.0, 4.0),
    ParamSpec("wing_span", 6.0, 65.0),
    ParamSpec("wing_root_chord", 1.0, 12.0),
    ParamSpec("wing_taper", 0.1, 1.0),
    ParamSpec("wing_sweep", 0.0, 40.0),
    ParamSpec("wing_dihedral", -5.0, 10.0),
    ParamSpec("wing_x_pos", 0.15, 0.70),
    ParamSpec("wing_z_pos", -1.0, 1.0),
    ParamSpec("wing_thickness", 0.08, 0.16),
    ParamSpec("vtail_size", 0.5, 40.0),
    ParamSpec("vtail_sweep", 0.0, 50.0),
    ParamSpec("vtail_cant", 0.0, 90.0),
    ParamSpec("htail_span", 1.5, 25.0),
    ParamSpec("htail_chord", 0.5, 5.0),
    ParamSpec("htail_z_pos", 0.0, 1.0),
    ParamSpec("htail_exists", 0.0, 1.0, ParamKind.FLAG),
    ParamSpec("vtail_exists", 0.0, 1.0, ParamKind.FLAG),
    ParamSpec("engine_count", 1.0, 4.0, ParamKind.ENGINE_COUNT),
    ParamSpec("engine_length", 0.8, 6.0),
    ParamSpec("engine_size", 0.3, 3.0),
    ParamSpec("engine_x_pos", 0.0, 1.0),
    ParamSpec("engine_spanwise", 0.0, 1.0),
)

PARAM_NAMES: tuple[str, ...] = tuple(p.name for p in PARAM_SPECS)
PARAM_INDEX: dict[str, int] = {p.name: i for i, p in enumerate(PARAM_SPECS)}

assert len(PARAM_SPECS) == N_PARAMS

# Genes that define the empennage; crossover treats them as a block tied to
# the topology tag so a child never inherits half a tail concept.
TAIL_GENE_NAMES = (
    "vtail_size", "vtail_sweep", "vtail_cant",
    "htail_span", "htail_chord", "htail_z_pos",
    "htail_exists", "vtail_exists",
)
TAIL_GENE_INDICES = tuple(PARAM_INDEX[n] for n in TAIL_GENE_NAMES)

ENGINE_COUNTS = (1, 2, 4)


class RangeViolation(ValueError):
    """A physical parameter lies outside its declared range."""

    def __init__(self, name: str, value: float, lo: float, hi: float):
        super().__init__(f"{name}={value!r} outside physical range [{lo}, {hi}]")
        self.param = name


@dataclass
class EnvelopeSpec:
    """Hard outer box and per-engine caps; all dimensions in meters."""

    box_length: float
    box_height: float
    box_width: float
    engine_max_length: float = PARAM_SPECS[PARAM_INDEX["engine_length"]].hi
    engine_max_diameter: float = PARAM_SPECS[PARAM_INDEX["engine_size"]].hi

    def __post_init__(self):
        for name in ("box_length", "box_height", "box_width",
                     "engine_max_length", "engine_max_diameter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class AnatomyGenome:
    """One aircraft: the 25 physical parameters and the topology tag."""

    topology: TailTopology
    fuselage_length: float
    fuselage_radius: float
    nose_fineness: float
    tailcone_fineness: float
    wing_span: float
    wing_root_chord: float
    wing_taper: float
    wing_sweep: float
    wing_dihedral: float
    wing_x_pos: float
    wing_z_pos: float
    wing_thickness: float
    vtail_size: float
    vtail_sweep: float
    vtail_cant: float
    htail_span: float
    htail_chord: float
    htail_z_pos: float
    htail_exists: float
    vtail_exists: float
    engine_count: int
    engine_length: float
    engine_size: float
    engine_x_pos: float
    engine_spanwise: float
    clamped: bool = field(default=False, compare=False)

    def values(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def to_dict(self) -> dict:
        d = {n: float(getattr(self, n)) for n in PARAM_NAMES}
        d["engine_count"] = int(self.engine_count)
        d["topology"] = self.topology.value
        return d

    @classmethod
    def from_values(cls, topology: TailTopology, values, clamped: bool = False) -> "AnatomyGenome":
        vals = np.asarray(values, dtype=float)
        if vals.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got shape {vals.shape}")
        kwargs = {n: float(v) for n, v in zip(PARAM_NAMES, vals)}
        kwargs["engine_count"] = int(round(kwargs["engine_count"]))
        return cls(topology=topology, clamped=clamped, **kwargs)


@dataclass
class NormalizedGenome:
    """The genome mapped to [-1, 1]^25; the representation the GA and the
    prior operate on.  The topology tag rides along unnormalized."""

    values: np.ndarray
    topology: TailTopology

    def copy(self) -> "NormalizedGenome":
        return NormalizedGenome(self.values.copy(), self.topology)


_LO = np.array([p.lo for p in PARAM_SPECS])
_HI = np.array([p.hi for p in PARAM_SPECS])
_COUNT_IDX = PARAM_INDEX["engine_count"]
_FLAG_IDX = tuple(i for i, p in enumerate(PARAM_SPECS) if p.kind is ParamKind.FLAG)


def normalize(genome: AnatomyGenome) -> NormalizedGenome:
    """Map each physical parameter linearly from [lo, hi] onto [-1, 1].

    Raises RangeViolation (naming the parameter) if any value lies outside
    its declared range.  engine_count maps onto the centers of the thirds
    used by denormalize, flags onto the endpoints.
    """
    vals = genome.values()
    for i, p in enumerate(PARAM_SPECS):
        if p.kind is ParamKind.ENGINE_COUNT:
            if int(round(vals[i])) not in ENGINE_COUNTS:
                raise RangeViolation(p.name, vals[i], 1, 4)
        elif not (p.lo - 1e-12 <= vals[i] <= p.hi + 1e-12):
            raise RangeViolation(p.name, vals[i], p.lo, p.hi)
    ng = 2.0 * (vals - _LO) / (_HI - _LO) - 1.0
    count = int(round(vals[_COUNT_IDX]))
    ng[_COUNT_IDX] = {1: -2.0 / 3.0, 2: 0.0, 4: 2.0 / 3.0}[count]
    for i in _FLAG_IDX:
        ng[i] = 1.0 if vals[i] > 0.5 else -1.0
    return NormalizedGenome(values=ng, topology=genome.topology)


def denormalize(ng: NormalizedGenome) -> AnatomyGenome:
    """Inverse of normalize.  Components outside [-1, 1] are clamped and the
    result is flagged (evolution may push past bounds; clamping here is the
    projection contract).  engine_count snaps by thirds of its axis into
    {1, 2, 4}; existence flags snap on sign."""
    raw = np.asarray(ng.values, dtype=float)
    clamped = bool(np.any(raw < -1.0) or np.any(raw > 1.0))
    v = np.clip(raw, -1.0, 1.0)
    phys = _LO + (v + 1.0) * 0.5 * (_HI - _LO)
    c = v[_COUNT_IDX]
    count = 1 if c < -1.0 / 3.0 else (2 if c <= 1.0 / 3.0 else 4)
    phys[_COUNT_IDX] = count
    for i in _FLAG_IDX:
        phys[i] = 1.0 if v[i] > 0.0 else 0.0
    return AnatomyGenome.from_values(ng.topology, phys, clamped=clamped)


def apply_topology(genome: AnatomyGenome) -> AnatomyGenome:
    """Coerce the conditional tail genes into agreement with the tag.

    The GA mutates genes independently of the tag, so a T-tail individual
    can drift its stabilizer gene toward the fin root; rendering and
    physics must see the class-consistent interpretation.
    """
    g = replace(genome)
    t = g.topology
    if t is TailTopology.FLYING_WING:
        g.htail_exists = 0.0
        g.vtail_exists = 0.0
    elif t is TailTopology.V_TAIL:
        g.htail_exists = 0.0
        g.vtail_exists = 1.0
        g.vtail_cant = min(max(g.vtail_cant, 30.0), 55.0)
    else:
        if t is TailTopology.T_TAIL:
            g.htail_z_pos = min(max(g.htail_z_pos, 0.9), 1.0)
        elif t is TailTopology.CONVENTIONAL:
            g.htail_z_pos = min(g.htail_z_pos, 0.15)
        elif t is TailTopology.CRUCIFORM:
            g.htail_z_pos = min(max(g.htail_z_pos, 0.3), 0.7)
        g.vtail_cant = min(g.vtail_cant, 15.0)
    return g


def project_envelope(genome: AnatomyGenome, env: EnvelopeSpec) -> AnatomyGenome:
    """Clamp engine dimensions and fuselage length to the hard envelope.

    Wing span is deliberately not clamped: out-of-box tips are penalized in
    fitness instead of being silently rescaled.  Idempotent.
    """
    return replace(
        genome,
        engine_length=min(genome.engine_length, env.engine_max_length),
        engine_size=min(genome.engine_size, env.engine_max_diameter),
        fuselage_length=min(genome.fuselage_length, env.box_length),
    )


def decode(ng: NormalizedGenome, env: EnvelopeSpec) -> AnatomyGenome:
    """Canonical normalized-vector -> renderable-genome path."""
    return project_envelope(apply_topology(denormalize(ng)), env)


def topology_satisfied(genome: AnatomyGenome) -> bool:
    """True when the tag and the conditional genes agree."""
    t = genome.topology
    if t is TailTopology.FLYING_WING:
        return genome.htail_exists == 0.0 and genome.vtail_exists == 0.0
    if t is TailTopology.V_TAIL:
        return genome.vtail_cant >= 30.0
    if t is TailTopology.T_TAIL:
        return genome.htail_z_pos >= 0.9
    if t is TailTopology.CONVENTIONAL:
        return genome.htail_z_pos <= 0.15
    return 0.3 <= genome.htail_z_pos <= 0.7


# ---------------------------------------------------------------------------
# Class-conditioned, mass-tiered seeding
# ---------------------------------------------------------------------------

# Mass tiers: light (<2t, endurance drones), mid (<20t, business jets),
# heavy (transports).  Per-tier sub-ranges keep seeds at a coherent scale.
_TIER_EDGES = (2_000.0, 20_000.0)

_TIER_RANGES = {
    # name: (light, mid, heavy) sub-ranges
    "fuselage_length": ((8.0, 14.0), (14.0, 30.0), (28.0, 55.0)),
    "wing_span": ((8.0, 18.0), (14.0, 30.0), (28.0, 52.0)),
    "wing_root_chord": ((1.0, 2.2), (2.0, 5.0), (5.0, 10.0)),
    "wing_sweep": ((3.5, 5.5), (15.5, 17.5), (23.5, 25.5)),
    "htail_span": ((2.5, 4.5), (5.0, 9.0), (10.0, 18.0)),
    "htail_chord": ((0.75, 0.95), (1.5, 1.8), (2.85, 3.15)),
    "vtail_size": ((2.2, 2.6), (6.5, 7.5), (17.0, 19.0)),
    "engine_length": ((1.2, 1.4), (2.3, 2.5), (3.6, 3.8)),
    "engine_size": ((0.50, 0.60), (1.05, 1.15), (1.95, 2.05)),
}

# Parts and proportions far below render resolution at prior scale get
# tight seed bands per tier; evolution widens them freely, the prior
# merely pulls toward a typical value.
_TIER_THICKNESS = (0.130, 0.120, 0.113)

_SHARED_RANGES = {
    "nose_fineness": (2.1, 2.3),
    "tailcone_fineness": (2.32, 2.48),
    "wing_taper": (0.38, 0.44),
    "wing_dihedral": (2.8, 3.6),
    "wing_x_pos": (0.25, 0.50),
    "wing_z_pos": (-0.06, 0.06),
    "vtail_sweep": (23.5, 26.5),
}

# Overall fuselage fineness (length over diameter) band used to draw the
# radius conditionally on the length, so seeds never look like pancakes.
_BODY_FINENESS = (8.8, 10.2)

_MID = 0.5 * (_LO + _HI)


def mass_tier(mass_kg: float) -> int:
    if mass_kg < _TIER_EDGES[0]:
        return 0
    if mass_kg < _TIER_EDGES[1]:
        return 1
    return 2


def _seed_range(name: str, tier: int) -> tuple[float, float]:
    if name in _TIER_RANGES:
        return _TIER_RANGES[name][tier]
    if name in _SHARED_RANGES:
        return _SHARED_RANGES[name]
    spec = PARAM_SPECS[PARAM_INDEX[name]]
    return spec.lo, spec.hi


def seed_individual(topology: TailTopology, mission, rng: np.random.Generator) -> NormalizedGenome:
    """Draw one class-consistent individual inside the tier's sub-ranges.

    `mission` only needs a `.mass` attribute here.  Genes that the chosen
    class does not render (a flying wing's stabilizer, a single engine's
    spanwise station) are pinned to fixed representative values rather than
    sampled: an unrenderable gene carries no signal and would only add
    noise to the learned prior.
    """
    tier = mass_tier(mission.mass)
    g: dict[str, float] = {}

    def draw(name: str) -> float:
        lo, hi = _seed_range(name, tier)
        return float(rng.uniform(lo, hi))

    g["fuselage_length"] = draw("fuselage_length")
    fineness = rng.uniform(*_BODY_FINENESS)
    r_lo, r_hi = PARAM_SPECS[PARAM_INDEX["fuselage_radius"]].lo, PARAM_SPECS[PARAM_INDEX["fuselage_radius"]].hi
    g["fuselage_radius"] = float(np.clip(g["fuselage_length"] / (2.0 * fineness), r_lo, r_hi))
    for name in ("nose_fineness", "tailcone_fineness", "wing_span",
                 "wing_root_chord", "wing_taper", "wing_sweep", "wing_dihedral",
                 "wing_x_pos", "wing_z_pos", "vtail_size", "vtail_sweep",
                 "htail_span", "htail_chord", "engine_length", "engine_size"):
        g[name] = draw(name)
    g["wing_thickness"] = float(_TIER_THICKNESS[tier] + rng.uniform(-0.003, 0.003))

    # Engine count by tier; lone engines later rear-mount, so their wing
    # placement genes are meaningless and held at fixed values.
    if tier == 0:
        count = 1 if rng.random() < 0.7 else 2
    elif tier == 1:
        count = 2
    else:
        count = 2 if rng.random() < 0.7 else 4
    g["engine_count"] = float(count)
    if count == 1:
        g["engine_x_pos"] = 0.88
        g["engine_spanwise"] = 0.45
    else:
        semispan = 0.5 * g["wing_span"]
        span_lo = 0.30
        if count == 4:
            # inner pods sit at 55% of the outer station; keep them apart
            span_lo = max(0.30, 2.6 * g["engine_size"] / (0.45 * semispan))
        g["engine_spanwise"] = float(rng.uniform(min(max(span_lo, 0.34), 0.54), 0.56))
        pod_x = (g["wing_x_pos"] * g["fuselage_length"]
                 + g["engine_spanwise"] * semispan * math.tan(math.radians(g["wing_sweep"]))
                 + 0.25 * g["wing_root_chord"])
        g["engine_x_pos"] = float(np.clip(pod_x / g["fuselage_length"] + rng.uniform(-0.03, 0.05),
                                          0.05, 0.98))

    # Class-conditioned tail genes.
    g["htail_exists"] = 1.0
    g["vtail_exists"] = 1.0
    g["vtail_cant"] = 2.0
    if topology is TailTopology.CONVENTIONAL:
        g["htail_z_pos"] = float(rng.uniform(0.045, 0.085))
    elif topology is TailTopology.T_TAIL:
        g["htail_z_pos"] = float(rng.uniform(0.945, 0.975))
    elif topology is TailTopology.CRUCIFORM:
        g["htail_z_pos"] = float(rng.uniform(0.475, 0.525))
    elif topology is TailTopology.V_TAIL:
        g["htail_exists"] = 0.0
        g["vtail_cant"] = float(rng.uniform(38.0, 46.0))
        g["htail_z_pos"] = 0.5
        g["htail_span"] = float(_MID[PARAM_INDEX["htail_span"]])
        g["htail_chord"] = float(_MID[PARAM_INDEX["htail_chord"]])
        lo, hi = _seed_range("vtail_size", tier)
        g["vtail_size"] = float(rng.uniform(1.2 * lo, min(1.3 * hi, 40.0)))
    else:  # flying wing: no empennage; widen the root chord instead
        g["htail_exists"] = 0.0
        g["vtail_exists"] = 0.0
        g["htail_z_pos"] = 0.5
        g["htail_span"] = float(_MID[PARAM_INDEX["htail_span"]])
        g["htail_chord"] = float(_MID[PARAM_INDEX["htail_chord"]])
        g["vtail_size"] = 0.5
        g["vtail_sweep"] = float(_MID[PARAM_INDEX["vtail_sweep"]])
        g["vtail_cant"] = 2.0
        lo, hi = _seed_range("wing_root_chord", tier)
        chord_hi = min(1.2 * hi, PARAM_SPECS[PARAM_INDEX["wing_root_chord"]].hi)
        g["wing_root_chord"] = float(rng.uniform(min(0.5 * (lo + hi), chord_hi), chord_hi))
        lo, hi = _seed_range("wing_sweep", tier)
        g["wing_sweep"] = float(rng.uniform(min(lo + 6.0, 33.0), min(hi + 6.0, 38.0)))

    vals = np.array([g[n] for n in PARAM_NAMES], dtype=float)
    genome = AnatomyGenome.from_values(topology, vals)
    return normalize(genome)


def seed_population(n: int, mission, rng: np.random.Generator) -> list[NormalizedGenome]:
    """Round-robin the five topology classes over n seeds."""
    return [seed_individual(TOPOLOGIES[i % len(TOPOLOGIES)], mission, rng)
            for i in range(n)]


def init_population(n: int, mission, rng: np.random.Generator,
                    explore: float = 0.0) -> list[NormalizedGenome]:
    """Search-time initial population: class-conditioned seeds plus clamped
    exploration noise.  Seeds define the plausible manifold; a global
    search should start wider than it and let selection (and the learned
    prior, when active) pull the population back onto it."""
    pop = seed_population(n, mission, rng)
    if explore > 0.0:
        for ng in pop:
            noise = rng.normal(0.0, explore, size=N_PARAMS)
            ng.values = np.clip(ng.values + noise, -1.0, 1.0)
    return pop
