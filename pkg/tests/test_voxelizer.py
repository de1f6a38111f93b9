import numpy as np
import pytest
from scipy import integrate

from aerovolve import anatomy as an
from aerovolve.anatomy import EnvelopeSpec, NormalizedGenome, PARAM_INDEX, TailTopology
from aerovolve.voxelizer import (
    ConfigError, Label, engine_mount_mode, EngineMount, fuselage_radius_profile,
    part_bounds, voxelize,
)

ENV = EnvelopeSpec(60, 25, 66, engine_max_length=6, engine_max_diameter=3)


class Mission:
    def __init__(self, mass):
        self.mass = mass


def seeded(topology, mass=12000.0, seed=0):
    rng = np.random.default_rng(seed)
    ng = an.seed_individual(topology, Mission(mass), rng)
    return an.decode(ng, ENV)


def balanced_genome():
    """Length and span comparable so the cubic pitch resolves the body."""
    vals = np.zeros(25)
    g = an.denormalize(NormalizedGenome(values=vals, topology=TailTopology.CONVENTIONAL))
    g.fuselage_length = 20.0
    g.fuselage_radius = 1.5
    g.nose_fineness = 2.0
    g.tailcone_fineness = 2.0
    g.wing_span = 20.0
    g.wing_root_chord = 3.0
    g.wing_thickness = 0.14
    g.htail_z_pos = 0.1
    return an.apply_topology(g)


# ---------------------------------------------------------------------------
# radius profile
# ---------------------------------------------------------------------------

def test_profile_constant_midsection():
    g = balanced_genome()
    assert fuselage_radius_profile(0.5, g) == pytest.approx(g.fuselage_radius)


def test_profile_closes_at_tail():
    g = balanced_genome()
    assert fuselage_radius_profile(1.0, g) <= 0.05 * g.fuselage_radius


def test_profile_blunt_nose_exceeds_conic():
    g = balanced_genome()
    nose_len = g.nose_fineness * g.fuselage_radius
    x_half = 0.5 * nose_len / g.fuselage_length
    blunt = fuselage_radius_profile(x_half, g)
    conic = 0.5 * g.fuselage_radius  # straight taper at half the nose
    assert blunt > conic


def test_profile_rejects_out_of_range():
    with pytest.raises(ValueError):
        fuselage_radius_profile(1.2, balanced_genome())


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def test_resolution_floor():
    with pytest.raises(ConfigError):
        voxelize(balanced_genome(), ENV, 8)


def test_determinism_bit_identical():
    g = seeded(TailTopology.CRUCIFORM, seed=3)
    a = voxelize(g, ENV, 64)
    b = voxelize(g, ENV, 64)
    assert np.array_equal(a.labels, b.labels)
    assert a.voxel_pitch == b.voxel_pitch
    assert np.array_equal(a.origin, b.origin)


def test_nonempty_for_in_range_genomes():
    rng = np.random.default_rng(11)
    for i in range(40):
        ng = NormalizedGenome(values=rng.uniform(-1, 1, 25),
                              topology=an.TOPOLOGIES[i % 5])
        g = an.decode(ng, ENV)
        grid = voxelize(g, ENV, 48)
        assert grid.occupied_count() > 0


def test_centerline_mirror_symmetry():
    for topo in (TailTopology.CONVENTIONAL, TailTopology.V_TAIL, TailTopology.FLYING_WING):
        g = seeded(topo, seed=5)
        grid = voxelize(g, ENV, 64)
        assert np.array_equal(grid.labels, np.flip(grid.labels, axis=1))


def test_flying_wing_has_no_empennage():
    g = seeded(TailTopology.FLYING_WING, seed=7)
    grid = voxelize(g, ENV, 64)
    counts = grid.label_counts()
    assert counts[int(Label.VTAIL)] == 0
    assert counts[int(Label.HTAIL)] == 0
    assert counts[int(Label.WING)] > 0


def test_single_engine_rear_mount_rule():
    rng = np.random.default_rng(13)
    for seed in range(20):
        ng = an.seed_individual(TailTopology.CONVENTIONAL, Mission(600), rng)
        ng.values[PARAM_INDEX["engine_count"]] = -0.9  # force a single engine
        g = an.decode(ng, ENV)
        assert g.engine_count == 1
        assert engine_mount_mode(g) is EngineMount.REAR
        grid = voxelize(g, ENV, 64)
        eng = np.argwhere(grid.labels == int(Label.ENGINE))
        fus = np.argwhere(grid.labels == int(Label.FUSELAGE))
        assert eng.size and fus.size
        f0, f1 = fus[:, 0].min(), fus[:, 0].max()
        threshold = f0 + 0.7 * (f1 - f0)
        assert eng[:, 0].min() >= threshold          # aft 30% only
        assert eng[:, 0].max() > f1                   # protruding nozzle


def test_twin_engine_two_components():
    g = seeded(TailTopology.CONVENTIONAL, mass=45000.0, seed=2)
    g.engine_count = 2
    g.engine_x_pos = 0.40
    g.engine_spanwise = 0.5
    grid = voxelize(g, ENV, 64)
    parts = part_bounds(grid, g)
    engines = [p for p in parts if p.part is Label.ENGINE]
    assert len(engines) == 2


def test_four_engines_two_stations_symmetric():
    g = seeded(TailTopology.CONVENTIONAL, mass=45000.0, seed=2)
    g.engine_count = 4
    g.engine_x_pos = 0.40
    g.engine_spanwise = 0.55
    g.engine_size = 1.6
    grid = voxelize(g, ENV, 96)
    parts = part_bounds(grid, g)
    engines = [p for p in parts if p.part is Label.ENGINE]
    assert len(engines) == 4
    res = grid.resolution
    centers = sorted((p.lo[1] + p.hi[1]) / 2 - (res - 1) / 2 for p in engines)
    # symmetric pairs about the centerline, at two distinct |y| stations
    assert centers[0] == pytest.approx(-centers[3], abs=1.0)
    assert centers[1] == pytest.approx(-centers[2], abs=1.0)
    assert abs(centers[0] - centers[1]) > 1.0


def test_side_mount_mode_selected_aft():
    g = seeded(TailTopology.CONVENTIONAL, mass=45000.0, seed=2)
    g.engine_count = 2
    g.engine_x_pos = 0.85
    assert engine_mount_mode(g) is EngineMount.SIDE


def test_part_bounds_single_part_equals_occupied_extents():
    grid = voxelize(balanced_genome(), ENV, 48)
    g = balanced_genome()
    parts = part_bounds(grid, g)
    for p in parts:
        mask = grid.labels == int(p.part)
        occ = np.argwhere(mask)
        lo = occ.min(axis=0)
        hi = occ.max(axis=0)
        # the part's occupied box never exceeds its label's overall extents
        assert all(p.lo[a] >= lo[a] and p.hi[a] <= hi[a] for a in range(3))
        assert p.characteristic_size > 0


def test_part_bounds_empty_grid_raises():
    from aerovolve.voxelizer import VoxelGrid
    empty = VoxelGrid(labels=np.zeros((16,) * 3, dtype=np.uint8),
                      voxel_pitch=1.0, origin=np.zeros(3))
    with pytest.raises(ValueError):
        part_bounds(empty, balanced_genome())


# ---------------------------------------------------------------------------
# volume properties
# ---------------------------------------------------------------------------

def test_fuselage_volume_matches_quadrature():
    g = balanced_genome()
    grid = voxelize(g, ENV, 96)
    voxel_volume = grid.label_counts()[int(Label.FUSELAGE)] * grid.voxel_pitch**3
    analytic, _ = integrate.quad(
        lambda x: np.pi * fuselage_radius_profile(x / g.fuselage_length, g) ** 2,
        0.0, g.fuselage_length, limit=200)
    assert voxel_volume == pytest.approx(analytic, rel=0.15)


def test_monotone_refinement_under_ten_percent():
    g = balanced_genome()
    v48 = voxelize(g, ENV, 48)
    v96 = voxelize(g, ENV, 96)
    total48 = v48.occupied_count() * v48.voxel_pitch**3
    total96 = v96.occupied_count() * v96.voxel_pitch**3
    assert abs(total96 - total48) / total48 < 0.10


def test_mirrored_genome_grid_is_self_mirror():
    # dihedral and spanwise positions are symmetric by construction; the
    # whole grid must equal its own centerline mirror
    g = seeded(TailTopology.T_TAIL, seed=9)
    grid = voxelize(g, ENV, 80)
    assert np.array_equal(grid.labels, np.flip(grid.labels, axis=1))
