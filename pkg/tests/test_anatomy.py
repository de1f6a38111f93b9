import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aerovolve import anatomy as an
from aerovolve.anatomy import (
    AnatomyGenome, EnvelopeSpec, NormalizedGenome, PARAM_INDEX, PARAM_NAMES,
    PARAM_SPECS, RangeViolation, TailTopology, TOPOLOGIES,
)


class Mission:
    def __init__(self, mass):
        self.mass = mass


def mid_genome(topology=TailTopology.CONVENTIONAL) -> AnatomyGenome:
    vals = 0.5 * (np.array([p.lo for p in PARAM_SPECS]) + np.array([p.hi for p in PARAM_SPECS]))
    vals[PARAM_INDEX["engine_count"]] = 2
    vals[PARAM_INDEX["htail_exists"]] = 1.0
    vals[PARAM_INDEX["vtail_exists"]] = 1.0
    return AnatomyGenome.from_values(topology, vals)


def test_exactly_25_parameters():
    assert len(PARAM_NAMES) == 25
    assert len(set(PARAM_NAMES)) == 25


def test_normalize_midpoint_is_zero():
    ng = an.normalize(mid_genome())
    for name in PARAM_NAMES:
        if name in ("engine_count", "htail_exists", "vtail_exists"):
            continue
        assert ng.values[PARAM_INDEX[name]] == pytest.approx(0.0, abs=1e-12)


def test_normalize_maximum_is_one():
    g = mid_genome()
    g.wing_span = PARAM_SPECS[PARAM_INDEX["wing_span"]].hi
    ng = an.normalize(g)
    assert ng.values[PARAM_INDEX["wing_span"]] == pytest.approx(1.0)


def test_normalize_hand_value():
    # fuselage_length in [8, 60]: 2*(21-8)/(60-8) - 1 = -0.5
    g = mid_genome()
    g.fuselage_length = 21.0
    ng = an.normalize(g)
    assert ng.values[PARAM_INDEX["fuselage_length"]] == pytest.approx(-0.5)


def test_normalize_out_of_range_names_parameter():
    g = mid_genome()
    g.wing_taper = 2.0
    with pytest.raises(RangeViolation) as exc:
        an.normalize(g)
    assert exc.value.param == "wing_taper"
    assert "wing_taper" in str(exc.value)


def test_denormalize_all_zero_gives_midpoints_and_two_engines():
    ng = NormalizedGenome(values=np.zeros(25), topology=TailTopology.CONVENTIONAL)
    g = an.denormalize(ng)
    assert g.engine_count == 2
    assert g.fuselage_length == pytest.approx(34.0)  # midpoint of [8, 60]
    assert not g.clamped


def test_denormalize_clamps_and_flags():
    vals = np.zeros(25)
    vals[0] = 1.7
    g = an.denormalize(NormalizedGenome(values=vals, topology=TailTopology.T_TAIL))
    assert g.clamped
    assert g.fuselage_length == pytest.approx(PARAM_SPECS[0].hi)


def test_engine_count_thirds():
    for axis_value, expected in ((-1.0, 1), (-0.5, 1), (-0.2, 2), (0.0, 2),
                                 (0.3, 2), (0.9, 4), (1.0, 4)):
        vals = np.zeros(25)
        vals[PARAM_INDEX["engine_count"]] = axis_value
        g = an.denormalize(NormalizedGenome(values=vals, topology=TailTopology.CONVENTIONAL))
        assert g.engine_count == expected, axis_value


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_roundtrip_identity_on_continuous_fields(seed):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-1, 1, size=25)
    ng = NormalizedGenome(values=raw, topology=TailTopology.CRUCIFORM)
    g = an.denormalize(ng)
    back = an.normalize(g)
    for i, spec in enumerate(PARAM_SPECS):
        if spec.kind is an.ParamKind.CONTINUOUS:
            assert back.values[i] == pytest.approx(raw[i], abs=1e-9)


def test_seed_flying_wing_has_no_tail():
    rng = np.random.default_rng(1)
    for _ in range(50):
        ng = an.seed_individual(TailTopology.FLYING_WING, Mission(600), rng)
        g = an.denormalize(ng)
        assert g.htail_exists == 0.0
        assert g.vtail_exists == 0.0


def test_seed_ttail_zpos_range():
    rng = np.random.default_rng(2)
    for _ in range(100):
        ng = an.seed_individual(TailTopology.T_TAIL, Mission(45000), rng)
        g = an.denormalize(ng)
        assert 0.9 <= g.htail_z_pos <= 1.0


def test_round_robin_counts():
    rng = np.random.default_rng(3)
    seeds = an.seed_population(1000, Mission(12000), rng)
    counts = {t: 0 for t in TOPOLOGIES}
    for ng in seeds:
        counts[ng.topology] += 1
    assert all(c == 200 for c in counts.values())


@pytest.mark.parametrize("topology", TOPOLOGIES)
def test_seeded_individuals_satisfy_topology_invariant(topology):
    rng = np.random.default_rng(4)
    for mass in (600.0, 12000.0, 45000.0):
        for _ in range(400):
            ng = an.seed_individual(topology, Mission(mass), rng)
            g = an.denormalize(ng)
            assert an.topology_satisfied(g), (topology, g)


def test_seeds_are_in_range():
    rng = np.random.default_rng(5)
    for i in range(300):
        topo = TOPOLOGIES[i % 5]
        ng = an.seed_individual(topo, Mission((600, 12000, 45000)[i % 3]), rng)
        assert np.all(ng.values >= -1.0 - 1e-12)
        assert np.all(ng.values <= 1.0 + 1e-12)


def test_project_envelope_clamps_engine():
    g = mid_genome()
    g.engine_length = 4.0
    env = EnvelopeSpec(40, 12, 36, engine_max_length=3.0, engine_max_diameter=3.0)
    assert an.project_envelope(g, env).engine_length == pytest.approx(3.0)


def test_project_envelope_leaves_span_alone():
    g = mid_genome()
    g.wing_span = 40.0
    env = EnvelopeSpec(40, 12, 30)
    assert an.project_envelope(g, env).wing_span == pytest.approx(40.0)


def test_project_envelope_idempotent():
    rng = np.random.default_rng(6)
    env = EnvelopeSpec(30, 9, 28, engine_max_length=2.5, engine_max_diameter=1.5)
    for _ in range(100):
        ng = NormalizedGenome(values=rng.uniform(-1, 1, 25), topology=TailTopology.V_TAIL)
        g = an.denormalize(ng)
        once = an.project_envelope(g, env)
        twice = an.project_envelope(once, env)
        assert np.allclose(once.values(), twice.values())


def test_projection_fits_engine_envelope_exactly():
    rng = np.random.default_rng(7)
    env = EnvelopeSpec(30, 9, 28, engine_max_length=2.0, engine_max_diameter=1.0)
    for _ in range(200):
        ng = NormalizedGenome(values=rng.uniform(-1, 1, 25), topology=TailTopology.CONVENTIONAL)
        g = an.decode(ng, env)
        assert g.engine_length <= env.engine_max_length + 1e-12
        assert g.engine_size <= env.engine_max_diameter + 1e-12
        assert g.fuselage_length <= env.box_length + 1e-12


def test_apply_topology_coerces_class_genes():
    vals = np.zeros(25)
    vals[PARAM_INDEX["htail_z_pos"]] = -0.6  # physical 0.2
    g = an.denormalize(NormalizedGenome(values=vals, topology=TailTopology.T_TAIL))
    coerced = an.apply_topology(g)
    assert coerced.htail_z_pos >= 0.9
    g2 = an.apply_topology(an.denormalize(
        NormalizedGenome(values=vals, topology=TailTopology.FLYING_WING)))
    assert g2.htail_exists == 0.0 and g2.vtail_exists == 0.0
