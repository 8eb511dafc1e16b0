from itertools import combinations

import numpy as np
import pytest

from parafiber.cerebellum import (
    CerebellumConfig,
    all_combinations,
    build_network,
    draw_unique_combinations,
    dump_network,
    load_network,
    validate_topology,
)
from parafiber.codec import PopulationEncoderConfig, gaussian_rates
from parafiber.engine import LifParams
from parafiber.errors import ConfigError, TopologyError


@pytest.fixture(scope="module")
def system():
    return build_network(CerebellumConfig(seed=3))


def test_default_population_sizes(system):
    net = system.network
    sizes = {p.name: p.size for p in net.populations}
    assert sizes == {
        "MoF_act": 16,
        "MoF_set": 16,
        "GrC": 256,
        "PuC_L": 8,
        "PuC_R": 8,
        "DCN_L": 4,
        "DCN_R": 4,
        "InO_L": 1,
        "InO_R": 1,
    }


def test_same_seed_identical_synapse_tables():
    a = build_network(CerebellumConfig(seed=11))
    b = build_network(CerebellumConfig(seed=11))
    for pa, pb in zip(a.network.projections, b.network.projections):
        assert pa.name == pb.name
        np.testing.assert_array_equal(pa.pre, pb.pre)
        np.testing.assert_array_equal(pa.post, pb.post)
        np.testing.assert_array_equal(pa.weight, pb.weight)
    c = build_network(CerebellumConfig(seed=12))
    pf_a = next(p for p in a.network.projections if p.name == "GrC->PuC_L")
    pf_c = next(p for p in c.network.projections if p.name == "GrC->PuC_L")
    assert not np.array_equal(pf_a.weight, pf_c.weight)


def test_granule_combinations_distinct_and_valid(system):
    combos = {tuple(sorted(c)) for c in system.grc_combos}
    assert len(combos) == 256
    universe = all_combinations(32, 4)
    assert len(universe) == 35960
    assert combos <= universe


def test_combination_exhaustion_fault():
    with pytest.raises(ConfigError):
        CerebellumConfig(n_mof_act=2, n_mof_set=2, n_grc=50, mof_per_grc=2)
    with pytest.raises(ConfigError):
        draw_unique_combinations(4, 2, 10, np.random.default_rng(0))


def test_validate_topology_passes_and_reports(system):
    report = validate_topology(system)
    assert report.puc_afferents_per_dcn == 8
    assert report.mof_afferents_per_dcn == 32
    assert report.mof_per_grc == 4
    assert report.pf_synapses_per_side == 2048
    assert report.grc_combinations_distinct


def test_validate_detects_extra_purkinje_afferent():
    system = build_network(CerebellumConfig(seed=3))
    proj = next(p for p in system.network.projections if p.name == "PuC_L->DCN_L")
    proj.post[0] = 1  # duplicate an afferent onto DCN_L neuron 1
    with pytest.raises(TopologyError, match="DCN_L"):
        validate_topology(system)


def test_validate_detects_forbidden_projection():
    from parafiber.engine import make_projection

    system = build_network(CerebellumConfig(seed=3))
    bad = make_projection("DCN_L->PuC_L", "DCN_L", "PuC_L", [(0, 0, 1.0, 1)])
    system.network.projections.append(bad)
    with pytest.raises(TopologyError, match="DCN_L"):
        validate_topology(system)


def test_no_granule_recurrence_or_output_feedback(system):
    for proj in system.network.projections:
        assert not (proj.source == "GrC" and proj.target == "GrC")
        assert not proj.source.startswith("DCN")
        assert not proj.target.startswith("InO")


def test_left_right_symmetry(system):
    projs = {p.name: p for p in system.network.projections}
    for left, right in (
        ("GrC->PuC_L", "GrC->PuC_R"),
        ("PuC_L->DCN_L", "PuC_R->DCN_R"),
        ("InO_L->PuC_L", "InO_R->PuC_R"),
        ("MoF_act->DCN_L", "MoF_act->DCN_R"),
    ):
        assert projs[left].n_synapses == projs[right].n_synapses
        np.testing.assert_array_equal(projs[left].pre, projs[right].pre)
        np.testing.assert_array_equal(projs[left].post, projs[right].post)


def test_mirrored_sides_share_weights():
    system = build_network(CerebellumConfig(seed=5, mirror_sides=True))
    np.testing.assert_array_equal(
        system.plasticity["L"].weights, system.plasticity["R"].weights
    )


def test_initial_weights_in_configured_range(system):
    cfg = system.config
    for side in ("L", "R"):
        w = system.plasticity[side].weights
        assert (w >= cfg.init_lo * cfg.w_max).all()
        assert (w <= cfg.init_hi * cfg.w_max).all()


def test_plastic_weights_shared_with_projection(system):
    proj = next(p for p in system.network.projections if p.name == "GrC->PuC_L")
    state = system.plasticity["L"]
    assert proj.weight is state.weights


def test_serialization_roundtrip(system):
    text = dump_network(system.network)
    assert text.startswith("# parafiber network v1")
    loaded = load_network(text)
    assert [p.name for p in loaded.populations] == [p.name for p in system.network.populations]
    for pa, pb in zip(system.network.projections, loaded.projections):
        np.testing.assert_array_equal(pa.pre, pb.pre)
        np.testing.assert_array_equal(pa.post, pb.post)
        np.testing.assert_allclose(pa.weight, pb.weight, rtol=1e-9)
        np.testing.assert_array_equal(pa.delay, pb.delay)
        np.testing.assert_array_equal(pa.sign, pb.sign)
        np.testing.assert_array_equal(pa.plastic, pb.plastic)
    assert dump_network(loaded) == text  # stable fixed point of the format


def test_load_rejects_foreign_text():
    with pytest.raises(ConfigError):
        load_network("not a dump\n")


def test_sparse_recoding_injective_over_input_grid(system):
    """Distinct (actual, set) angle pairs at the input code's resolution must
    activate distinct strongest-granule sets for at least 95 % of pairs."""
    cfg = system.config
    enc = PopulationEncoderConfig(n_cells=16, lo=-60.0, hi=60.0, sigma_rf=8.0, r_max=80.0)
    params: LifParams = cfg.lif_grc
    threshold_current = (params.v_threshold - params.v_rest) / params.r_m
    tau_s = params.tau_syn_exc / 1000.0

    grid = np.linspace(-56.0, 56.0, 15)  # one point per code resolution step
    signatures = {}
    collisions = 0
    total = 0
    for phi_act in grid:
        rates_act = gaussian_rates(float(phi_act), enc)
        for phi_set in grid:
            rates = np.concatenate([rates_act, gaussian_rates(float(phi_set), enc)])
            active = []
            for g, combo in enumerate(system.grc_combos):
                drive = cfg.w_mof_grc * tau_s * sum(rates[m] for m in combo)
                if drive >= threshold_current:
                    active.append(g)
            sig = tuple(active)
            total += 1
            if sig in signatures:
                collisions += 1
            signatures[sig] = (phi_act, phi_set)
    assert collisions / total < 0.05
