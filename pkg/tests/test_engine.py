import math

import numpy as np
import pytest

from parafiber.engine import (
    EXC,
    INH,
    LifParams,
    LifState,
    Network,
    NumericMode,
    SpikeEvent,
    deliver,
    lif_step,
    make_projection,
)
from parafiber.errors import ConfigError, EngineFault

from helpers import analytic_first_spike_tick, scalar_current_replay


# -- scalar neuron step -------------------------------------------------------


def test_equilibrium_state_unchanged():
    p = LifParams()
    s, spiked = lif_step(LifState(v=p.v_rest), p, 1.0)
    assert not spiked
    assert s == LifState(v=p.v_rest, i_exc=0.0, i_inh=0.0, refractory_remaining=0)


def test_first_spike_matches_analytic_oracle():
    p = LifParams(i_offset=2.0)  # r_m * i = 20 mV > 16 mV gap
    expected = analytic_first_spike_tick(p, p.i_offset)
    s = LifState(v=p.v_rest)
    for t in range(1, 100):
        s, spiked = lif_step(s, p, 1.0)
        if spiked:
            assert t == expected
            break
    else:
        pytest.fail("neuron never spiked")


@pytest.mark.parametrize("i_const", [1.8, 2.5, 4.0, 10.0])
def test_first_spike_analytic_sweep(i_const):
    p = LifParams(i_offset=i_const)
    net = Network()
    net.add_population("n", 1, params=p)
    spikes = net.run_for(300)
    assert spikes[0].t == analytic_first_spike_tick(p, i_const)


def test_leak_monotone_decay_toward_rest():
    p = LifParams()
    s = LifState(v=p.v_threshold - 0.01)
    previous = s.v
    for _ in range(50):
        s, spiked = lif_step(s, p, 1.0)
        assert not spiked
        assert s.v < previous
        previous = s.v
    assert s.v == pytest.approx(p.v_rest, abs=0.2)


def test_refractory_clamps_and_counts_down():
    p = LifParams(i_offset=10.0, t_refractory=3.0)
    s = LifState(v=p.v_rest)
    ticks_to_spike = analytic_first_spike_tick(p, 10.0)
    for _ in range(ticks_to_spike):
        s, spiked = lif_step(s, p, 1.0)
    assert spiked and s.refractory_remaining == 3
    for remaining in (2, 1, 0):
        s, spiked = lif_step(s, p, 1.0)
        assert not spiked
        assert s.v == p.v_reset
        assert s.refractory_remaining == remaining


def test_non_finite_state_faults():
    p = LifParams()
    with pytest.raises(EngineFault):
        lif_step(LifState(v=float("nan")), p, 1.0)


# -- deliver ------------------------------------------------------------------


def test_deliver_single_spike_delay():
    proj = make_projection("p", "a", "b", [(0, 3, 1.5, 2)])
    out = deliver(proj, [SpikeEvent(7, 0)], n_source=1)
    assert out == [(9, 3, EXC, 1.5)]


def test_deliver_same_tick_spikes_sum_on_application():
    proj = make_projection("p", "a", "b", [(0, 0, 1.0, 1), (1, 0, 2.0, 1)])
    out = deliver(proj, [SpikeEvent(4, 0), SpikeEvent(4, 1)], n_source=2)
    assert sorted(out) == [(5, 0, EXC, 1.0), (5, 0, EXC, 2.0)]


def test_deliver_unknown_neuron_faults():
    proj = make_projection("p", "a", "b", [(0, 0, 1.0, 1)])
    with pytest.raises(EngineFault):
        deliver(proj, [SpikeEvent(1, 5)], n_source=2)


def test_engine_current_jump_exactly_weight_after_delay():
    net = Network()
    net.add_population("src", 1, kind="source")
    net.add_population("tgt", 1, params=LifParams())
    net.add_projection(make_projection("p", "src", "tgt", [(0, 0, 1.5, 2)]))
    net.finalize()
    net.queue_input_spikes([SpikeEvent(3, 0)])
    trace = {}
    for t in range(1, 7):
        net.tick(t)
        trace[t] = net.currents("tgt")[0][0]
    assert trace[4] == 0.0
    assert trace[5] == 1.5  # decay of zero plus the full weight
    assert trace[6] == pytest.approx(1.5 * math.exp(-0.5))


def test_randomized_projection_matches_scalar_replay():
    rng = np.random.default_rng(42)
    n_pre, n_post, n_ticks = 6, 5, 400
    rows = [
        (int(rng.integers(n_pre)), int(rng.integers(n_post)),
         float(rng.uniform(0.1, 2.0)), int(rng.integers(1, 6)),
         EXC if rng.random() < 0.7 else INH)
        for _ in range(20)
    ]
    spikes = sorted(
        (int(rng.integers(1, n_ticks - 10)), int(rng.integers(n_pre))) for _ in range(1000)
    )
    # huge threshold keeps targets from spiking so currents stay externally driven
    params = LifParams(v_threshold=1e6)
    net = Network()
    net.add_population("src", n_pre, kind="source")
    net.add_population("tgt", n_post, params=params)
    exc_rows = [(p, q, w, d) for p, q, w, d, s in rows if s == EXC]
    inh_rows = [(p, q, w, d) for p, q, w, d, s in rows if s == INH]
    net.add_projection(make_projection("pe", "src", "tgt", exc_rows, sign=EXC))
    net.add_projection(make_projection("pi", "src", "tgt", inh_rows, sign=INH))
    net.finalize()
    net.queue_input_spikes([SpikeEvent(t, pre) for t, pre in spikes])

    ref_exc, ref_inh = scalar_current_replay(
        rows, spikes, n_ticks, n_post, params.tau_syn_exc, params.tau_syn_inh
    )
    for t in range(1, n_ticks + 1):
        net.tick(t)
        i_exc, i_inh = net.currents("tgt")
        np.testing.assert_allclose(i_exc, ref_exc[t], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(i_inh, ref_inh[t], rtol=1e-12, atol=1e-12)


# -- network tick -------------------------------------------------------------


def test_empty_network_empty_spikes():
    net = Network()
    net.finalize()
    assert net.tick(1) == []


def test_periodic_spiking_period_is_refractory_plus_charge():
    p = LifParams(i_offset=3.0, t_refractory=2.0)
    net = Network()
    net.add_population("n", 1, params=p)
    spikes = net.run_for(2000)
    times = [s.t for s in spikes]
    charge = analytic_first_spike_tick(p, 3.0)
    periods = np.diff(times)
    assert (periods == 2 + charge).all()
    assert times[0] == charge


def test_out_of_order_tick_faults():
    net = Network()
    net.add_population("n", 1, params=LifParams())
    net.finalize()
    net.tick(1)
    with pytest.raises(EngineFault):
        net.tick(3)


def test_input_spike_into_lif_population_faults():
    net = Network()
    net.add_population("n", 1, params=LifParams())
    net.finalize()
    with pytest.raises(EngineFault):
        net.queue_input_spikes([SpikeEvent(1, 0)])


def test_unknown_input_neuron_faults():
    net = Network()
    net.add_population("src", 2, kind="source")
    net.finalize()
    with pytest.raises(EngineFault):
        net.queue_input_spikes([SpikeEvent(1, 99)])


def test_source_spikes_are_reported_and_fanned_out():
    net = Network()
    net.add_population("src", 2, kind="source")
    net.add_population("tgt", 1, params=LifParams())
    net.add_projection(make_projection("p", "src", "tgt", [(0, 0, 2.0, 1), (1, 0, 2.0, 1)]))
    net.finalize()
    net.queue_input_spikes([SpikeEvent(2, 0), SpikeEvent(2, 1)])
    assert net.tick(1) == []
    assert net.tick(2) == [SpikeEvent(2, 0), SpikeEvent(2, 1)]
    net.tick(3)
    assert net.currents("tgt")[0][0] == 4.0  # increments sum


def _spike_log(seed: int, mode: NumericMode | None = None):
    from helpers import random_test_network

    net, events = random_test_network(seed, n_neurons=30, duration_ms=2000.0, mode=mode)
    return net.run_for(2000, inputs=events)


def test_determinism_bit_identical_spike_logs():
    assert _spike_log(7) == _spike_log(7)
    assert _spike_log(7, NumericMode(mode="fixed")) == _spike_log(7, NumericMode(mode="fixed"))


def test_refractory_never_violated_in_random_networks():
    from helpers import random_test_network

    for seed in (1, 2, 3):
        net, events = random_test_network(seed, n_neurons=30, duration_ms=2000.0)
        spikes = net.run_for(2000, inputs=events)
        lif_start = net.population("a").start
        per_neuron: dict[int, list[int]] = {}
        for ev in spikes:
            if ev.neuron >= lif_start:  # sources carry no refractory contract
                per_neuron.setdefault(ev.neuron, []).append(ev.t)
        n_ref = int(round(net.population("a").params.t_refractory))
        for times in per_neuron.values():
            assert (np.diff(times) > n_ref).all()


def test_current_decays_to_zero_without_input():
    net = Network()
    net.add_population("src", 1, kind="source")
    net.add_population("tgt", 1, params=LifParams(v_threshold=1e6))
    net.add_projection(make_projection("p", "src", "tgt", [(0, 0, 5.0, 1)]))
    net.finalize()
    net.queue_input_spikes([SpikeEvent(1, 0)])
    net.tick(1)
    net.tick(2)  # delivery lands here
    previous = net.currents("tgt")[0][0]
    assert previous == 5.0
    for t in range(3, 100):
        net.tick(t)
        i_exc = net.currents("tgt")[0][0]
        assert i_exc < previous
        previous = i_exc
    assert previous < 1e-8


def test_fixed_point_matches_float_on_small_network():
    float_log = _spike_log(11)
    fixed_log = _spike_log(11, NumericMode(mode="fixed"))
    counts_f: dict[int, int] = {}
    counts_x: dict[int, int] = {}
    for ev in float_log:
        counts_f[ev.neuron] = counts_f.get(ev.neuron, 0) + 1
    for ev in fixed_log:
        counts_x[ev.neuron] = counts_x.get(ev.neuron, 0) + 1
    total_f = sum(counts_f.values())
    total_x = sum(counts_x.values())
    assert abs(total_f - total_x) / total_f < 0.02


def test_saturation_counted_in_fixed_mode():
    p = LifParams(v_threshold=1e5, i_offset=0.0)  # threshold beyond the format range
    net = Network(mode=NumericMode(mode="fixed"))
    net.add_population("src", 1, kind="source")
    net.add_population("tgt", 1, params=p)
    net.add_projection(make_projection("p", "src", "tgt", [(0, 0, 7e4, 1)]))
    net.finalize()
    net.queue_input_spikes([SpikeEvent(1, 0)])
    net.tick(1)
    net.tick(2)
    assert net.saturations.count > 0


def test_vectorized_engine_matches_scalar_lif_step():
    # one neuron driven by a random input train, replayed with the scalar op
    rng = np.random.default_rng(3)
    p = LifParams(i_offset=1.0)
    net = Network()
    net.add_population("src", 1, kind="source")
    net.add_population("n", 1, params=p)
    net.add_projection(make_projection("pr", "src", "n", [(0, 0, 1.2, 1)]))
    net.finalize()
    ticks = sorted(set(int(t) for t in rng.integers(1, 500, size=150)))
    net.queue_input_spikes([SpikeEvent(t, 0) for t in ticks])

    state = LifState(v=p.v_rest)
    tickset = set(ticks)
    for t in range(1, 501):
        engine_spikes = net.tick(t)
        inc = 1.2 if (t - 1) in tickset else 0.0  # delay 1: spike at s arrives at s+1
        state, spiked = lif_step(state, p, 1.0, inc_exc=inc)
        got = net.population("n").lif_state(0, net.mode)
        assert got.v == pytest.approx(state.v, abs=1e-12)
        assert got.i_exc == pytest.approx(state.i_exc, abs=1e-12)
        assert spiked == (len(engine_spikes) == 2 if (t in tickset) else len(engine_spikes) == 1)


def test_projection_validation():
    with pytest.raises(ConfigError):
        make_projection("p", "a", "b", [(0, 0, -1.0, 1)])  # negative weight
    with pytest.raises(ConfigError):
        make_projection("p", "a", "b", [(0, 0, 1.0, 0)])  # zero delay
