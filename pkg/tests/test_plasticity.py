import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parafiber.errors import ConfigError
from parafiber.plasticity import (
    SPIKE_BUFFER_CAPACITY,
    KernelLut,
    PlasticityState,
    SynapseSpikeBuffer,
    build_kernel_lut,
)

from helpers import offline_weight_replay


def default_lut(**kw) -> KernelLut:
    args = dict(t_peak=100.0, sigma=25.0, a_ltd=0.02, a_ltp=0.002, bin_ms=1.0, t_win=250.0, w_min=0.0, w_max=4.0)
    args.update(kw)
    return build_kernel_lut(**args)


def make_state(weights, lut=None):
    w = np.asarray(weights, dtype=np.float64)
    return PlasticityState(lut or default_lut(), w, np.arange(len(w)), len(w)), w


# -- kernel table -------------------------------------------------------------


def test_kernel_minimum_at_peak_lead_time():
    lut = default_lut()
    assert lut.ltd(-100.0) == pytest.approx(-0.02, abs=1e-18)
    assert np.argmin(lut.table) == 250 - 100  # the -100 ms bin


def test_kernel_zero_outside_causal_window():
    lut = default_lut()
    assert lut.ltd(10.0) == 0.0
    assert lut.ltd(0.5) == 0.0
    assert lut.ltd(-250.0) != 0.0
    assert lut.ltd(-250.6) == 0.0


def test_kernel_bins_match_closed_form():
    lut = default_lut()
    centers = -250.0 + np.arange(251)
    expected = -0.02 * np.exp(-((centers + 100.0) ** 2) / (2.0 * 25.0**2))
    np.testing.assert_allclose(lut.table, expected, rtol=1e-9)


def test_kernel_everywhere_nonpositive():
    lut = default_lut()
    assert (lut.table <= 0).all()


@pytest.mark.parametrize(
    "kw",
    [
        dict(t_peak=0.0),
        dict(t_peak=300.0),
        dict(sigma=-1.0),
        dict(a_ltd=0.0),
        dict(bin_ms=3.0),  # does not divide 250
        dict(w_min=5.0),  # >= w_max
    ],
)
def test_kernel_invalid_shapes_rejected(kw):
    with pytest.raises(ConfigError):
        default_lut(**kw)


# -- single-synapse operations ---------------------------------------------


def test_ltp_clamps_at_w_max():
    state, w = make_state([4.0])
    state.on_presynaptic_spike(0, 1)
    assert w[0] == 4.0


def test_ltp_appends_to_buffer():
    state, w = make_state([1.0])
    state.on_presynaptic_spike(0, 5)
    assert state.buffer_entries(0) == [5]
    assert w[0] == pytest.approx(1.002)


def test_buffer_holds_latest_160():
    state, _ = make_state([1.0])
    for t in range(1, 162):
        state.on_presynaptic_spike(0, t)
    entries = state.buffer_entries(0)
    assert len(entries) == SPIKE_BUFFER_CAPACITY == 160
    assert entries[0] == 2 and entries[-1] == 161  # oldest evicted first


def test_synapse_spike_buffer_type():
    buf = SynapseSpikeBuffer()
    for t in range(1, 165):
        buf.push(t)
    assert len(buf) == 160
    assert buf.entries()[0] == 5


def test_teaching_spike_empty_buffer_no_change():
    state, w = make_state([2.0])
    state.on_teaching_spike(0, 500)
    assert w[0] == 2.0


def test_teaching_spike_at_peak_depresses_by_a_ltd():
    state, w = make_state([2.0])
    state.on_presynaptic_spike(0, 50)
    state.on_teaching_spike(0, 150)  # lead time exactly -100 ms
    assert w[0] == pytest.approx(2.0 + 0.002 - 0.02)


def test_depression_clamps_at_w_min():
    lut = default_lut(a_ltd=1.0)
    state, w = make_state([0.5], lut)
    state.on_presynaptic_spike(0, 50)
    state.on_teaching_spike(0, 150)
    assert w[0] == 0.0


def test_causality_later_presynaptic_spikes_contribute_nothing():
    state, w = make_state([2.0])
    state.on_presynaptic_spike(0, 300)  # after the teaching spike below
    state.on_teaching_spike(0, 200)
    assert w[0] == pytest.approx(2.002)  # only the potentiation


# -- batch processing vs offline convolution oracle -----------------------


def random_scenario(seed: int, n_syn: int, n_ticks: int):
    rng = np.random.default_rng(seed)
    pre_of_synapse = list(range(n_syn))
    init = rng.uniform(0.5, 3.5, n_syn)
    pre_spikes = []
    for s in range(n_syn):
        ticks = np.flatnonzero(rng.random(n_ticks) < 0.03) + 1
        pre_spikes += [(int(t), s) for t in ticks]
    teaching = [int(t) for t in np.flatnonzero(rng.random(n_ticks) < 0.01) + 1]
    return pre_of_synapse, init, sorted(pre_spikes), teaching


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_batch_processing_equals_offline_convolution(seed):
    n_syn, n_ticks = 8, 3000
    pre_of, init, pre_spikes, teaching = random_scenario(seed, n_syn, n_ticks)
    lut = default_lut()
    weights = init.copy()
    state = PlasticityState(lut, weights, np.asarray(pre_of), n_syn)

    expected = offline_weight_replay(
        n_syn, pre_of, init.tolist(), pre_spikes, teaching,
        lut.table.tolist(), lut.t_win_ms, lut.a_ltp, lut.w_min, lut.w_max, n_ticks,
    )
    pre_by_tick: dict[int, list[int]] = {}
    for t, s in pre_spikes:
        pre_by_tick.setdefault(t, []).append(s)
    teach_set: dict[int, int] = {}
    for t in teaching:
        teach_set[t] = teach_set.get(t, 0) + 1
    for t in range(1, n_ticks + 1):
        state.process_tick(t, np.asarray(pre_by_tick.get(t, []), dtype=np.int64), teach_set.get(t, 0))
        np.testing.assert_array_equal(weights, expected[t])


def test_disabled_state_freezes_weights_and_buffers():
    state, w = make_state([1.0, 2.0])
    state.enabled = False
    state.process_tick(5, np.asarray([0, 1]), 1)
    assert list(w) == [1.0, 2.0]
    assert state.buffer_entries(0) == []


# -- properties -----------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 400), st.booleans()), min_size=1, max_size=60))
def test_weights_always_in_bounds(events):
    lut = default_lut(a_ltd=0.8, a_ltp=0.5, w_max=2.0)
    weights = np.array([1.0])
    state = PlasticityState(lut, weights, np.array([0]), 1)
    for t, is_teaching in sorted(events):
        if is_teaching:
            state.on_teaching_spike(0, t)
        else:
            state.on_presynaptic_spike(0, t)
        assert 0.0 <= weights[0] <= 2.0


def test_selective_depression_of_correlated_synapse():
    # A fires 100 +- 5 ms before every teaching spike; B fires the same number
    # of times at uncorrelated moments; equal potentiation, so the timing
    # alone must separate the final weights.
    rng = np.random.default_rng(9)
    lut = default_lut()
    weights = np.array([2.0, 2.0])
    state = PlasticityState(lut, weights, np.array([0, 1]), 2)
    teaching = np.arange(500, 60_000, 1000)
    a_spikes = [int(t - 100 + rng.integers(-5, 6)) for t in teaching]
    b_spikes = sorted(int(x) for x in rng.integers(1, 60_000, len(teaching)))
    events = sorted(
        [(t, "a") for t in a_spikes] + [(t, "b") for t in b_spikes] + [(int(t), "T") for t in teaching]
    )
    for t, kind in events:
        if kind == "a":
            state.on_presynaptic_spike(0, t)
        elif kind == "b":
            state.on_presynaptic_spike(1, t)
        else:
            state.process_tick(t, np.asarray([], dtype=np.int64), 1)
    assert weights[0] < weights[1]
    assert weights[0] <= 0.8 * weights[1]
