"""Shared test fixtures: independent oracles and network generators.

Everything here is deliberately written as plain scalar Python (dicts and
loops) so it shares no code path with the vectorized package internals it
is used to check.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from parafiber.engine import LifParams, Network, SpikeEvent, make_projection


def analytic_first_spike_tick(params: LifParams, i_const: float, dt: float = 1.0) -> int:
    """Closed-form first threshold crossing of a LIF charged from rest by a
    constant current, in ticks."""
    ri = params.r_m * i_const
    delta = params.v_threshold - params.v_rest
    assert ri > delta, "drive must be super-threshold"
    return math.ceil(params.tau_m * math.log(ri / (ri - delta)) / dt)


def scalar_current_replay(
    synapses: list[tuple[int, int, float, int, int]],
    spikes: list[tuple[int, int]],
    n_ticks: int,
    n_targets: int,
    tau_e: float,
    tau_i: float,
    dt: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force per-tick synaptic current traces.

    ``synapses`` rows are (pre, post, weight, delay, sign); ``spikes`` are
    (tick, pre).  Returns (i_exc, i_inh) with shape (n_ticks+1, n_targets):
    row t holds the currents after tick t's decay and deliveries, matching
    the engine's post-tick state.
    """
    sched_e: dict[tuple[int, int], float] = defaultdict(float)
    sched_i: dict[tuple[int, int], float] = defaultdict(float)
    for t, pre in spikes:
        for p, post, w, d, sign in synapses:
            if p == pre:
                if sign > 0:
                    sched_e[(t + d, post)] += w
                else:
                    sched_i[(t + d, post)] += w
    i_exc = np.zeros((n_ticks + 1, n_targets))
    i_inh = np.zeros((n_ticks + 1, n_targets))
    de, di = math.exp(-dt / tau_e), math.exp(-dt / tau_i)
    for t in range(1, n_ticks + 1):
        for j in range(n_targets):
            i_exc[t, j] = i_exc[t - 1, j] * de + sched_e.get((t, j), 0.0)
            i_inh[t, j] = i_inh[t - 1, j] * di + sched_i.get((t, j), 0.0)
    return i_exc, i_inh


def offline_weight_replay(
    n_synapses: int,
    pre_of_synapse: list[int],
    init_weights: list[float],
    pre_spikes: list[tuple[int, int]],
    teaching_spikes: list[int],
    lut_table: list[float],
    t_win: float,
    a_ltp: float,
    w_min: float,
    w_max: float,
    n_ticks: int,
    capacity: int = 160,
) -> np.ndarray:
    """Offline convolution of the potentiation/depression rules over a full
    spike record; returns weights after each tick, shape (n_ticks+1, n_syn).

    Semantics per tick t: first every presynaptic spike stamped t adds
    ``a_ltp`` (and enters that synapse's bounded history), then every
    teaching spike stamped t adds the summed kernel over that history;
    clamping after each update.
    """
    pre_by_tick: dict[int, list[int]] = defaultdict(list)
    for t, pre in pre_spikes:
        pre_by_tick[t].append(pre)
    teach_by_tick: dict[int, int] = defaultdict(int)
    for t in teaching_spikes:
        teach_by_tick[t] += 1
    bufs: list[list[int]] = [[] for _ in range(n_synapses)]
    w = [float(x) for x in init_weights]
    out = np.zeros((n_ticks + 1, n_synapses))
    out[0] = w
    for t in range(1, n_ticks + 1):
        for pre in pre_by_tick.get(t, ()):
            for s in range(n_synapses):
                if pre_of_synapse[s] == pre:
                    w[s] = min(max(w[s] + a_ltp, w_min), w_max)
                    bufs[s].append(t)
                    if len(bufs[s]) > capacity:
                        bufs[s].pop(0)
        for _ in range(teach_by_tick.get(t, 0)):
            for s in range(n_synapses):
                vals = [
                    lut_table[round(tb - t + t_win)]
                    for tb in bufs[s]
                    if -t_win <= tb - t <= 0
                ]
                if vals:
                    # correctly rounded accumulation, per the rule's contract
                    w[s] = min(max(w[s] + math.fsum(vals), w_min), w_max)
        out[t] = w
    return out


def _min_spaced_train(rng: np.random.Generator, duration_ms: int, rate_hz: float, min_gap_ms: int) -> list[int]:
    raw = np.flatnonzero(rng.random(duration_ms) < rate_hz / 1000.0) + 1
    train: list[int] = []
    for t in raw:
        if not train or t - train[-1] >= min_gap_ms:
            train.append(int(t))
    return train


def random_test_network(
    seed: int,
    n_neurons: int = 50,
    duration_ms: float = 10_000.0,
    dt: float = 1.0,
    mode=None,
) -> tuple[Network, list[SpikeEvent]]:
    """A random feedforward network plus its input record, built so a correct
    tick engine and a correct continuous-time engine must produce identical
    spike counts with sub-tick time offsets.

    Each neuron has one private decisive drive (a suprathreshold synapse
    from its own input line) with randomized weight and delay, plus
    sub-decisive mixing synapses (mixed signs) that perturb integration
    without ever deciding a crossing.  Input trains keep a 60 ms minimum
    gap, longer than the post-spike window (refractory plus current
    lifetime) where sub-tick reset differences could otherwise flip
    knife-edge responses.  Deeper LIF chains are avoided deliberately: each
    integration hop adds up to one tick of crossing-time quantization, so
    multi-hop offsets would exceed a one-tick comparison tolerance without
    indicating any engine defect.  Delays and input times are drawn on a
    1 ms grid and converted to ticks, so different tick sizes simulate the
    same physical network.
    """
    rng = np.random.default_rng(seed)
    net = Network(dt=dt, mode=mode)
    net.add_population("in", n_neurons, kind="source")
    # the long refractory lets the drive's own residual die out before
    # integration resumes, closing the post-refractory knife-edge zone
    params = LifParams(t_refractory=8.0)
    net.add_population("a", n_neurons, params=params)

    def ticks(ms: int) -> int:
        return max(1, int(round(ms / dt)))

    drive, mix_exc = [], []
    for j in range(n_neurons):
        drive.append((j, j, float(rng.uniform(20.0, 27.0)), ticks(int(rng.integers(1, 6)))))
        # excitatory-only mixing keeps every compound peak far from the
        # threshold (sub-decisive bumps stay ~8 mV below, decisive events
        # ~8 mV above), so crossings are always transversal and the two
        # engines cannot disagree on grazing crests
        for i in rng.choice(n_neurons, size=2, replace=False):
            mix_exc.append((int(i), j, float(rng.uniform(0.5, 1.5)), ticks(int(rng.integers(1, 6)))))
    net.add_projection(make_projection("in->a", "in", "a", drive))
    net.add_projection(make_projection("in->a_mix", "in", "a", mix_exc))
    net.finalize()

    events = []
    for i in range(n_neurons):
        for ms in _min_spaced_train(rng, int(duration_ms), 4.0, 60):
            events.append(SpikeEvent(ticks(ms), i))
    events.sort(key=lambda e: (e.t, e.neuron))
    return net, events
