"""Event-driven double-precision reference simulator.

This is the cross-check twin of the tick engine: the same LIF/exponential-
current model, but integrated exactly between events on a continuous time
axis.  Neuron state is only touched when something happens to that neuron
(a synaptic delivery, the end of a refractory period, or a predicted
threshold crossing); between events the closed-form solution

    v(t0+d) = v_inf + (v0 - v_inf) exp(-d/tau_m)
              + r_m * i_exc0 * K(d, tau_e) - r_m * i_inh0 * K(d, tau_i)

with ``K(d, tau_s) = tau_s/(tau_s - tau_m) * (exp(-d/tau_s) - exp(-d/tau_m))``
(and the ``(d/tau_m) exp(-d/tau_m)`` limit at ``tau_s == tau_m``) advances the
membrane, and synaptic currents decay exponentially.  Threshold crossings
are bracketed on a fine sample grid and then located by bisection to 1e-6 ms.

The implementation deliberately shares no stepping logic with the engine;
it only reads the same network description (populations, synapse tables).
A small desk-scale guard (1000 neurons) keeps it in its intended role.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .engine import Network, SpikeEvent
from .errors import ConfigError, EngineFault
from .plasticity import SPIKE_BUFFER_CAPACITY, KernelLut

BISECT_TOL_MS = 1e-6
_KIND_DELIVERY = 0
_KIND_REFRACTORY_END = 1
_KIND_THRESHOLD = 2


class OracleSpike(NamedTuple):
    t: float  # ms
    neuron: int  # global neuron id


@dataclass(order=True)
class _Event:
    time: float
    neuron: int
    kind: int
    seq: int
    payload: tuple = field(compare=False, default=())


class EventQueue:
    """Priority queue popping in (time, neuron id, event kind) order."""

    def __init__(self) -> None:
        self._heap: list[_Event] = []
        self._seq = 0
        self._last_time = -math.inf

    def push(self, time: float, neuron: int, kind: int, payload: tuple = ()) -> None:
        self._seq += 1
        heapq.heappush(self._heap, _Event(time, neuron, kind, self._seq, payload))

    def pop(self) -> _Event:
        ev = heapq.heappop(self._heap)
        if ev.time < self._last_time - 1e-12:
            raise EngineFault("event queue popped out of time order")
        self._last_time = ev.time
        return ev

    def __len__(self) -> int:
        return len(self._heap)


class _NeuronState:
    __slots__ = ("t", "v", "i_exc", "i_inh", "ref_until", "version")

    def __init__(self, v: float):
        self.t = 0.0
        self.v = v
        self.i_exc = 0.0
        self.i_inh = 0.0
        self.ref_until = -1.0
        self.version = 0


def _k_factor(d, tau_s: float, tau_m: float):
    if abs(tau_s - tau_m) < 1e-9:
        return (d / tau_m) * np.exp(-d / tau_m)
    return tau_s / (tau_s - tau_m) * (np.exp(-d / tau_s) - np.exp(-d / tau_m))


class _OracleSim:
    def __init__(self, net: Network):
        if net.total_neurons > 1000:
            raise ConfigError("reference simulator is desk-scale only (<= 1000 neurons)")
        self.net = net
        self.dt = net.dt
        self.queue = EventQueue()
        self.spikes: list[OracleSpike] = []
        self.states: dict[int, _NeuronState] = {}
        self.pop_of: dict[int, object] = {}
        for pop in net.populations:
            for i in range(pop.size):
                gid = pop.start + i
                self.pop_of[gid] = pop
                if pop.kind == "lif":
                    self.states[gid] = _NeuronState(pop.params.v_rest)
        # per-source-neuron fan-out: (target gid, projection, row, delay ms, sign)
        self.fanout: dict[int, list[tuple]] = {gid: [] for gid in self.pop_of}
        for pi, proj in enumerate(net.projections):
            src = net.population(proj.source)
            tgt = net.population(proj.target)
            for k in range(proj.n_synapses):
                self.fanout[src.start + int(proj.pre[k])].append(
                    (tgt.start + int(proj.post[k]), pi, k, float(proj.delay[k]) * self.dt, int(proj.sign[k]))
                )
        self.weights: dict[int, np.ndarray] = {
            pi: proj.weight.copy() for pi, proj in enumerate(net.projections)
        }
        self.replays: list[_PlasticReplay] = []

    # -- closed-form state advancement ------------------------------------

    def _advance(self, gid: int, t: float) -> None:
        st = self.states[gid]
        if t <= st.t:
            return
        p = self.pop_of[gid].params
        if st.ref_until > st.t:
            t_free = min(t, st.ref_until)
            d = t_free - st.t
            st.i_exc *= math.exp(-d / p.tau_syn_exc)
            st.i_inh *= math.exp(-d / p.tau_syn_inh)
            st.v = p.v_reset
            st.t = t_free
            if t <= st.ref_until:
                return
        d = t - st.t
        v_inf = p.v_rest + p.r_m * p.i_offset
        st.v = (
            v_inf
            + (st.v - v_inf) * math.exp(-d / p.tau_m)
            + p.r_m * st.i_exc * float(_k_factor(d, p.tau_syn_exc, p.tau_m))
            - p.r_m * st.i_inh * float(_k_factor(d, p.tau_syn_inh, p.tau_m))
        )
        st.i_exc *= math.exp(-d / p.tau_syn_exc)
        st.i_inh *= math.exp(-d / p.tau_syn_inh)
        st.t = t

    def _v_at(self, gid: int, d: np.ndarray) -> np.ndarray:
        """Membrane at offsets ``d`` (ms) after the state's own time, assuming
        no intervening events (caller guarantees d starts after refractory)."""
        st = self.states[gid]
        p = self.pop_of[gid].params
        v_inf = p.v_rest + p.r_m * p.i_offset
        return (
            v_inf
            + (st.v - v_inf) * np.exp(-d / p.tau_m)
            + p.r_m * st.i_exc * _k_factor(d, p.tau_syn_exc, p.tau_m)
            - p.r_m * st.i_inh * _k_factor(d, p.tau_syn_inh, p.tau_m)
        )

    # -- threshold prediction ----------------------------------------------

    def _schedule_threshold_search(self, gid: int, horizon_ms: float) -> None:
        st = self.states[gid]
        p = self.pop_of[gid].params
        if st.ref_until > st.t:
            return  # a refractory-end event will re-trigger the search
        # cheap upper bound: leak part can never exceed max(v, v_inf); the
        # excitatory kernel peaks below k_max; inhibition only lowers v
        v_inf = p.v_rest + p.r_m * p.i_offset
        k_max = _k_peak(p.tau_syn_exc, p.tau_m)
        if max(st.v, v_inf) + p.r_m * max(st.i_exc, 0.0) * k_max < p.v_threshold:
            return
        t_cross = self._find_crossing(gid, horizon_ms)
        if t_cross is not None:
            self.queue.push(t_cross, gid, _KIND_THRESHOLD, (st.version,))

    def _find_crossing(self, gid: int, horizon_ms: float) -> float | None:
        st = self.states[gid]
        p = self.pop_of[gid].params
        tau_min = min(p.tau_m, p.tau_syn_exc, p.tau_syn_inh)
        span = min(40.0 * max(p.tau_m, p.tau_syn_exc, p.tau_syn_inh), horizon_ms - st.t)
        if span <= 0:
            return None
        n = max(8, int(math.ceil(span / (tau_min / 6.0))))
        grid = np.linspace(0.0, span, n + 1)
        v = self._v_at(gid, grid)
        above = np.flatnonzero(v >= p.v_threshold)
        if len(above) == 0:
            # beyond the sampled span the currents are dead; only a
            # super-threshold stationary drive can still cross
            v_inf = p.v_rest + p.r_m * p.i_offset
            if v_inf >= p.v_threshold and v[-1] < p.v_threshold:
                # pure leak toward v_inf from the last sample
                rem = p.tau_m * math.log((v_inf - float(v[-1])) / (v_inf - p.v_threshold))
                return st.t + span + rem
            return None
        k = int(above[0])
        if k == 0:
            return st.t  # already at/over threshold (delivery landed on the boundary)
        lo, hi = float(grid[k - 1]), float(grid[k])
        for _ in range(80):
            if hi - lo <= BISECT_TOL_MS:
                break
            mid = 0.5 * (lo + hi)
            if float(self._v_at(gid, np.asarray(mid))) >= p.v_threshold:
                hi = mid
            else:
                lo = mid
        return st.t + hi

    # -- spike handling -------------------------------------------------------

    def _emit(self, gid: int, t: float, horizon_ms: float) -> None:
        self.spikes.append(OracleSpike(t, gid))
        pop = self.pop_of[gid]
        if pop.kind == "lif":
            st = self.states[gid]
            p = pop.params
            st.v = p.v_reset
            st.ref_until = t + p.t_refractory
            st.version += 1
            if p.t_refractory > 0:
                self.queue.push(st.ref_until, gid, _KIND_REFRACTORY_END)
            else:
                self._schedule_threshold_search(gid, horizon_ms)
        for replay in self.replays:
            replay.on_spike(gid, t)
        for tgt, pi, row, delay_ms, sign in self.fanout[gid]:
            if t + delay_ms < horizon_ms:
                w = float(self.weights[pi][row])
                self.queue.push(t + delay_ms, tgt, _KIND_DELIVERY, (sign, w))

    # -- main loop -------------------------------------------------------------

    def run(self, input_events: Sequence[SpikeEvent], horizon_ms: float) -> list[OracleSpike]:
        for ev in input_events:
            pop = self.pop_of.get(ev.neuron)
            if pop is None:
                raise EngineFault(f"input event for unknown neuron {ev.neuron}")
            t_ms = float(ev.t) * self.dt
            if t_ms <= horizon_ms:
                self.queue.push(t_ms, ev.neuron, _KIND_DELIVERY, ("input",))
        for gid, st in self.states.items():
            self._schedule_threshold_search(gid, horizon_ms)

        while len(self.queue):
            ev = self.queue.pop()
            if ev.time > horizon_ms:
                break
            pop = self.pop_of[ev.neuron]
            if ev.kind == _KIND_DELIVERY:
                if ev.payload == ("input",):
                    if pop.kind != "source":
                        raise EngineFault(f"input spike aimed at integrating population {pop.name}")
                    self._emit(ev.neuron, ev.time, horizon_ms)
                    continue
                sign, w = ev.payload
                st = self.states[ev.neuron]
                self._advance(ev.neuron, ev.time)
                if sign > 0:
                    st.i_exc += w
                else:
                    st.i_inh += w
                st.version += 1
                self._schedule_threshold_search(ev.neuron, horizon_ms)
            elif ev.kind == _KIND_REFRACTORY_END:
                self._advance(ev.neuron, ev.time)
                self._schedule_threshold_search(ev.neuron, horizon_ms)
            else:  # threshold check
                st = self.states[ev.neuron]
                if ev.payload and ev.payload[0] != st.version:
                    continue  # invalidated by a later delivery
                self._advance(ev.neuron, ev.time)
                self._emit(ev.neuron, ev.time, horizon_ms)
        self.spikes.sort(key=lambda s: (s.t, s.neuron))
        return self.spikes


def _k_peak(tau_s: float, tau_m: float) -> float:
    if abs(tau_s - tau_m) < 1e-9:
        return math.exp(-1.0)
    t_peak = math.log(tau_m / tau_s) * tau_s * tau_m / (tau_m - tau_s)
    return float(_k_factor(t_peak, tau_s, tau_m))


class _PlasticReplay:
    """Online replay of the potentiation/depression rules on the oracle's own
    spike record, with event times quantized to engine ticks for the kernel."""

    def __init__(self, sim: _OracleSim, proj_index: int, teach_name: str | None, lut: KernelLut):
        self.sim = sim
        self.proj_index = proj_index
        self.lut = lut
        proj = sim.net.projections[proj_index]
        src = sim.net.population(proj.source)
        self.src_range = range(src.start, src.start + src.size)
        teach_pop = sim.net.population(teach_name) if teach_name else None
        self.teach_range = (
            range(teach_pop.start, teach_pop.start + teach_pop.size) if teach_pop else range(0)
        )
        self.rows_by_pre: dict[int, list[int]] = {}
        for k in range(proj.n_synapses):
            self.rows_by_pre.setdefault(int(proj.pre[k]), []).append(k)
        self.buffers: dict[int, list[int]] = {k: [] for k in range(proj.n_synapses)}

    def on_spike(self, gid: int, t_ms: float) -> None:
        w = self.sim.weights[self.proj_index]
        tick = int(math.ceil(t_ms / self.sim.dt - 1e-9))
        if gid in self.src_range:
            for row in self.rows_by_pre.get(gid - self.src_range.start, ()):
                w[row] = min(max(w[row] + self.lut.a_ltp, self.lut.w_min), self.lut.w_max)
                buf = self.buffers[row]
                buf.append(tick)
                if len(buf) > SPIKE_BUFFER_CAPACITY:
                    del buf[0]
        elif gid in self.teach_range:
            for row, buf in self.buffers.items():
                if not buf:
                    continue
                change = sum(self.lut.ltd((b - tick) * self.sim.dt) for b in buf)
                w[row] = min(max(w[row] + change, self.lut.w_min), self.lut.w_max)


def event_driven_run(
    network: Network,
    input_events: Sequence[SpikeEvent],
    duration_ms: float,
    plasticity: dict[str, tuple[str, KernelLut]] | None = None,
) -> list[OracleSpike]:
    """Run the reference simulation for ``duration_ms`` of simulated time.

    ``input_events`` use tick stamps (as queued into the engine); they are
    mapped onto the continuous axis at ``t * dt``.  ``plasticity``, when
    given, maps a plastic projection name to its (teaching population,
    kernel) pair and enables the rule replay on the oracle's own record.
    """
    sim = _OracleSim(network)
    if plasticity:
        for name, (teach, lut) in plasticity.items():
            for pi, proj in enumerate(network.projections):
                if proj.name == name:
                    sim.replays.append(_PlasticReplay(sim, pi, teach, lut))
    return sim.run(input_events, duration_ms)


@dataclass
class DivergenceReport:
    """Outcome of comparing two spike records of the same network."""

    count_delta_by_population: dict[str, tuple[int, int]]
    n_matched: int
    n_unmatched: int
    max_time_offset_ms: float
    mean_time_offset_ms: float
    first_divergence_ms: float | None
    extra_spikes: list[tuple[float, int]]

    @property
    def identical(self) -> bool:
        return self.n_unmatched == 0 and self.max_time_offset_ms == 0.0


def compare_runs(
    a: Sequence,
    b: Sequence,
    tol_time_ms: float,
    network: Network | None = None,
    dt_a: float = 1.0,
    dt_b: float = 1.0,
) -> DivergenceReport:
    """Pair the two records per neuron in time order and measure divergence.

    Spike times are taken as ``t * dt`` per record, so tick records and
    continuous records can be mixed.  A pair further apart than
    ``tol_time_ms``, or a spike without a partner, counts as unmatched.
    """
    per_neuron_a: dict[int, list[float]] = {}
    per_neuron_b: dict[int, list[float]] = {}
    for ev in a:
        per_neuron_a.setdefault(ev.neuron, []).append(float(ev.t) * dt_a)
    for ev in b:
        per_neuron_b.setdefault(ev.neuron, []).append(float(ev.t) * dt_b)

    offsets: list[float] = []
    extra: list[tuple[float, int]] = []
    first_div: float | None = None

    def _note_divergence(t: float) -> None:
        nonlocal first_div
        if first_div is None or t < first_div:
            first_div = t

    n_unmatched = 0
    for neuron in sorted(set(per_neuron_a) | set(per_neuron_b)):
        ta = sorted(per_neuron_a.get(neuron, []))
        tb = sorted(per_neuron_b.get(neuron, []))
        for x, y in zip(ta, tb):
            d = abs(x - y)
            if d <= tol_time_ms:
                offsets.append(d)
            else:
                n_unmatched += 2
                _note_divergence(min(x, y))
        for t in ta[len(tb) :] + tb[len(ta) :]:
            n_unmatched += 1
            extra.append((t, neuron))
            _note_divergence(t)

    counts: dict[str, tuple[int, int]] = {}
    if network is not None:
        for pop in network.populations:
            rng = range(pop.start, pop.start + pop.size)
            na = sum(len(per_neuron_a.get(n, ())) for n in rng)
            nb = sum(len(per_neuron_b.get(n, ())) for n in rng)
            counts[pop.name] = (na, nb)
    extra.sort()
    return DivergenceReport(
        count_delta_by_population=counts,
        n_matched=len(offsets),
        n_unmatched=n_unmatched,
        max_time_offset_ms=max(offsets) if offsets else 0.0,
        mean_time_offset_ms=float(np.mean(offsets)) if offsets else 0.0,
        first_divergence_ms=first_div,
        extra_spikes=extra[:50],
    )
