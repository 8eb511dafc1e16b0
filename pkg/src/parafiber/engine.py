"""Deterministic tick-based simulator of LIF neurons with exponential currents.

The engine advances a whole network one fixed timestep (tick, default 1 ms)
at a time.  Time is measured in tick indices: tick ``t`` moves the network
state from time ``(t-1)*dt`` to ``t*dt``, and spikes detected during that
step are stamped ``t``.  The first tick of a fresh network is ``t = 1``.

Update order within one tick is fixed (required for bit-identical replay):

1. dequeue synaptic current increments due this tick,
2. inject queued external input spikes stamped this tick,
3. run plasticity hooks on the previous tick's spike batch,
4. per neuron: decay synaptic currents, add pending increments, integrate
   the membrane one step, detect threshold crossings; then fan out all
   spikes emitted this tick into the delay rings.

A synapse with delay ``d`` (ticks, >= 1) delivers the weight of a spike
stamped ``s`` during tick ``s + d``: the increment is applied after that
tick's current decay, so the post-tick current jumps by exactly the
synaptic weight, and it starts driving the membrane from tick
``s + d + 1`` on -- the discrete image of a continuous-time arrival at
``(s + d) * dt``.

Two numeric modes share this structure: plain float64, and saturating
fixed-point (default s16.15) in which all neuron state, decay factors and
weights are held as scaled integers with round-to-nearest arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from .errors import ConfigError, EngineFault
from .fixedpoint import (
    FixedPointFormat,
    SaturationCounter,
    from_raw,
    fx_add,
    fx_mul,
    saturate,
    to_raw,
)

EXC = 1
INH = -1


class SpikeEvent(NamedTuple):
    """One spike: tick index and global neuron id."""

    t: int
    neuron: int


class ScheduledIncrement(NamedTuple):
    """A synaptic delivery produced by :func:`deliver`."""

    due_tick: int
    target: int  # local index in the target population
    sign: int  # EXC or INH
    amount: float


@dataclass(frozen=True)
class NumericMode:
    """Engine arithmetic: ``float64`` or saturating fixed-point."""

    mode: str = "float64"
    fmt: FixedPointFormat = field(default_factory=FixedPointFormat)

    def __post_init__(self) -> None:
        if self.mode not in ("float64", "fixed"):
            raise ConfigError(f"unknown numeric mode {self.mode!r}")

    @property
    def is_fixed(self) -> bool:
        return self.mode == "fixed"


@dataclass(frozen=True)
class LifParams:
    """Cell parameters of a leaky integrate-and-fire neuron.

    Potentials in mV, times in ms, currents in nA, resistance in MOhm
    (so r_m * current is directly a potential).
    """

    v_rest: float = -70.0
    v_threshold: float = -54.0
    v_reset: float = -70.0
    tau_m: float = 10.0
    r_m: float = 10.0
    t_refractory: float = 2.0
    tau_syn_exc: float = 2.0
    tau_syn_inh: float = 10.0
    i_offset: float = 0.0

    def __post_init__(self) -> None:
        if not (self.v_reset <= self.v_rest < self.v_threshold):
            raise ConfigError("require v_reset <= v_rest < v_threshold")
        if min(self.tau_m, self.tau_syn_exc, self.tau_syn_inh) <= 0:
            raise ConfigError("all time constants must be > 0")
        if self.t_refractory < 0:
            raise ConfigError("t_refractory must be >= 0")
        if self.r_m <= 0:
            raise ConfigError("r_m must be > 0")


@dataclass
class LifState:
    """Mutable per-neuron state."""

    v: float
    i_exc: float = 0.0
    i_inh: float = 0.0
    refractory_remaining: int = 0


def synaptic_kick_factor(tau_s: float, tau_m: float, dt: float) -> float:
    """Voltage transferred over one tick by a unit exponential current.

    Closed-form convolution of ``exp(-t/tau_s)`` with the membrane kernel;
    degenerates to ``(dt/tau_m) exp(-dt/tau_m)`` for matched constants.
    Multiplied by ``r_m * i`` it gives the exact one-tick contribution of a
    decaying synaptic current, which keeps the tick grid on the continuous
    solution instead of overcharging fast synapses.
    """
    if abs(tau_s - tau_m) < 1e-9:
        return (dt / tau_m) * math.exp(-dt / tau_m)
    return tau_s / (tau_s - tau_m) * (math.exp(-dt / tau_s) - math.exp(-dt / tau_m))


def lif_step(
    state: LifState,
    params: LifParams,
    dt: float,
    inc_exc: float = 0.0,
    inc_inh: float = 0.0,
) -> tuple[LifState, bool]:
    """Advance one neuron by one tick; returns the new state and a spike flag.

    The held currents are the values at the opening of this tick's interval;
    the membrane integrates them with the exact propagator of the linear
    subthreshold dynamics (constant offset plus exponentially decaying
    synaptic currents), and threshold crossings are detected at the interval
    end.  ``inc_exc``/``inc_inh`` are the synaptic increments landing at the
    end of this tick: they appear in the returned currents (after the decay)
    and start driving the membrane from the next tick on, which is exactly a
    continuous-time arrival at this tick's closing instant.  During the
    refractory period the membrane is clamped to ``v_reset`` and no spike
    can be emitted; synaptic currents keep evolving.
    """
    if not (math.isfinite(state.v) and math.isfinite(state.i_exc) and math.isfinite(state.i_inh)):
        raise EngineFault("non-finite neuron state")
    i_exc = state.i_exc * math.exp(-dt / params.tau_syn_exc) + inc_exc
    i_inh = state.i_inh * math.exp(-dt / params.tau_syn_inh) + inc_inh

    if state.refractory_remaining > 0:
        return LifState(params.v_reset, i_exc, i_inh, state.refractory_remaining - 1), False

    v_inf = params.v_rest + params.r_m * params.i_offset
    k_e = synaptic_kick_factor(params.tau_syn_exc, params.tau_m, dt)
    k_i = synaptic_kick_factor(params.tau_syn_inh, params.tau_m, dt)
    v = (
        v_inf
        + (state.v - v_inf) * math.exp(-dt / params.tau_m)
        + params.r_m * (state.i_exc * k_e - state.i_inh * k_i)
    )
    if v >= params.v_threshold:
        n_ref = int(round(params.t_refractory / dt))
        return LifState(params.v_reset, i_exc, i_inh, n_ref), True
    return LifState(v, i_exc, i_inh, 0), False


@dataclass
class Projection:
    """A bundle of synapses between two populations.

    All per-synapse arrays are parallel: ``pre``/``post`` hold local neuron
    indices, ``weight`` is a non-negative efficacy in nA, ``delay`` is in
    ticks (>= 1), ``sign`` is +1 (excitatory) or -1 (inhibitory), and
    ``plastic`` marks synapses whose weight a plasticity rule may rewrite
    in place.
    """

    name: str
    source: str
    target: str
    pre: np.ndarray
    post: np.ndarray
    weight: np.ndarray
    delay: np.ndarray
    sign: np.ndarray
    plastic: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.pre)
        for arr_name in ("post", "weight", "delay", "sign", "plastic"):
            if len(getattr(self, arr_name)) != n:
                raise ConfigError(f"projection {self.name}: ragged synapse arrays")
        if n and self.weight.min() < 0:
            raise ConfigError(f"projection {self.name}: weights must be >= 0 (sign is separate)")
        if n and self.delay.min() < 1:
            raise ConfigError(f"projection {self.name}: delays must be >= 1 tick")

    @property
    def n_synapses(self) -> int:
        return len(self.pre)


def make_projection(
    name: str,
    source: str,
    target: str,
    synapses: Sequence[tuple[int, int, float, int]],
    sign: int = EXC,
    plastic: bool = False,
) -> Projection:
    """Build a projection from (pre, post, weight, delay_ticks) tuples with a
    uniform sign and plasticity flag."""
    if synapses:
        pre, post, w, d = (np.asarray(col) for col in zip(*synapses))
    else:
        pre = post = d = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    n = len(pre)
    return Projection(
        name=name,
        source=source,
        target=target,
        pre=pre.astype(np.int64),
        post=post.astype(np.int64),
        weight=np.asarray(w, dtype=np.float64),
        delay=d.astype(np.int64),
        sign=np.full(n, sign, dtype=np.int8),
        plastic=np.full(n, plastic, dtype=bool),
    )


def deliver(projection: Projection, pre_spikes: Sequence[SpikeEvent], n_source: int) -> list[ScheduledIncrement]:
    """Expand presynaptic spikes into scheduled postsynaptic increments.

    ``pre_spikes`` carry local indices of the projection's source population
    (``n_source`` wide).  Each spike stamped ``s`` traveling a synapse of
    delay ``d`` yields one increment due at tick ``s + d``.  Increments for
    the same (tick, target) simply accumulate when applied.
    """
    order = np.argsort(projection.pre, kind="stable")
    sorted_pre = projection.pre[order]
    indptr = np.searchsorted(sorted_pre, np.arange(n_source + 1))
    out: list[ScheduledIncrement] = []
    for ev in pre_spikes:
        if not (0 <= ev.neuron < n_source):
            raise EngineFault(f"spike for unknown source neuron {ev.neuron} in {projection.name}")
        for k in order[indptr[ev.neuron] : indptr[ev.neuron + 1]]:
            out.append(
                ScheduledIncrement(
                    due_tick=ev.t + int(projection.delay[k]),
                    target=int(projection.post[k]),
                    sign=int(projection.sign[k]),
                    amount=float(projection.weight[k]),
                )
            )
    return out


class PlasticityHook(Protocol):
    """Callback contract used by :meth:`Network.tick` (step 3)."""

    def process_tick(self, t: int, pre_spiking: np.ndarray, n_teaching: int) -> None: ...


@dataclass
class Population:
    """One homogeneous group of neurons (internal to :class:`Network`)."""

    name: str
    kind: str  # "lif" | "source"
    size: int
    start: int  # first global neuron id
    params: LifParams | None = None

    # state arrays, allocated by Network.finalize()
    v: np.ndarray | None = None
    i_exc: np.ndarray | None = None
    i_inh: np.ndarray | None = None
    refrac: np.ndarray | None = None

    def lif_state(self, i: int, mode: NumericMode) -> LifState:
        """Snapshot neuron ``i`` (local index) as a float-valued LifState."""
        if self.kind != "lif":
            raise ConfigError(f"population {self.name} has no membrane state")
        conv = (lambda a: float(from_raw(a, mode.fmt))) if mode.is_fixed else float
        return LifState(
            v=conv(self.v[i]),
            i_exc=conv(self.i_exc[i]),
            i_inh=conv(self.i_inh[i]),
            refractory_remaining=int(self.refrac[i]),
        )


class _PopNumerics:
    """Per-population constants pre-converted for the active numeric mode."""

    def __init__(self, params: LifParams, dt: float, mode: NumericMode):
        self.n_ref = int(round(params.t_refractory / dt))
        decay_m = math.exp(-dt / params.tau_m)
        decay_e = math.exp(-dt / params.tau_syn_exc)
        decay_i = math.exp(-dt / params.tau_syn_inh)
        k_e = synaptic_kick_factor(params.tau_syn_exc, params.tau_m, dt)
        k_i = synaptic_kick_factor(params.tau_syn_inh, params.tau_m, dt)
        v_inf = params.v_rest + params.r_m * params.i_offset
        if mode.is_fixed:
            fmt = mode.fmt
            self.decay_m = to_raw(decay_m, fmt)
            self.decay_e = to_raw(decay_e, fmt)
            self.decay_i = to_raw(decay_i, fmt)
            self.v_inf = to_raw(v_inf, fmt)
            self.v_reset = to_raw(params.v_reset, fmt)
            self.v_threshold = to_raw(params.v_threshold, fmt)
            # pre-scaled so one multiply turns a current into its tick kick
            self.rk_e = to_raw(params.r_m * k_e, fmt)
            self.rk_i = to_raw(params.r_m * k_i, fmt)
        else:
            self.decay_m = decay_m
            self.decay_e = decay_e
            self.decay_i = decay_i
            self.v_inf = v_inf
            self.v_reset = params.v_reset
            self.v_threshold = params.v_threshold
            self.rk_e = params.r_m * k_e
            self.rk_i = params.r_m * k_i


class _Fanout:
    """CSR view of one projection keyed by presynaptic local index."""

    def __init__(self, proj: Projection, n_source: int, target_start: int):
        self.proj = proj
        order = np.argsort(proj.pre, kind="stable")
        self.order = order
        self.indptr = np.searchsorted(proj.pre[order], np.arange(n_source + 1))
        self.post_global = target_start + proj.post[order]
        self.delay = proj.delay[order]
        self.exc_mask = proj.sign[order] > 0

    def synapse_rows(self, spiking_local: np.ndarray) -> np.ndarray:
        """Sorted-row indices of all synapses from the spiking neurons."""
        starts = self.indptr[spiking_local]
        stops = self.indptr[spiking_local + 1]
        counts = stops - starts
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        rows = np.empty(total, dtype=np.int64)
        pos = 0
        for s, c in zip(starts, counts):
            if c:
                rows[pos : pos + c] = np.arange(s, s + c)
                pos += c
        return rows


class Network:
    """A whole tick-simulated network: populations, projections, bindings.

    Single-threaded and deterministic; identical construction, inputs and
    tick sequence reproduce bit-identical spike logs in both numeric modes.
    """

    def __init__(self, dt: float = 1.0, mode: NumericMode | None = None):
        if dt <= 0:
            raise ConfigError("tick length must be > 0")
        self.dt = dt
        self.mode = mode or NumericMode()
        self.saturations = SaturationCounter()
        self.populations: list[Population] = []
        self.projections: list[Projection] = []
        self._pop_by_name: dict[str, Population] = {}
        self._bindings: list[tuple[int, str, PlasticityHook]] = []
        self._finalized = False
        self._now = 0
        self._input_queue: dict[int, list[int]] = {}
        self._last_spikes_local: dict[str, np.ndarray] = {}

    # -- construction -------------------------------------------------------

    def add_population(self, name: str, size: int, params: LifParams | None = None, kind: str = "lif") -> Population:
        if self._finalized:
            raise ConfigError("network already finalized")
        if name in self._pop_by_name:
            raise ConfigError(f"duplicate population name {name!r}")
        if kind not in ("lif", "source"):
            raise ConfigError(f"unknown population kind {kind!r}")
        if kind == "lif" and params is None:
            params = LifParams()
        start = self.total_neurons
        pop = Population(name=name, kind=kind, size=size, start=start, params=params)
        self.populations.append(pop)
        self._pop_by_name[name] = pop
        return pop

    def add_projection(self, proj: Projection) -> int:
        if self._finalized:
            raise ConfigError("network already finalized")
        src = self._pop_by_name.get(proj.source)
        tgt = self._pop_by_name.get(proj.target)
        if src is None or tgt is None:
            raise ConfigError(f"projection {proj.name} references unknown population")
        if proj.n_synapses:
            if proj.pre.max() >= src.size or proj.pre.min() < 0:
                raise ConfigError(f"projection {proj.name}: pre index out of range")
            if proj.post.max() >= tgt.size or proj.post.min() < 0:
                raise ConfigError(f"projection {proj.name}: post index out of range")
        if tgt.kind != "lif":
            raise ConfigError(f"projection {proj.name} targets non-integrating population {tgt.name}")
        self.projections.append(proj)
        return len(self.projections) - 1

    def bind_plasticity(self, proj_index: int, teaching_population: str, hook: PlasticityHook) -> None:
        """Attach a plasticity rule to a projection, driven by the spikes of
        ``teaching_population``; invoked each tick at step 3."""
        proj = self.projections[proj_index]
        if not proj.plastic.all():
            raise ConfigError(f"projection {proj.name} is not fully plastic")
        if teaching_population not in self._pop_by_name:
            raise ConfigError(f"unknown teaching population {teaching_population!r}")
        self._bindings.append((proj_index, teaching_population, hook))

    def finalize(self) -> None:
        """Allocate state, rings and fan-out tables; no topology changes after.

        All integrating neurons share one flat state block (populations keep
        views into it) with per-neuron constants, so one vectorized pass
        advances the whole network regardless of how many populations there
        are.
        """
        if self._finalized:
            return
        fixed = self.mode.is_fixed
        fmt = self.mode.fmt
        lif_pops = [p for p in self.populations if p.kind == "lif"]
        n_lif = sum(p.size for p in lif_pops)
        self._n_lif = n_lif
        self._lif_ids = (
            np.concatenate([np.arange(p.start, p.start + p.size) for p in lif_pops])
            if n_lif
            else np.empty(0, dtype=np.int64)
        ).astype(np.int64)

        state_dtype = np.int64 if fixed else np.float64
        self._v = np.zeros(n_lif, dtype=state_dtype)
        self._ie = np.zeros(n_lif, dtype=state_dtype)
        self._ii = np.zeros(n_lif, dtype=state_dtype)
        self._refrac = np.zeros(n_lif, dtype=np.int32)
        const_names = ("decay_m", "decay_e", "decay_i", "v_inf", "v_reset", "v_threshold", "rk_e", "rk_i")
        consts = {name: np.zeros(n_lif, dtype=state_dtype) for name in const_names}
        self._n_ref = np.zeros(n_lif, dtype=np.int32)

        offset = 0
        for pop in lif_pops:
            num = _PopNumerics(pop.params, self.dt, self.mode)
            sl = slice(offset, offset + pop.size)
            for name in const_names:
                consts[name][sl] = getattr(num, name)
            self._n_ref[sl] = num.n_ref
            if fixed:
                self._v[sl] = to_raw(pop.params.v_rest, fmt)
            else:
                self._v[sl] = pop.params.v_rest
            pop.v = self._v[sl]
            pop.i_exc = self._ie[sl]
            pop.i_inh = self._ii[sl]
            pop.refrac = self._refrac[sl]
            offset += pop.size
        self._c = consts

        max_delay = 1
        for proj in self.projections:
            if proj.n_synapses:
                max_delay = max(max_delay, int(proj.delay.max()))
        self._ring_len = max_delay + 1
        n = self.total_neurons
        self._ring_exc = np.zeros((self._ring_len, n), dtype=state_dtype)
        self._ring_inh = np.zeros((self._ring_len, n), dtype=state_dtype)
        self._fanouts: dict[str, list[_Fanout]] = {p.name: [] for p in self.populations}
        for proj in self.projections:
            src = self._pop_by_name[proj.source]
            tgt = self._pop_by_name[proj.target]
            self._fanouts[src.name].append(_Fanout(proj, src.size, tgt.start))
        for pop in self.populations:
            self._last_spikes_local[pop.name] = np.empty(0, dtype=np.int64)
        self._finalized = True

    # -- introspection ------------------------------------------------------

    @property
    def total_neurons(self) -> int:
        return sum(p.size for p in self.populations)

    @property
    def now(self) -> int:
        """Index of the last simulated tick (0 before the first tick)."""
        return self._now

    def population(self, name: str) -> Population:
        return self._pop_by_name[name]

    def population_of(self, neuron: int) -> Population:
        for pop in self.populations:
            if pop.start <= neuron < pop.start + pop.size:
                return pop
        raise EngineFault(f"unknown neuron id {neuron}")

    def currents(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Float copies of (i_exc, i_inh) for one population."""
        pop = self._pop_by_name[name]
        if self.mode.is_fixed:
            return from_raw(pop.i_exc, self.mode.fmt), from_raw(pop.i_inh, self.mode.fmt)
        return pop.i_exc.copy(), pop.i_inh.copy()

    def membrane(self, name: str) -> np.ndarray:
        pop = self._pop_by_name[name]
        if self.mode.is_fixed:
            return from_raw(pop.v, self.mode.fmt)
        return pop.v.copy()

    # -- running ------------------------------------------------------------

    def queue_input_spikes(self, events: Sequence[SpikeEvent]) -> None:
        """Queue external spikes for source populations; stamps must not be
        in the simulated past."""
        for ev in events:
            pop = self.population_of(ev.neuron)
            if pop.kind != "source":
                raise EngineFault(f"cannot inject spike into integrating population {pop.name}")
            if ev.t <= self._now:
                raise EngineFault(f"input spike stamped {ev.t} is in the past (now={self._now})")
            self._input_queue.setdefault(ev.t, []).append(ev.neuron)

    def tick(self, t: int) -> list[SpikeEvent]:
        """Advance the whole network by one tick; returns spikes stamped ``t``.

        Plasticity hooks run on the spike batch of tick ``t - 1`` (both the
        presynaptic spikes of their projection's source population and the
        teaching population's spikes), so rule processing trails emission by
        exactly one tick.
        """
        if not self._finalized:
            self.finalize()
        if t != self._now + 1:
            raise EngineFault(f"tick {t} out of order; next unsimulated tick is {self._now + 1}")

        # (1) synaptic deliveries due this tick
        slot = t % self._ring_len
        pend_exc = self._ring_exc[slot].copy()
        pend_inh = self._ring_inh[slot].copy()
        self._ring_exc[slot] = 0
        self._ring_inh[slot] = 0

        # (2) external input spikes
        injected = self._input_queue.pop(t, [])
        source_spikes: dict[str, np.ndarray] = {}
        if injected:
            injected_arr = np.sort(np.asarray(injected, dtype=np.int64))
            for pop in self.populations:
                if pop.kind != "source":
                    continue
                local = injected_arr[(injected_arr >= pop.start) & (injected_arr < pop.start + pop.size)] - pop.start
                if len(local):
                    source_spikes[pop.name] = local

        # (3) plasticity on the previous tick's batch
        for proj_index, teach_name, hook in self._bindings:
            proj = self.projections[proj_index]
            hook.process_tick(
                t - 1,
                self._last_spikes_local[proj.source],
                len(self._last_spikes_local[teach_name]),
            )

        # (4) integrate, detect spikes, fan out
        spiking_global = (
            self._integrate_all(pend_exc, pend_inh) if self._n_lif else np.empty(0, dtype=np.int64)
        )
        spikes: list[SpikeEvent] = []
        new_last: dict[str, np.ndarray] = {}
        for pop in self.populations:
            if pop.kind == "source":
                local = source_spikes.get(pop.name, np.empty(0, dtype=np.int64))
            else:
                lo = np.searchsorted(spiking_global, pop.start)
                hi = np.searchsorted(spiking_global, pop.start + pop.size)
                local = spiking_global[lo:hi] - pop.start
            new_last[pop.name] = local
            for idx in local:
                spikes.append(SpikeEvent(t, pop.start + int(idx)))
            if len(local):
                self._fan_out(pop, local, t)
        self._last_spikes_local = new_last
        self._now = t
        return spikes

    def run_for(self, n_ticks: int, inputs: Sequence[SpikeEvent] = ()) -> list[SpikeEvent]:
        """Queue ``inputs`` and run ``n_ticks`` ticks, concatenating spikes."""
        if inputs:
            self.queue_input_spikes(inputs)
        out: list[SpikeEvent] = []
        for _ in range(n_ticks):
            out.extend(self.tick(self._now + 1))
        return out

    # -- internals ----------------------------------------------------------

    def _integrate_all(self, pend_exc: np.ndarray, pend_inh: np.ndarray) -> np.ndarray:
        """One tick of the fused LIF block; returns sorted global spike ids.

        The membrane integrates the interval-opening current values; this
        tick's increments land afterwards and drive from the next tick,
        matching a continuous-time arrival at the interval's closing edge.
        """
        c = self._c
        v, ie, ii, refrac = self._v, self._ie, self._ii, self._refrac
        refractory = refrac > 0
        if self.mode.is_fixed:
            fmt = self.mode.fmt
            cnt = self.saturations
            kick = saturate(
                fx_mul(c["rk_e"], ie, fmt, cnt) - fx_mul(c["rk_i"], ii, fmt, cnt), fmt, cnt
            )
            leak = fx_add(
                c["v_inf"], fx_mul(saturate(v - c["v_inf"], fmt, cnt), c["decay_m"], fmt, cnt), fmt, cnt
            )
            v_new = fx_add(leak, kick, fmt, cnt)
            ie[:] = fx_add(fx_mul(ie, c["decay_e"], fmt, cnt), pend_exc[self._lif_ids], fmt, cnt)
            ii[:] = fx_add(fx_mul(ii, c["decay_i"], fmt, cnt), pend_inh[self._lif_ids], fmt, cnt)
        else:
            v_new = (
                c["v_inf"]
                + (v - c["v_inf"]) * c["decay_m"]
                + c["rk_e"] * ie
                - c["rk_i"] * ii
            )
            ie *= c["decay_e"]
            ie += pend_exc[self._lif_ids]
            ii *= c["decay_i"]
            ii += pend_inh[self._lif_ids]
            if not np.isfinite(v_new).all():
                bad = int(self._lif_ids[np.flatnonzero(~np.isfinite(v_new))[0]])
                raise EngineFault(
                    f"non-finite state in population {self.population_of(bad).name}, neuron {bad}"
                )
        np.copyto(v, np.where(refractory, c["v_reset"], v_new))
        spiking = (~refractory) & (v >= c["v_threshold"])
        refrac[refractory] -= 1
        v[spiking] = c["v_reset"][spiking]
        refrac[spiking] = self._n_ref[spiking]
        return self._lif_ids[np.flatnonzero(spiking)]

    def _fan_out(self, pop: Population, spiking_local: np.ndarray, t: int) -> None:
        for fan in self._fanouts[pop.name]:
            rows = fan.synapse_rows(spiking_local)
            if not len(rows):
                continue
            weights = fan.proj.weight[fan.order[rows]]
            if self.mode.is_fixed:
                weights = to_raw(weights, self.mode.fmt, self.saturations)
            slots = (t + fan.delay[rows]) % self._ring_len
            posts = fan.post_global[rows]
            exc = fan.exc_mask[rows]
            # Ring accumulation stays raw int64 in fixed mode; saturation is
            # applied (and counted) when the pending slot is folded into the
            # neuron currents.
            np.add.at(self._ring_exc, (slots[exc], posts[exc]), weights[exc])
            inh = ~exc
            np.add.at(self._ring_inh, (slots[inh], posts[inh]), weights[inh])
