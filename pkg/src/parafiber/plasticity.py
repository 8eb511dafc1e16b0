"""Supervised plasticity at the parallel-fiber synapses.

Two rules act on every plastic synapse:

* every presynaptic spike potentiates the weight by a fixed increment and
  is remembered in a bounded per-synapse history (capacity 160, oldest
  evicted first);
* every teaching spike depresses the weight by the summed kernel value over
  all remembered presynaptic spike times, so inputs that preceded the error
  by roughly the loop response time (peak 100 ms before the teaching spike)
  are punished hardest.

The depression kernel is a single Gaussian lobe over lead times
``dt = t_pre - t_teach`` in ``[-T_win, 0]``, discretized once into a lookup
table; outside the window it is exactly zero.  Weights are clamped to
``[w_min, w_max]`` after every update.

All state lives in flat numpy arrays so the rule costs one vectorized pass
per event batch; the single-synapse operations below are thin views onto
the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SPIKE_BUFFER_CAPACITY = 160
_EMPTY = np.int64(-(1 << 60))  # sentinel tick far outside any kernel window


@dataclass(frozen=True)
class KernelLut:
    """Discretized depression kernel plus the potentiation increment.

    ``table[k]`` holds the weight change for a presynaptic spike leading the
    teaching spike by ``T_win - k * bin_ms`` milliseconds; index 0 maps to
    ``dt = -T_win`` and the last index to ``dt = 0``.
    """

    bin_ms: float
    t_win_ms: float
    table: np.ndarray
    a_ltp: float
    w_min: float
    w_max: float
    t_peak_ms: float
    sigma_ms: float

    def ltd(self, dt):
        """Kernel value at lead time(s) ``dt = t_pre - t_teach`` (ms);
        exactly zero outside ``[-T_win, 0]``."""
        dt = np.asarray(dt, dtype=np.float64)
        idx = np.rint((dt + self.t_win_ms) / self.bin_ms).astype(np.int64)
        valid = (dt >= -self.t_win_ms) & (dt <= 0.0)
        idx = np.clip(idx, 0, len(self.table) - 1)
        out = np.where(valid, self.table[idx], 0.0)
        return float(out) if out.ndim == 0 else out


def build_kernel_lut(
    t_peak: float = 100.0,
    sigma: float = 25.0,
    a_ltd: float = 0.02,
    a_ltp: float = 0.002,
    bin_ms: float = 1.0,
    t_win: float = 250.0,
    w_min: float = 0.0,
    w_max: float = 4.0,
) -> KernelLut:
    """Compile the Gaussian depression kernel into a lookup table.

    The lobe ``-a_ltd * exp(-(dt + t_peak)^2 / (2 sigma^2))`` is sampled at
    the bin centers ``-T_win, -T_win + bin, ..., 0``; its minimum lands on
    the ``-t_peak`` bin.
    """
    if not 0.0 < t_peak < t_win:
        raise ConfigError("t_peak must lie inside (0, t_win)")
    if sigma <= 0.0 or a_ltd <= 0.0 or a_ltp <= 0.0:
        raise ConfigError("sigma, a_ltd and a_ltp must be > 0")
    if bin_ms <= 0.0 or abs(t_win / bin_ms - round(t_win / bin_ms)) > 1e-9:
        raise ConfigError("bin width must be positive and divide t_win")
    if not 0.0 <= w_min < w_max:
        raise ConfigError("require 0 <= w_min < w_max")
    n_bins = int(round(t_win / bin_ms))
    centers = -t_win + bin_ms * np.arange(n_bins + 1)
    table = -a_ltd * np.exp(-((centers + t_peak) ** 2) / (2.0 * sigma**2))
    return KernelLut(
        bin_ms=bin_ms,
        t_win_ms=t_win,
        table=table,
        a_ltp=a_ltp,
        w_min=w_min,
        w_max=w_max,
        t_peak_ms=t_peak,
        sigma_ms=sigma,
    )


@dataclass
class SynapseSpikeBuffer:
    """Bounded history of presynaptic spike ticks for one synapse."""

    capacity: int = SPIKE_BUFFER_CAPACITY
    _ring: np.ndarray = field(init=False)
    _head: int = field(init=False, default=0)
    _count: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self._ring = np.full(self.capacity, _EMPTY, dtype=np.int64)

    def push(self, t: int) -> None:
        self._ring[self._head] = t
        self._head = (self._head + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def entries(self) -> list[int]:
        """Stored ticks, oldest first."""
        if self._count < self.capacity:
            return [int(v) for v in self._ring[: self._count]]
        order = np.r_[self._ring[self._head :], self._ring[: self._head]]
        return [int(v) for v in order]

    def __len__(self) -> int:
        return self._count


class PlasticityState:
    """Vectorized rule state for one fully plastic projection.

    ``weights`` is shared with (not copied from) the projection it governs,
    so updates are visible to the engine's spike fan-out immediately.  The
    engine drives :meth:`process_tick` once per tick with that tick's
    presynaptic spikes and the number of teaching spikes; within a batch all
    potentiation is applied before any depression.
    """

    def __init__(
        self,
        lut: KernelLut,
        weights: np.ndarray,
        pre: np.ndarray,
        n_source: int,
        capacity: int = SPIKE_BUFFER_CAPACITY,
        tick_ms: float = 1.0,
    ):
        if weights.ndim != 1 or len(weights) != len(pre):
            raise ConfigError("weights and pre must be parallel 1-d arrays")
        self.lut = lut
        self.weights = weights
        self.capacity = capacity
        self.tick_ms = tick_ms  # buffers store tick indices; kernel lookups are in ms
        self.enabled = True  # False freezes both rules (weights and buffers stay put)
        self.n_synapses = len(weights)
        order = np.argsort(pre, kind="stable")
        self._syn_by_pre = order.astype(np.int64)
        self._indptr = np.searchsorted(pre[order], np.arange(n_source + 1))
        self._buf = np.full((self.n_synapses, capacity), _EMPTY, dtype=np.int64)
        self._head = np.zeros(self.n_synapses, dtype=np.int64)

    # -- single-synapse operations -----------------------------------------

    def on_presynaptic_spike(self, synapse: int, t: int) -> float:
        """Potentiate one synapse and remember the spike; returns the weight."""
        self._ltp(np.asarray([synapse], dtype=np.int64), t)
        return float(self.weights[synapse])

    def on_teaching_spike(self, synapse: int, t_ino: int) -> float:
        """Depress one synapse from its buffered history; returns the weight."""
        self._ltd(np.asarray([synapse], dtype=np.int64), t_ino)
        return float(self.weights[synapse])

    def buffer_entries(self, synapse: int) -> list[int]:
        """Stored presynaptic ticks of one synapse, oldest first."""
        row = self._buf[synapse]
        head = int(self._head[synapse])
        ordered = np.r_[row[head:], row[:head]]
        return [int(v) for v in ordered if v != _EMPTY]

    # -- batch driver (engine hook) ------------------------------------------

    def process_tick(self, t: int, pre_spiking: np.ndarray, n_teaching: int) -> None:
        """Apply the rules for one tick's events: potentiation for every
        presynaptic spike, then one depression pass per teaching spike."""
        if not self.enabled:
            return
        if len(pre_spiking):
            rows = self._rows_for(pre_spiking)
            if len(rows):
                self._ltp(rows, t)
        for _ in range(int(n_teaching)):
            self._ltd(None, t)

    # -- internals ------------------------------------------------------------

    def _rows_for(self, pre_spiking: np.ndarray) -> np.ndarray:
        starts = self._indptr[pre_spiking]
        stops = self._indptr[pre_spiking + 1]
        total = int((stops - starts).sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        rows = np.empty(total, dtype=np.int64)
        pos = 0
        for s, e in zip(starts, stops):
            if e > s:
                rows[pos : pos + (e - s)] = self._syn_by_pre[s:e]
                pos += e - s
        return rows

    def _ltp(self, synapses: np.ndarray, t: int) -> None:
        self.weights[synapses] = np.clip(
            self.weights[synapses] + self.lut.a_ltp, self.lut.w_min, self.lut.w_max
        )
        heads = self._head[synapses]
        self._buf[synapses, heads] = t
        self._head[synapses] = (heads + 1) % self.capacity

    def _ltd(self, synapses: np.ndarray | None, t_ino: int) -> None:
        # The per-synapse increment is the correctly rounded sum of kernel
        # values (math.fsum), so it does not depend on buffer ordering and an
        # offline replay of the same spike record reproduces it bit-exactly.
        buf = self._buf if synapses is None else self._buf[synapses]
        dt_ms = (buf - t_ino).astype(np.float64) * self.tick_ms
        valid = (dt_ms >= -self.lut.t_win_ms) & (dt_ms <= 0.0)
        rows = np.flatnonzero(valid.any(axis=1))
        if not len(rows):
            return
        idx = np.rint((dt_ms + self.lut.t_win_ms) / self.lut.bin_ms).astype(np.int64)
        np.clip(idx, 0, len(self.lut.table) - 1, out=idx)
        table = self.lut.table
        for r in rows:
            change = math.fsum(table[idx[r][valid[r]]])
            target = int(r) if synapses is None else int(synapses[r])
            self.weights[target] = min(
                max(self.weights[target] + change, self.lut.w_min), self.lut.w_max
            )
