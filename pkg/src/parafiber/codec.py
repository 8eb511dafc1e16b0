"""Translation between analog signals and spike trains.

Input side: a scalar is held by an encoder (zero-order, refreshed at the
encoder's own update period) and emitted as spikes every engine tick.
Population encoding uses Gaussian receptive fields with linearly spaced
preferred values; rate encoding maps a normalized value directly to a
firing rate.  The default spike generation is deterministic: each cell
integrates its instantaneous rate in a phase accumulator and fires when it
wraps, which yields evenly spaced spikes at constant rate.  A seeded
Bernoulli mode is available where trial-to-trial variability is wanted.

Output side: a motor decoder turns the spike count of the deep-nuclei cells
of one actuator into a pulse-width duty.  Counts accumulate into an
activity trace with exponential fall-off applied once per update period,
then pass through an affine gain with clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .engine import SpikeEvent


@dataclass(frozen=True)
class PopulationEncoderConfig:
    n_cells: int = 16
    lo: float = -60.0
    hi: float = 60.0
    sigma_rf: float = 8.0  # receptive-field width, same units as the value
    r_max: float = 80.0  # Hz
    update_period_ms: float = 20.0
    stochastic: bool = False

    def __post_init__(self) -> None:
        if self.n_cells < 2:
            raise ConfigError("population code needs at least 2 cells")
        if not self.lo < self.hi:
            raise ConfigError("require lo < hi")
        if self.sigma_rf <= 0 or self.r_max <= 0:
            raise ConfigError("sigma_rf and r_max must be > 0")


def preferred_values(cfg: PopulationEncoderConfig) -> np.ndarray:
    return np.linspace(cfg.lo, cfg.hi, cfg.n_cells)


def gaussian_rates(value: float, cfg: PopulationEncoderConfig) -> np.ndarray:
    """Per-cell firing rates (Hz) for one encoded value, clamped into range."""
    v = min(max(value, cfg.lo), cfg.hi)
    pref = preferred_values(cfg)
    return cfg.r_max * np.exp(-((v - pref) ** 2) / (2.0 * cfg.sigma_rf**2))


class PopulationEncoder:
    """Stateful population encoder emitting spikes once per engine tick.

    ``neuron_offset`` maps cell 0 to a global neuron id.  Cells carry a
    deterministic phase stagger (cell i starts at phase i/n) so equal-rate
    cells do not fire in lockstep.
    """

    def __init__(
        self,
        cfg: PopulationEncoderConfig,
        neuron_offset: int,
        dt_ms: float = 1.0,
        rng: np.random.Generator | None = None,
    ):
        self.cfg = cfg
        self.neuron_offset = neuron_offset
        self.dt_ms = dt_ms
        if cfg.stochastic and rng is None:
            raise ConfigError("stochastic encoding needs a seeded rng")
        self._rng = rng
        self._rates = np.zeros(cfg.n_cells)
        self._phase = np.arange(cfg.n_cells, dtype=np.float64) / cfg.n_cells
        self._last_update_tick: int | None = None

    @property
    def update_period_ticks(self) -> int:
        return max(1, int(round(self.cfg.update_period_ms / self.dt_ms)))

    def set_value(self, value: float) -> None:
        """Refresh the held value; takes effect from the next tick on."""
        self._rates = gaussian_rates(value, self.cfg)

    def encode_tick(self, t: int) -> list[SpikeEvent]:
        """Emit this tick's spikes for the held value."""
        p = self._rates * (self.dt_ms / 1000.0)
        if self.cfg.stochastic:
            fired = self._rng.random(self.cfg.n_cells) < p
        else:
            self._phase += p
            fired = self._phase >= 1.0
            self._phase[fired] -= 1.0
        return [SpikeEvent(t, self.neuron_offset + int(i)) for i in np.flatnonzero(fired)]


class RateEncoder:
    """Single-cell deterministic rate encoder for a normalized value in [0, 1]."""

    def __init__(self, r_max: float, neuron_id: int, dt_ms: float = 1.0):
        if r_max <= 0:
            raise ConfigError("r_max must be > 0")
        self.r_max = r_max
        self.neuron_id = neuron_id
        self.dt_ms = dt_ms
        self._value = 0.0
        self._phase = 0.0

    def set_value(self, value: float) -> None:
        if not -1e-12 <= value <= 1.0 + 1e-12:
            raise ConfigError(f"rate-encoded value {value} outside [0, 1]")
        self._value = min(max(value, 0.0), 1.0)

    def encode_tick(self, t: int) -> list[SpikeEvent]:
        self._phase += self._value * self.r_max * self.dt_ms / 1000.0
        if self._phase >= 1.0:
            self._phase -= 1.0
            return [SpikeEvent(t, self.neuron_id)]
        return []


@dataclass(frozen=True)
class MotorDecoderConfig:
    gain: float = 0.04  # duty per accumulated spike
    bias: float = 0.0
    tau_out_ms: float = 20.0  # exponential fall-off of the activity trace
    update_period_ms: float = 20.0
    clamp_lo: float = 0.0
    clamp_hi: float = 1.0

    def __post_init__(self) -> None:
        if self.tau_out_ms <= 0:
            raise ConfigError("tau_out must be > 0")
        if not self.clamp_lo < self.clamp_hi:
            raise ConfigError("require clamp_lo < clamp_hi")


@dataclass
class MotorDecoderState:
    activity: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class MotorCommand:
    omega: float  # normalized pulse-width duty


def motor_decode(
    n_spikes: int,
    state: MotorDecoderState,
    cfg: MotorDecoderConfig,
) -> MotorCommand:
    """One decoder update, to be called once per update period.

    ``n_spikes`` is the spike count of this motor's output cells over the
    period just ended.  The activity trace decays by ``exp(-p/tau)`` per
    period and absorbs the new count; the duty is the clamped affine readout.
    """
    decay = math.exp(-cfg.update_period_ms / cfg.tau_out_ms)
    state.activity = state.activity * decay + float(n_spikes)
    state.omega = min(max(cfg.gain * state.activity + cfg.bias, cfg.clamp_lo), cfg.clamp_hi)
    return MotorCommand(omega=state.omega)
