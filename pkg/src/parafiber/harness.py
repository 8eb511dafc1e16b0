"""Closed-loop experiment runner: configuration, scheduling, logging, metrics.

One simulated session couples four clocks to the engine tick (1 ms):

* the plant integrates every 2 ms (500 Hz),
* the teacher recomputes the one-sided error every 50 ms (20 Hz),
* each motor decoder updates every 20 ms,
* telemetry frames are emitted every 20 ms (configurable).

Everything is driven from a single loop in simulated-time order, so a
session is a pure function of its configuration and seed: two headless
runs write byte-identical CSV logs.  Scripted commands (set point, PID
gains, learning freeze/reset, snapshot) are applied at telemetry frame
boundaries, which is also how the live server injects them.

Per tick, in fixed order: plant step(s) if due, teacher update if due,
encoder value refresh if due, encoder spike emission, one engine tick,
motor decode if due, telemetry/commands if due.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cerebellum import SIDES, CerebellarSystem, CerebellumConfig, build_network
from .codec import (
    MotorDecoderConfig,
    MotorDecoderState,
    PopulationEncoder,
    PopulationEncoderConfig,
    RateEncoder,
    gaussian_rates,
    motor_decode,
)
from .engine import NumericMode, SpikeEvent
from .errors import ConfigError
from .fixedpoint import FixedPointFormat
from .plant import PidConfig, PidState, PlantParams, PlantState, pid_teacher, plant_step
from .plasticity import build_kernel_lut


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class SetpointConfig:
    kind: str = "sine"  # sine | triangle | constant | manual
    freq_hz: float = 1.0 / 15.0
    amplitude_deg: float = 30.0
    value_deg: float = 0.0  # constant / initial manual value
    phase_rad: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("sine", "triangle", "constant", "manual"):
            raise ConfigError(f"unknown setpoint kind {self.kind!r}")


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "float64"  # float64 | fixed
    tick_ms: float = 1.0
    int_bits: int = 16
    frac_bits: int = 15

    def numeric_mode(self) -> NumericMode:
        return NumericMode(mode=self.mode, fmt=FixedPointFormat(self.int_bits, self.frac_bits))


@dataclass(frozen=True)
class KernelConfig:
    t_peak_ms: float = 100.0
    sigma_ms: float = 25.0
    a_ltd: float = 0.02  # 0.005 * w_max at the default w_max = 4
    a_ltp: float = 0.002
    bin_ms: float = 1.0
    t_win_ms: float = 250.0


@dataclass(frozen=True)
class CodecConfig:
    mof_act: PopulationEncoderConfig = field(
        default_factory=lambda: PopulationEncoderConfig(update_period_ms=2.0)
    )
    mof_set: PopulationEncoderConfig = field(
        default_factory=lambda: PopulationEncoderConfig(update_period_ms=50.0)
    )
    ino_r_max_hz: float = 10.0
    ino_update_period_ms: float = 50.0
    motor: MotorDecoderConfig = field(default_factory=MotorDecoderConfig)


@dataclass(frozen=True)
class SessionConfig:
    seed: int = 1
    duration_s: float = 300.0
    engine: EngineConfig = field(default_factory=EngineConfig)
    cerebellum: CerebellumConfig = field(default_factory=CerebellumConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    pid: PidConfig = field(default_factory=PidConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    setpoint: SetpointConfig = field(default_factory=SetpointConfig)
    learning_enabled: bool = True
    telemetry_period_ms: float = 20.0
    weight_dump_period_s: float = 0.0  # 0 disables weight dumps

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError("duration must be > 0")
        if self.telemetry_period_ms <= 0:
            raise ConfigError("telemetry period must be > 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)

    @staticmethod
    def from_dict(data: dict) -> "SessionConfig":
        return _dataclass_from_dict(SessionConfig, data)

    @staticmethod
    def from_json_file(path: str | Path) -> "SessionConfig":
        return SessionConfig.from_dict(json.loads(Path(path).read_text()))


def _dataclass_from_dict(cls, data):
    if not dataclasses.is_dataclass(cls):
        return data
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        target = hints[f.name]
        if dataclasses.is_dataclass(target) and isinstance(value, dict):
            kwargs[f.name] = _dataclass_from_dict(target, value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


# -- telemetry, commands, metrics ---------------------------------------------


@dataclass
class TelemetryFrame:
    t: float  # seconds
    phi_set: float
    phi_act: float
    eps_l: float
    eps_r: float
    omega_l: float
    omega_r: float
    spike_counts: dict[str, int] = field(default_factory=dict)
    rasters: dict[str, list[tuple[float, int]]] | None = None
    raster_dropped: bool = False

    def scalar_dict(self) -> dict:
        return {
            "t": self.t,
            "phi_set": self.phi_set,
            "phi_act": self.phi_act,
            "eps_l": self.eps_l,
            "eps_r": self.eps_r,
            "omega_l": self.omega_l,
            "omega_r": self.omega_r,
        }


@dataclass(frozen=True)
class Command:
    """A control-surface command, applied at a telemetry frame boundary.

    ``kind`` is one of set_setpoint, set_waveform, set_pid, freeze_learning,
    reset_weights, snapshot, subscribe_rasters.  ``at_s`` pins the simulated
    time of application (commands without it apply at the next boundary).
    """

    kind: str
    at_s: float | None = None
    value: float | None = None
    waveform: dict | None = None
    gains: tuple[float, float, float] | None = None
    on: bool | None = None
    populations: tuple[str, ...] | None = None


@dataclass
class TrackingMetrics:
    window_s: float
    rmse_per_window: list[float]
    overall_rmse: float
    improvement_ratio: float | None
    spike_rates_hz: dict[str, float]


def compute_metrics(
    frames: list[TelemetryFrame] | list[dict],
    window_s: float,
    duration_s: float | None = None,
) -> TrackingMetrics:
    """Windowed tracking error over a telemetry record.

    The improvement ratio is first-window over last-window RMSE (> 1 means
    the end of the run tracks better than the start).
    """
    if not frames:
        raise ConfigError("empty telemetry log")
    rows = [f.scalar_dict() if isinstance(f, TelemetryFrame) else f for f in frames]
    t = np.asarray([r["t"] for r in rows])
    err = np.asarray([r["phi_set"] - r["phi_act"] for r in rows])
    t_end = duration_s if duration_s is not None else float(t[-1])
    edges = np.arange(0.0, t_end + 1e-9, window_s)
    rmse = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (t > lo) & (t <= hi + 1e-12)
        if m.any():
            rmse.append(float(np.sqrt(np.mean(err[m] ** 2))))
    counts: dict[str, float] = {}
    for f in frames:
        if isinstance(f, TelemetryFrame):
            for pop, n in f.spike_counts.items():
                counts[pop] = counts.get(pop, 0.0) + n
    span = float(t[-1] - t[0]) + 1e-12
    rates = {pop: n / span for pop, n in sorted(counts.items())}
    ratio = (rmse[0] / rmse[-1]) if len(rmse) >= 2 and rmse[-1] > 0 else None
    return TrackingMetrics(
        window_s=window_s,
        rmse_per_window=rmse,
        overall_rmse=float(np.sqrt(np.mean(err**2))),
        improvement_ratio=ratio,
        spike_rates_hz=rates,
    )


# -- the closed loop ----------------------------------------------------------


def setpoint_value(cfg: SetpointConfig, t_s: float, manual_value: float) -> float:
    if cfg.kind == "sine":
        return cfg.amplitude_deg * math.sin(2.0 * math.pi * cfg.freq_hz * t_s + cfg.phase_rad)
    if cfg.kind == "triangle":
        phase = (cfg.freq_hz * t_s + cfg.phase_rad / (2.0 * math.pi)) % 1.0
        return cfg.amplitude_deg * (4.0 * abs(phase - 0.5) - 1.0)
    if cfg.kind == "constant":
        return cfg.value_deg
    return manual_value


class ClosedLoop:
    """One session's complete state plus the per-tick stepping rule.

    Used directly by the headless runner and wrapped by the live server;
    both therefore share sim-time semantics exactly.
    """

    def __init__(self, cfg: SessionConfig, commands: list[Command] | None = None):
        self.cfg = cfg
        dt = cfg.engine.tick_ms
        self.dt = dt
        lut = build_kernel_lut(
            t_peak=cfg.kernel.t_peak_ms,
            sigma=cfg.kernel.sigma_ms,
            a_ltd=cfg.kernel.a_ltd,
            a_ltp=cfg.kernel.a_ltp,
            bin_ms=cfg.kernel.bin_ms,
            t_win=cfg.kernel.t_win_ms,
            w_min=0.0,
            w_max=cfg.cerebellum.w_max,
        )
        # the session seed is the master: it shifts the network build seed and
        # seeds the stochastic encoders, so one number reproduces everything
        self.system: CerebellarSystem = build_network(
            dataclasses.replace(cfg.cerebellum, seed=cfg.cerebellum.seed + cfg.seed),
            lut=lut,
            dt_ms=dt,
            mode=cfg.engine.numeric_mode(),
        )
        self.net = self.system.network
        for side in SIDES:
            self.system.plasticity[side].enabled = cfg.learning_enabled

        self._rng = np.random.default_rng(cfg.seed)
        enc_rngs = self._rng.spawn(2)
        self.enc_act = PopulationEncoder(
            cfg.codec.mof_act, self.net.population("MoF_act").start, dt, rng=enc_rngs[0]
        )
        self.enc_set = PopulationEncoder(
            cfg.codec.mof_set, self.net.population("MoF_set").start, dt, rng=enc_rngs[1]
        )
        self.ino = {
            side: RateEncoder(cfg.codec.ino_r_max_hz, self.net.population(f"InO_{side}").start, dt)
            for side in SIDES
        }
        self.decoder_state = {side: MotorDecoderState() for side in SIDES}
        self._dcn_counts = {side: 0 for side in SIDES}
        self._dcn_range = {
            side: range(
                self.net.population(f"DCN_{side}").start,
                self.net.population(f"DCN_{side}").start + self.net.population(f"DCN_{side}").size,
            )
            for side in SIDES
        }
        self._pop_ranges = {
            p.name: range(p.start, p.start + p.size) for p in self.net.populations
        }
        self._pop_name_by_neuron: list[str] = [""] * self.net.total_neurons
        for p in self.net.populations:
            for gid in range(p.start, p.start + p.size):
                self._pop_name_by_neuron[gid] = p.name

        self.plant_state = PlantState()
        self.pid_cfg = cfg.pid
        self.pid_state = PidState()
        self.omega = {"L": 0.0, "R": 0.0}
        self.eps = {"L": 0.0, "R": 0.0}
        self.manual_setpoint = cfg.setpoint.value_deg
        self.setpoint_cfg = cfg.setpoint

        self._frame_counts: dict[str, int] = {name: 0 for name in self._pop_ranges}
        self._frame_raster: dict[str, list[tuple[float, int]]] = {}
        self.raster_subscription: set[str] = set()
        self.raster_limit_per_frame = 2000

        self._pending_commands: list[Command] = sorted(
            (commands or []), key=lambda c: (c.at_s if c.at_s is not None else -1.0)
        )
        self.applied_commands: list[tuple[float, Command]] = []
        self.snapshots: list[tuple[float, dict[str, np.ndarray]]] = []

        self._ticks_plant = max(1, int(round(cfg.plant.dt_ms / dt)))
        self._ticks_teacher = max(1, int(round(cfg.pid.update_period_ms / dt)))
        self._ticks_motor = max(1, int(round(cfg.codec.motor.update_period_ms / dt)))
        self._ticks_telemetry = max(1, int(round(cfg.telemetry_period_ms / dt)))
        self._ticks_enc_act = self.enc_act.update_period_ticks
        self._ticks_enc_set = self.enc_set.update_period_ticks
        self._ticks_ino = max(1, int(round(cfg.codec.ino_update_period_ms / dt)))

        self.counters = {"plant_steps": 0, "teacher_updates": 0, "motor_updates": 0}

        # prime held values at t = 0
        self.enc_act.set_value(self.plant_state.phi_act)
        self.enc_set.set_value(setpoint_value(cfg.setpoint, 0.0, self.manual_setpoint))

    # -- command surface ---------------------------------------------------

    def queue_command(self, cmd: Command) -> None:
        self._pending_commands.append(cmd)

    def _apply_command(self, cmd: Command, t_s: float) -> None:
        if cmd.kind == "set_setpoint":
            self.setpoint_cfg = dataclasses.replace(self.setpoint_cfg, kind="manual")
            self.manual_setpoint = float(cmd.value)
        elif cmd.kind == "set_waveform":
            self.setpoint_cfg = _dataclass_from_dict(SetpointConfig, cmd.waveform)
        elif cmd.kind == "set_pid":
            kp, ki, kd = cmd.gains
            self.pid_cfg = dataclasses.replace(self.pid_cfg, k_p=kp, k_i=ki, k_d=kd)
        elif cmd.kind == "freeze_learning":
            for side in SIDES:
                self.system.plasticity[side].enabled = not cmd.on
        elif cmd.kind == "reset_weights":
            self.system.reset_weights(np.random.default_rng(self.cfg.seed + 1))
        elif cmd.kind == "snapshot":
            self.snapshots.append(
                (t_s, {side: self.system.plasticity[side].weights.copy() for side in SIDES})
            )
        elif cmd.kind == "subscribe_rasters":
            pops = tuple(cmd.populations or ())
            unknown = [p for p in pops if p not in self._pop_ranges]
            if unknown:
                raise ConfigError(f"unknown population(s) {unknown}")
            self.raster_subscription = set(pops)
        else:
            raise ConfigError(f"unknown command kind {cmd.kind!r}")
        self.applied_commands.append((t_s, cmd))

    def _apply_due_commands(self, t_s: float) -> None:
        still_pending: list[Command] = []
        for cmd in self._pending_commands:
            if cmd.at_s is None or cmd.at_s <= t_s + 1e-12:
                self._apply_command(cmd, t_s)
            else:
                still_pending.append(cmd)
        self._pending_commands = still_pending

    # -- stepping -------------------------------------------------------------

    def step_tick(self, t: int) -> tuple[list[SpikeEvent], TelemetryFrame | None]:
        """Advance the whole closed loop by one engine tick (tick index t >= 1)."""
        cfg = self.cfg
        t_s = t * self.dt / 1000.0

        if t % self._ticks_plant == 0:
            self.plant_state = plant_step(self.plant_state, self.omega["L"], self.omega["R"], cfg.plant)
            self.counters["plant_steps"] += 1

        phi_set = setpoint_value(self.setpoint_cfg, t_s, self.manual_setpoint)

        if t % self._ticks_teacher == 0:
            eps_l, eps_r = pid_teacher(phi_set, self.plant_state.phi_act, self.pid_state, self.pid_cfg)
            self.eps = {"L": eps_l, "R": eps_r}
            self.counters["teacher_updates"] += 1
        if t % self._ticks_ino == 0:
            for side in SIDES:
                self.ino[side].set_value(self.eps[side])

        if t % self._ticks_enc_act == 0:
            self.enc_act.set_value(self.plant_state.phi_act)
        if t % self._ticks_enc_set == 0:
            self.enc_set.set_value(phi_set)

        inputs = self.enc_act.encode_tick(t) + self.enc_set.encode_tick(t)
        for side in SIDES:
            inputs += self.ino[side].encode_tick(t)
        if inputs:
            self.net.queue_input_spikes(inputs)

        spikes = self.net.tick(t)
        for ev in spikes:
            pop = self._pop_name_by_neuron[ev.neuron]
            if pop == "DCN_L":
                self._dcn_counts["L"] += 1
            elif pop == "DCN_R":
                self._dcn_counts["R"] += 1
            self._frame_counts[pop] += 1
            if pop in self.raster_subscription:
                self._frame_raster.setdefault(pop, []).append((t_s, ev.neuron))

        if t % self._ticks_motor == 0:
            for side in SIDES:
                cmd = motor_decode(self._dcn_counts[side], self.decoder_state[side], cfg.codec.motor)
                self.omega[side] = cmd.omega
                self._dcn_counts[side] = 0
            self.counters["motor_updates"] += 1

        frame: TelemetryFrame | None = None
        if t % self._ticks_telemetry == 0:
            frame = self._emit_frame(t_s, phi_set)
            self._apply_due_commands(t_s)
        return spikes, frame

    def _emit_frame(self, t_s: float, phi_set: float) -> TelemetryFrame:
        n_raster = sum(len(v) for v in self._frame_raster.values())
        dropped = n_raster > self.raster_limit_per_frame
        frame = TelemetryFrame(
            t=t_s,
            phi_set=phi_set,
            phi_act=self.plant_state.phi_act,
            eps_l=self.eps["L"],
            eps_r=self.eps["R"],
            omega_l=self.omega["L"],
            omega_r=self.omega["R"],
            spike_counts=dict(self._frame_counts),
            rasters=None if (dropped or not self.raster_subscription) else dict(self._frame_raster),
            raster_dropped=dropped,
        )
        self._frame_counts = {name: 0 for name in self._pop_ranges}
        self._frame_raster = {}
        return frame

    def _pop_name_of(self, neuron: int) -> str:
        return self._pop_name_by_neuron[neuron]

    @property
    def n_ticks(self) -> int:
        return int(round(self.cfg.duration_s * 1000.0 / self.dt))


# -- headless session ---------------------------------------------------------


FLOAT_FMT = "%.6f"


@dataclass
class SessionResult:
    frames: list[TelemetryFrame]
    metrics: TrackingMetrics
    telemetry_path: Path | None
    spikes_path: Path | None
    weight_paths: list[Path]
    counters: dict[str, int]
    spikes: list[SpikeEvent] | None = None


def run_session(
    cfg: SessionConfig,
    out_dir: str | Path | None = None,
    commands: list[Command] | None = None,
    metrics_window_s: float = 60.0,
    keep_spikes: bool = False,
) -> SessionResult:
    """Run one headless session; returns frames and metrics, optionally
    writing telemetry.csv, spikes.csv and weights_<t>.csv under ``out_dir``."""
    loop = ClosedLoop(cfg, commands=commands)
    out = Path(out_dir) if out_dir is not None else None
    telemetry_path = spikes_path = None
    weight_paths: list[Path] = []
    tele_buf = io.StringIO()
    spike_buf = io.StringIO()
    tele_buf.write("t,phi_set,phi_act,eps_l,eps_r,omega_l,omega_r\n")
    spike_buf.write("t,neuron,population\n")

    frames: list[TelemetryFrame] = []
    all_spikes: list[SpikeEvent] = []
    dump_every = (
        int(round(cfg.weight_dump_period_s * 1000.0 / cfg.engine.tick_ms))
        if cfg.weight_dump_period_s > 0
        else 0
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for t in range(1, loop.n_ticks + 1):
        spikes, frame = loop.step_tick(t)
        if out is not None or keep_spikes:
            t_s = t * cfg.engine.tick_ms / 1000.0
            for ev in spikes:
                spike_buf.write(f"{t_s:.3f},{ev.neuron},{loop._pop_name_of(ev.neuron)}\n")
            if keep_spikes:
                all_spikes.extend(spikes)
        if frame is not None:
            frames.append(frame)
            tele_buf.write(
                f"{frame.t:.3f},{frame.phi_set:.6f},{frame.phi_act:.6f},"
                f"{frame.eps_l:.6f},{frame.eps_r:.6f},{frame.omega_l:.6f},{frame.omega_r:.6f}\n"
            )
        if dump_every and t % dump_every == 0 and out is not None:
            path = out / f"weights_{t * cfg.engine.tick_ms / 1000.0:.0f}.csv"
            _dump_weights(loop, path)
            weight_paths.append(path)

    if out is not None:
        telemetry_path = out / "telemetry.csv"
        telemetry_path.write_text(tele_buf.getvalue())
        spikes_path = out / "spikes.csv"
        spikes_path.write_text(spike_buf.getvalue())
        (out / "config.json").write_text(cfg.to_json())

    window = min(metrics_window_s, cfg.duration_s)
    metrics = compute_metrics(frames, window, duration_s=cfg.duration_s)
    return SessionResult(
        frames=frames,
        metrics=metrics,
        telemetry_path=telemetry_path,
        spikes_path=spikes_path,
        weight_paths=weight_paths,
        counters=dict(loop.counters),
        spikes=all_spikes if keep_spikes else None,
    )


def _dump_weights(loop: ClosedLoop, path: Path) -> None:
    with path.open("w") as fh:
        fh.write("side,pre,post,weight\n")
        for side in SIDES:
            state = loop.system.plasticity[side]
            proj = next(p for p in loop.net.projections if p.name == f"GrC->PuC_{side}")
            for k in range(0, state.n_synapses):
                fh.write(f"{side},{int(proj.pre[k])},{int(proj.post[k])},{state.weights[k]:.9g}\n")


# -- scripted open-loop input + engine comparison ------------------------------


def scripted_cerebellar_inputs(
    cfg: SessionConfig, duration_s: float
) -> tuple[list[SpikeEvent], CerebellarSystem]:
    """Deterministic open-loop input record for engine cross-validation.

    Drives the encoders from a synthetic pair of trajectories (the set
    point and a lagged, attenuated actual angle) plus the teacher's
    one-sided error, producing the identical input spike list that can be
    fed to the tick engine in any numeric mode and to the reference
    simulator.
    """
    loop = ClosedLoop(cfg)
    n_ticks = int(round(duration_s * 1000.0 / cfg.engine.tick_ms))
    events: list[SpikeEvent] = []
    pid_state = PidState()
    eps = {"L": 0.0, "R": 0.0}
    for t in range(1, n_ticks + 1):
        t_s = t * cfg.engine.tick_ms / 1000.0
        phi_set = setpoint_value(cfg.setpoint, t_s, 0.0)
        phi_act = 0.8 * setpoint_value(cfg.setpoint, t_s - 1.5, 0.0)
        if t % loop._ticks_teacher == 0:
            eps_l, eps_r = pid_teacher(phi_set, phi_act, pid_state, cfg.pid)
            eps = {"L": eps_l, "R": eps_r}
            for side in SIDES:
                loop.ino[side].set_value(eps[side])
        if t % loop._ticks_enc_act == 0:
            loop.enc_act.set_value(phi_act)
        if t % loop._ticks_enc_set == 0:
            loop.enc_set.set_value(phi_set)
        events += loop.enc_act.encode_tick(t) + loop.enc_set.encode_tick(t)
        for side in SIDES:
            events += loop.ino[side].encode_tick(t)
    return events, loop.system


def compare_engine_modes(
    cfg: SessionConfig,
    duration_s: float = 60.0,
    against_oracle: bool = True,
    modes: tuple[str, ...] = ("float64", "fixed"),
    tick_ms: float | None = None,
) -> dict:
    """Run the cerebellar network open-loop in the given numeric modes (and
    the reference simulator) on one identical input record; returns
    per-population spike counts and worst relative deviations.  Learning is
    frozen so the comparison isolates the engines.

    ``tick_ms`` overrides the engine tick for this comparison.  Populations
    under sustained drive fire at the tick-quantized period, a systematic
    rate bias of roughly one tick per inter-spike interval that shrinks
    linearly with the tick; comparisons against the continuous reference
    should therefore use a refined tick so they measure the implementation
    rather than the discretization.
    """
    from .oracle import event_driven_run

    engine_cfg = cfg.engine if tick_ms is None else dataclasses.replace(cfg.engine, tick_ms=tick_ms)
    base = dataclasses.replace(cfg, learning_enabled=False, engine=engine_cfg)
    events, _ = scripted_cerebellar_inputs(base, duration_s)
    n_ticks = int(round(duration_s * 1000.0 / engine_cfg.tick_ms))

    def run_mode(mode: str) -> dict[str, int]:
        loop = ClosedLoop(dataclasses.replace(base, engine=dataclasses.replace(engine_cfg, mode=mode)))
        net = loop.system.network
        net.queue_input_spikes(events)
        counts = {p.name: 0 for p in net.populations}
        for t in range(1, n_ticks + 1):
            for ev in net.tick(t):
                counts[loop._pop_name_of(ev.neuron)] += 1
        return counts

    report: dict = {"duration_s": duration_s, "tick_ms": engine_cfg.tick_ms}
    by_mode: dict[str, dict[str, int]] = {}
    for mode in modes:
        key = "float" if mode == "float64" else mode
        by_mode[key] = run_mode(mode)
        report[key] = by_mode[key]

    if against_oracle:
        loop = ClosedLoop(base)
        oracle_spikes = event_driven_run(loop.system.network, events, duration_s * 1000.0)
        counts = {p.name: 0 for p in loop.system.network.populations}
        for s in oracle_spikes:
            counts[loop._pop_name_of(s.neuron)] += 1
        report["oracle"] = counts

    def worst_rel(a: dict[str, int], b: dict[str, int]) -> float:
        worst = 0.0
        for pop, na in a.items():
            nb = b.get(pop, 0)
            if max(na, nb) > 0:
                worst = max(worst, abs(na - nb) / max(na, nb))
        return worst

    if "float" in by_mode and "fixed" in by_mode:
        report["fixed_vs_float_worst_rel"] = worst_rel(by_mode["fixed"], by_mode["float"])
    if against_oracle:
        for key, counts in by_mode.items():
            report[f"{key}_vs_oracle_worst_rel"] = worst_rel(counts, report["oracle"])
    return report
