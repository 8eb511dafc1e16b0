"""Simulated antagonistic tendon-driven hinge joint and its PID teacher.

Two pull-only actuators sit on opposite sides of a hinge.  Each winds up a
tendon routed through a stiffening series-elastic element: spring force is
``k1*x + k2*x**2`` on the stretched part ``x`` and zero when slack, so
co-activating both sides pretensions the springs and raises the passive
joint stiffness without moving the joint.

Per step (default 2 ms, i.e. 500 Hz): the commanded duty passes a
first-order motor lag, wound tendon length integrates the lagged duty,
and the joint advances with a midpoint rule whose spring torque is the
discrete gradient of the total spring potential.  With zero duty and no
stop contact this makes the discrete step exactly dissipative (energy
drops by the damping loss each step), which a plain explicit or
symplectic-Euler step cannot guarantee near turning points.

The PID teacher is a separate 20 Hz state machine producing the one-sided,
normalized error pair: the side that must pull harder gets the magnitude,
the other side gets exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EngineFault

DEG = math.pi / 180.0


@dataclass(frozen=True)
class SideParams:
    """Per-actuator constants."""

    k_m: float = 0.05  # winding speed at full duty, m/s
    tau_mot_ms: float = 20.0  # motor lag
    k1: float = 500.0  # linear spring term, N/m
    k2: float = 20000.0  # stiffening term, N/m^2
    slack_offset: float = -0.001  # m; negative leaves the tendon slack at rest
    f_stall: float = 80.0  # N; winding speed derates linearly to zero here

    def __post_init__(self) -> None:
        if self.k_m <= 0 or self.k1 <= 0 or self.tau_mot_ms <= 0:
            raise ConfigError("k_m, k1 and tau_mot must be > 0")
        if self.k2 < 0 or self.f_stall <= 0:
            raise ConfigError("k2 must be >= 0 and f_stall > 0")


@dataclass(frozen=True)
class PlantParams:
    inertia: float = 0.02  # kg m^2
    damping: float = 0.01  # N m s / rad
    moment_arm: float = 0.02  # pulley radius, m
    left: SideParams = field(default_factory=SideParams)
    right: SideParams = field(default_factory=SideParams)
    phi_lim_deg: float = 60.0
    stop_stiffness: float = 50.0  # N m / rad beyond the hard stop
    stop_damping: float = 0.5  # N m s / rad while in stop contact
    dt_ms: float = 2.0

    def __post_init__(self) -> None:
        if self.inertia <= 0 or self.moment_arm <= 0 or self.phi_lim_deg <= 0:
            raise ConfigError("inertia, moment arm and joint limit must be > 0")
        if self.damping < 0 or self.dt_ms <= 0:
            raise ConfigError("damping must be >= 0 and dt > 0")


@dataclass
class PlantState:
    """Joint state; angles in degrees, lengths in meters, forces in newtons."""

    phi_act: float = 0.0
    phi_dot: float = 0.0  # deg/s
    duty_l: float = 0.0  # lag-filtered duties
    duty_r: float = 0.0
    wound_l: float = 0.0
    wound_r: float = 0.0
    x_l: float = 0.0  # spring displacements
    x_r: float = 0.0
    force_l: float = 0.0
    force_r: float = 0.0


def spring_force(x: float, side: SideParams) -> float:
    """Tendon force for spring displacement ``x`` (already slack-adjusted)."""
    if x <= 0.0:
        return 0.0
    return side.k1 * x + side.k2 * x * x


def _spring_energy(x: float, side: SideParams) -> float:
    if x <= 0.0:
        return 0.0
    return 0.5 * side.k1 * x * x + side.k2 * x**3 / 3.0


def _displacements(phi_rad: float, wound_l: float, wound_r: float, p: PlantParams) -> tuple[float, float]:
    x_l = wound_l + p.moment_arm * phi_rad + p.left.slack_offset
    x_r = wound_r - p.moment_arm * phi_rad + p.right.slack_offset
    return max(0.0, x_l), max(0.0, x_r)


def _potential(phi_rad: float, wound_l: float, wound_r: float, p: PlantParams) -> float:
    """Total elastic potential: both springs plus the stop springs."""
    x_l, x_r = _displacements(phi_rad, wound_l, wound_r, p)
    u = _spring_energy(x_l, p.left) + _spring_energy(x_r, p.right)
    lim = p.phi_lim_deg * DEG
    if phi_rad > lim:
        u += 0.5 * p.stop_stiffness * (phi_rad - lim) ** 2
    elif phi_rad < -lim:
        u += 0.5 * p.stop_stiffness * (phi_rad + lim) ** 2
    return u


def _potential_torque(phi_rad: float, wound_l: float, wound_r: float, p: PlantParams) -> float:
    """Analytic torque -dU/dphi; used when the midpoint step has zero motion."""
    x_l, x_r = _displacements(phi_rad, wound_l, wound_r, p)
    tau = p.moment_arm * (spring_force(x_r, p.right) - spring_force(x_l, p.left))
    lim = p.phi_lim_deg * DEG
    if phi_rad > lim:
        tau -= p.stop_stiffness * (phi_rad - lim)
    elif phi_rad < -lim:
        tau -= p.stop_stiffness * (phi_rad + lim)
    return tau


def mechanical_energy(state: PlantState, p: PlantParams) -> float:
    """Kinetic plus stored spring energy (stop springs included)."""
    phi_rad = state.phi_act * DEG
    v = state.phi_dot * DEG
    return 0.5 * p.inertia * v * v + _potential(phi_rad, state.wound_l, state.wound_r, p)


def plant_step(state: PlantState, omega_l: float, omega_r: float, p: PlantParams) -> PlantState:
    """Advance the joint by one plant step with duties in [0, 1].

    Implicit midpoint rule on (phi, phi_dot) with the spring torque taken as
    the discrete gradient of the elastic potential; damping acts on the
    midpoint velocity.  The fixed-point iteration converges fast because
    dt^2 * stiffness / inertia is small at 500 Hz.
    """
    if not 0.0 <= omega_l <= 1.0 or not 0.0 <= omega_r <= 1.0:
        raise ConfigError("duties must be within [0, 1]")
    dt = p.dt_ms / 1000.0

    lag_l = math.exp(-p.dt_ms / p.left.tau_mot_ms)
    lag_r = math.exp(-p.dt_ms / p.right.tau_mot_ms)
    duty_l = omega_l + (state.duty_l - omega_l) * lag_l
    duty_r = omega_r + (state.duty_r - omega_r) * lag_r
    # Winding balances the commanded effort against back-drive by tendon
    # tension: at steady state the force settles near duty * f_stall, so a
    # sustained duty commands a bounded pull rather than unbounded winding,
    # and tension pays the cable back out when the command drops.
    wind_l = p.left.k_m * (duty_l - state.force_l / p.left.f_stall)
    wind_r = p.right.k_m * (duty_r - state.force_r / p.right.f_stall)
    wound_l = max(0.0, state.wound_l + wind_l * dt)
    wound_r = max(0.0, state.wound_r + wind_r * dt)

    q0 = state.phi_act * DEG
    v0 = state.phi_dot * DEG
    u0 = _potential(q0, wound_l, wound_r, p)
    lim = p.phi_lim_deg * DEG
    c = p.damping + (p.stop_damping if abs(q0) > lim else 0.0)

    # Damping on the midpoint velocity keeps the exact per-step energy
    # balance dH = -c * dt * v_mid**2 when the duties are zero.
    half = 0.5 * dt * c / p.inertia
    v1 = v0
    for _ in range(12):
        v_mid = 0.5 * (v0 + v1)
        q1 = q0 + dt * v_mid
        if abs(q1 - q0) > 1e-14:
            tau_el = -(_potential(q1, wound_l, wound_r, p) - u0) / (q1 - q0)
        else:
            tau_el = _potential_torque(q0, wound_l, wound_r, p)
        v_next = (v0 * (1.0 - half) + (dt / p.inertia) * tau_el) / (1.0 + half)
        if abs(v_next - v1) < 1e-13:
            v1 = v_next
            break
        v1 = v_next
    v_mid = 0.5 * (v0 + v1)
    q1 = q0 + dt * v_mid

    if not (math.isfinite(q1) and math.isfinite(v1)):
        raise EngineFault("non-finite plant state; check plant parameters")

    x_l, x_r = _displacements(q1, wound_l, wound_r, p)
    return PlantState(
        phi_act=q1 / DEG,
        phi_dot=v1 / DEG,
        duty_l=duty_l,
        duty_r=duty_r,
        wound_l=wound_l,
        wound_r=wound_r,
        x_l=x_l,
        x_r=x_r,
        force_l=spring_force(x_l, p.left),
        force_r=spring_force(x_r, p.right),
    )


@dataclass(frozen=True)
class PidConfig:
    k_p: float = 1.0
    k_i: float = 0.0  # per second
    k_d: float = 0.0  # seconds
    u_max: float = 20.0  # error normalization; u = u_max maps to epsilon = 1
    integral_clamp: float = 30.0
    update_period_ms: float = 50.0  # 20 Hz

    def __post_init__(self) -> None:
        if self.u_max <= 0 or self.update_period_ms <= 0:
            raise ConfigError("u_max and update period must be > 0")
        if min(self.k_p, self.k_i, self.k_d) < 0:
            raise ConfigError("gains must be >= 0")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_teacher(
    phi_set: float,
    phi_act: float,
    state: PidState,
    cfg: PidConfig,
) -> tuple[float, float]:
    """One 20 Hz teacher update; returns the one-sided pair (eps_l, eps_r).

    Positive control output (set point to the right of the joint) maps to
    the right side, negative to the left; at most one side is nonzero.
    """
    period_s = cfg.update_period_ms / 1000.0
    e = phi_set - phi_act
    state.integral = min(max(state.integral + e * period_s, -cfg.integral_clamp), cfg.integral_clamp)
    de = 0.0 if state.prev_error is None else (e - state.prev_error) / period_s
    state.prev_error = e
    u = cfg.k_p * e + cfg.k_i * state.integral + cfg.k_d * de
    if u > 0.0:
        return 0.0, min(u / cfg.u_max, 1.0)
    if u < 0.0:
        return min(-u / cfg.u_max, 1.0), 0.0
    return 0.0, 0.0


def measure_stiffness(
    params: PlantParams,
    pretension_duty: float,
    wind_time_s: float = 2.0,
    probe_deg: float = 1.0,
) -> float:
    """Small-signal stiffness |dtau/dphi| (N m / rad) at phi = 0 after winding
    both sides symmetrically at the given duty for ``wind_time_s``."""
    state = PlantState()
    n = int(round(wind_time_s * 1000.0 / params.dt_ms))
    for _ in range(n):
        state = plant_step(state, pretension_duty, pretension_duty, params)
    probe = probe_deg * DEG
    tau_plus = _potential_torque(probe, state.wound_l, state.wound_r, params)
    tau_minus = _potential_torque(-probe, state.wound_l, state.wound_r, params)
    return abs(tau_plus - tau_minus) / (2.0 * probe)
