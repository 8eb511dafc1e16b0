"""Closed-loop spiking cerebellar motor learning with a tendon-driven joint.

A deterministic tick engine simulates a two-sided cerebellar network whose
parallel-fiber synapses learn, from a PID teaching signal, to steer an
antagonistic series-elastic hinge joint; an event-driven double-precision
twin cross-validates the engine, and a session harness wires plant, codecs,
teacher and network into reproducible experiments.
"""

from .cerebellum import CerebellumConfig, build_network, validate_topology
from .codec import (
    MotorCommand,
    MotorDecoderConfig,
    MotorDecoderState,
    PopulationEncoder,
    PopulationEncoderConfig,
    RateEncoder,
    gaussian_rates,
    motor_decode,
)
from .engine import (
    LifParams,
    LifState,
    Network,
    NumericMode,
    Projection,
    SpikeEvent,
    deliver,
    lif_step,
    make_projection,
)
from .errors import ConfigError, EngineFault, TopologyError
from .harness import (
    ClosedLoop,
    Command,
    SessionConfig,
    TelemetryFrame,
    TrackingMetrics,
    compare_engine_modes,
    compute_metrics,
    run_session,
)
from .oracle import compare_runs, event_driven_run
from .plant import (
    PidConfig,
    PidState,
    PlantParams,
    PlantState,
    pid_teacher,
    plant_step,
    spring_force,
)
from .plasticity import KernelLut, PlasticityState, SynapseSpikeBuffer, build_kernel_lut

__version__ = "0.1.0"

__all__ = [
    "CerebellumConfig",
    "ClosedLoop",
    "Command",
    "ConfigError",
    "EngineFault",
    "KernelLut",
    "LifParams",
    "LifState",
    "MotorCommand",
    "MotorDecoderConfig",
    "MotorDecoderState",
    "Network",
    "NumericMode",
    "PidConfig",
    "PidState",
    "PlantParams",
    "PlantState",
    "PlasticityState",
    "PopulationEncoder",
    "PopulationEncoderConfig",
    "Projection",
    "RateEncoder",
    "SessionConfig",
    "SpikeEvent",
    "SynapseSpikeBuffer",
    "TelemetryFrame",
    "TopologyError",
    "TrackingMetrics",
    "build_kernel_lut",
    "build_network",
    "compare_engine_modes",
    "compare_runs",
    "compute_metrics",
    "deliver",
    "event_driven_run",
    "gaussian_rates",
    "lif_step",
    "make_projection",
    "motor_decode",
    "pid_teacher",
    "plant_step",
    "run_session",
    "spring_force",
    "validate_topology",
]
