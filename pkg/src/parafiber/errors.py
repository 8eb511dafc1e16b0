"""Shared exception types."""


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


class EngineFault(RuntimeError):
    """The simulation core hit an unrecoverable inconsistency (bad event,
    non-finite state, out-of-order tick)."""


class TopologyError(ValueError):
    """A built network violates the wiring contract; the message names the
    offending population or neuron."""
