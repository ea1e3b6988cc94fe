"""Exception types shared across the package."""


class SpikeDecodeError(Exception):
    """Base class for all spikedecode errors."""


class ConfigError(SpikeDecodeError):
    """Invalid configuration value or combination."""


class SessionFormatError(SpikeDecodeError):
    """Malformed or inconsistent session data on disk."""


class DataError(SpikeDecodeError):
    """Valid format but unusable data (empty sets, dropped classes, dim mismatch)."""


class DivergenceError(SpikeDecodeError):
    """Non-finite loss or gradients during training."""
