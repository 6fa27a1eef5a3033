"""Exceptions raised by the spin readout toolkit."""


class SpinReadoutError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SpinReadoutError):
    """Invalid configuration document, option or command usage."""


class DatasetError(SpinReadoutError):
    """Dataset cannot be used for the requested operation."""


class SimulationError(SpinReadoutError):
    """Simulator configuration cannot produce the requested traces."""


class NoiseError(SpinReadoutError):
    """Invalid noise parameters or undefined signal-to-noise ratio."""


class ShapeError(SpinReadoutError):
    """Trace length does not match what the consumer expects."""


class FormatError(SpinReadoutError):
    """Malformed trace, dataset or model file."""


class TrainingDivergedError(SpinReadoutError):
    """Training loss became non-finite."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or 'Training diverged at epoch {}'.format(epoch))


class FitError(SpinReadoutError):
    """Exponential fit failed; keeps the last iterate for inspection."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)
