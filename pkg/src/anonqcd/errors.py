"""Exception types raised across the package."""


class AnonQcdError(Exception):
    """Base class for all package errors."""


class ModelError(AnonQcdError):
    """Invalid network model (bad sizes, mixed kinds, unidentifiable mixtures)."""


class UnsupportedKindError(AnonQcdError):
    """Operation requires a discrete (or Gaussian) model and got the other kind."""


class InvalidBatchError(AnonQcdError):
    """Batch is impossible under both hypotheses, or malformed."""


class NoConvergenceError(AnonQcdError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateModelError(AnonQcdError):
    """Positive-drift region is empty at the requested resolution."""


class CalibrationError(AnonQcdError):
    """Threshold calibration could not bracket the requested run-length target."""


class CapacityError(AnonQcdError):
    """Problem size exceeds a documented enumeration cap."""


class DetectorStoppedError(AnonQcdError):
    """A stopped detector state was stepped again."""


class SimulationError(AnonQcdError):
    """Monte Carlo run invalid (excess censoring, zero completed runs)."""


class ConfigError(AnonQcdError):
    """Experiment config file failed validation."""
