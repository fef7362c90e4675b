"""Exception hierarchy shared across the package."""


class QDGANError(Exception):
    """Base class for errors raised by qdgan."""


class ConfigurationError(QDGANError, ValueError):
    """Invalid network, genome or run configuration."""


class UsageError(QDGANError, ValueError):
    """An operation was called with arguments that violate its contract."""


class InfeasiblePhenotypeError(QDGANError):
    """A genome cannot be mapped onto a network for the given sample shape."""


class TrainingDivergenceError(QDGANError, FloatingPointError):
    """A gradient or loss became non-finite during training."""

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index


class MetricError(QDGANError, ArithmeticError):
    """A distance computation failed (e.g. eigensolver non-convergence)."""


class FormatError(QDGANError, ValueError):
    """Malformed input file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset
