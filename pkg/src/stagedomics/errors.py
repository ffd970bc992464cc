"""Exception types. Each family maps to a CLI exit code."""


class StagedOmicsError(Exception):
    exit_code = 3


class ConfigError(StagedOmicsError, ValueError):
    """Invalid configuration or usage."""

    exit_code = 1


class DataError(StagedOmicsError, ValueError):
    """Input data failed validation."""

    exit_code = 2


class DegenerateSampleError(DataError):
    """A sample has an all-zero feature vector, so its cosine similarity is undefined."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class AlignmentError(DataError):
    """Two result sets do not cover the same samples in the same order."""


class ShapeError(StagedOmicsError, ValueError):
    pass


class DomainError(StagedOmicsError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UndefinedMetricError(StagedOmicsError, ValueError):
    pass


class NumericError(StagedOmicsError, ArithmeticError):
    """A computation produced NaN or Inf."""


class TrainingDivergenceError(NumericError):
    def __init__(self, message, epoch=None, trial=None):
        super().__init__(message)
        self.epoch = epoch
        self.trial = trial
