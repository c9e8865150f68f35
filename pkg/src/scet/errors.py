"""Exception types raised across the package."""


class ScetError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ScetError, ValueError):
    pass


class ShapeError(ScetError, ValueError):
    pass


class NonConvergenceError(ScetError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateDistributionError(ScetError, ValueError):
    pass


class InfiniteDivergenceError(ScetError, ValueError):
    pass


class DivergenceError(ScetError, FloatingPointError):
    """A simulation or training run produced non-finite or runaway values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StepSizeError(ScetError, ValueError):
    def __init__(self, message, required_dt=None):
        super().__init__(message)
        self.required_dt = required_dt


class ConfigError(ScetError, ValueError):
    pass


class EmptyInputError(ScetError, ValueError):
    pass


class ModeError(ScetError, ValueError):
    pass


class LengthError(ScetError, ValueError):
    pass


class CorpusEncodingError(ScetError, UnicodeError):
    pass


class CheckpointError(ScetError, OSError):
    pass
