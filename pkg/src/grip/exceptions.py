"""Exception hierarchy shared across the pipeline."""


class GripError(Exception):
    """Base class for all library errors."""


class DegenerateInput(GripError, ValueError):
    pass


class SequenceTooShort(GripError, ValueError):
    pass


class InvalidCutoff(GripError, ValueError):
    pass


class FlatSignal(GripError, ValueError):
    pass


class StaticityViolation(GripError, ValueError):
    pass


class MissingContext(GripError, ValueError):
    pass


class MissingTpose(GripError, ValueError):
    pass


class DegenerateTrajectory(GripError, ValueError):
    pass


class LayoutMismatch(GripError, ValueError):
    pass


class ShapeMismatch(GripError, ValueError):
    pass


class Underflow(GripError, IndexError):
    pass


class NumericalDivergence(GripError, FloatingPointError):
    pass


class LengthMismatch(GripError, ValueError):
    pass


class EmptySet(GripError, ValueError):
    pass


class ConfigError(GripError, ValueError):
    """Raised when a configuration value is missing or out of range.

    The offending key is available as ``key``.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
