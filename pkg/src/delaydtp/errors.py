"""Exception types shared across the package."""


class DelayDtpError(Exception):
    """Base class for all package errors."""


class ParameterError(DelayDtpError, ValueError):
    """An input violates a documented invariant; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(message)
        self.field = field


class SingularDelayError(ParameterError):
    """Reduced-model quantity requested at tau = 1."""

    def __init__(self, message):
        super().__init__("tau", message)


class MeshError(ParameterError):
    """Path mesh is not commensurate with the delay, or the delay exceeds the horizon."""

    def __init__(self, message):
        super().__init__("mesh", message)


class RootSearchError(DelayDtpError, RuntimeError):
    """Characteristic root search failed inside its window."""


class DivergenceError(DelayDtpError, RuntimeError):
    """Every relaxation run diverged."""


class InterfaceStarvation(DelayDtpError, RuntimeError):
    """No forward flux sampling trial reached the next interface."""

    def __init__(self, index, message):
        super().__init__(message)
        self.index = index
