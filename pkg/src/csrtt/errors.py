"""Exception types raised across the simulator."""


class CsrttError(Exception):
    """Base class for all simulator errors."""


class InvalidParams(CsrttError, ValueError):
    pass


class LengthMismatch(CsrttError, ValueError):
    pass


class GridOverflow(CsrttError, ValueError):
    pass


class ZeroEnergy(CsrttError, ValueError):
    pass


class EmptyInput(CsrttError, ValueError):
    pass


class ShiftOutOfRange(CsrttError, ValueError):
    """Requested TA + p_d does not fit the unambiguous cyclic-shift window."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AmbiguousDetection(CsrttError, RuntimeError):
    """Multi-root detection could not tell the candidate roots apart."""


class CombCollision(CsrttError, ValueError):
    pass


class GridDegenerate(CsrttError, ValueError):
    pass


class ScenarioError(CsrttError, ValueError):
    pass


class ScenarioParseError(ScenarioError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ScenarioValidationError(ScenarioError):
    pass
