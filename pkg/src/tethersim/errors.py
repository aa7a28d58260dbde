"""Exception hierarchy shared by the simulator, controller and CLI."""


class TethersimError(Exception):
    """Base class for all package errors."""


class SingularAttitude(TethersimError):
    """Euler-rate map is singular (pitch too close to +-pi/2)."""


class SingularMatrix(TethersimError):
    """A dense linear solve met a pivot below tolerance."""


class SingularConfiguration(TethersimError):
    """The assembled tether/payload system has no unique solution."""


class NoConvergence(TethersimError):
    pass


class NumericalBlowup(TethersimError):
    pass


class InfeasibleInitialState(TethersimError):
    pass


class ProfileGap(TethersimError):
    """Replay profile has an interval wider than twice its nominal spacing."""


class InfeasibleBounds(TethersimError):
    pass


class ConfigParseError(TethersimError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigValidationError(TethersimError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
