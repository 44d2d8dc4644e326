"""Exception types shared across the library."""


class ManiplanError(Exception):
    """Base class for all library-specific errors."""


class FormatError(ManiplanError):
    """A scene / robot / problem / suite document failed to parse or validate.

    ``location`` carries a human-readable field path (and line number when the
    parser provides one).
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class SceneFormatError(FormatError):
    pass


class RobotFormatError(FormatError):
    pass


class ProblemFormatError(FormatError):
    pass


class SingularSystemError(ManiplanError):
    """Undamped least-squares solve hit a rank-deficient normal matrix."""


class PlanSetupError(ManiplanError):
    """Start or goal configuration is invalid for the given problem."""
