"""Exception types shared across the package."""


class RshLabError(Exception):
    """Base class for all rsh-lab errors."""


class ProblemFormatError(RshLabError):
    """A problem or drift definition file is malformed.

    ``field`` names the offending entry so callers can point users at it.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class StateLimitError(RshLabError):
    """State space exceeds the dense-storage cap."""


class MalformedKernelError(RshLabError):
    """A transition matrix row is not a probability distribution."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class AbsorbingViolationError(RshLabError):
    """An optimal state's row is not a self-loop; lump the kernel first."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class DimensionMismatchError(RshLabError):
    """Vector or matrix dimensions do not line up."""


class NotConvergentError(RshLabError):
    """The requested quantity only exists for convergent chains."""


class SpectralNoConvergenceError(RshLabError):
    """Spectral radius iteration hit its sweep cap.

    ``bracket`` carries the best (lower, upper) enclosure found.
    """

    def __init__(self, bracket, message):
        self.bracket = bracket
        super().__init__(f"{message} (best bracket: [{bracket[0]:.12g}, {bracket[1]:.12g}])")


class CancelledError(RshLabError):
    """A cooperative cancellation token interrupted a long-running solve."""
