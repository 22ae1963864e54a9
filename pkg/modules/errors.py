"""Exception hierarchy shared by the library, the CLI and the HTTP service."""

from typing import Optional


class DplsError(Exception):
    """Base class for every error raised by the detection library."""


class InputError(DplsError):
    """The caller supplied data that cannot be used as given."""


class InfeasibleError(DplsError):
    """The requested configuration cannot be honoured."""


class GridParseError(InputError):
    """A grid or stack file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GridMismatchError(InputError):
    """Two objects that must share a lattice do not."""


class EmptyRegionError(InputError):
    """An operation that needs at least one point received an empty region."""


class DegenerateScaleError(InputError):
    """The robust noise scale collapsed to zero."""


class UnsupportedDimensionError(InfeasibleError):
    """Hull geometry is only available for d <= 3."""


class PenaltyRegimeError(InfeasibleError):
    """The dependence exponent lies outside the admissible regime."""


class InfeasibleSettingError(InfeasibleError):
    """A simulation layout cannot be placed on the requested grid."""


class OracleSizeError(InfeasibleError):
    """The exhaustive minimiser refuses grids that are too large."""


class FactorisationError(InfeasibleError):
    """The covariance matrix could not be factorised."""
