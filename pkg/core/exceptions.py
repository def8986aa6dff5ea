"""Domain errors shared by every viewforge app."""


class ViewforgeError(Exception):
    """Base class; `code` is the machine-readable prefix used by the CLI."""

    code = 'viewforge-error'

    def __init__(self, message: str = ''):
        super().__init__(message or self.__class__.__doc__)


class DegenerateGeometryError(ViewforgeError, ValueError):
    """Coincident points or zero-length rays."""
    code = 'degenerate-geometry'


class SingularGeometryError(ViewforgeError, ValueError):
    """Normal equations of the triangulation are rank-deficient."""
    code = 'singular-geometry'


class EmptyRegionError(ViewforgeError, ValueError):
    """Region of interest holds no triangles."""
    code = 'empty-roi'


class NoFreeSpaceError(ViewforgeError):
    """No sampled position satisfies the safety distance."""
    code = 'no-free-space'


class InfeasibleTripletError(ViewforgeError, ValueError):
    """Requested triangulation angle cannot be realised by an equilateral triplet."""
    code = 'infeasible-triplet'


class RegistrationChainError(ViewforgeError):
    """A planned camera cannot be chained to earlier images within the insertion cap."""
    code = 'registration-chain'


class NoSamplesError(ViewforgeError, ValueError):
    """No training samples are available for a class."""
    code = 'no-samples'


class UnknownPresetError(ViewforgeError, KeyError):
    """Scene preset is not known."""
    code = 'unknown-preset'

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else self.__class__.__doc__


class BackendError(ViewforgeError):
    """The MVS backend failed on a triplet."""
    code = 'backend-failure'


class FormatError(ViewforgeError, ValueError):
    """An input file does not match its declared format."""
    code = 'bad-format'
