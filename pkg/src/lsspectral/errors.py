"""Exception types raised by lsspectral."""


class LSSpectralError(Exception):
    """Base class for all solver errors."""


class BandMismatch(LSSpectralError, ValueError):
    """Coefficient band incompatible with the grid or the other operand."""


class InvalidConfig(LSSpectralError, ValueError):
    """A discretisation or run parameter is out of range."""


class ScalingOverflow(LSSpectralError, ArithmeticError):
    """Log-space recombination of the radial kernel left the double range."""


class BandTooSmall(LSSpectralError, ValueError):
    """Requested band cannot hold the incident azimuthal order."""


class InvalidGeometry(LSSpectralError, ValueError):
    """Scatterer geometry outside the supported range."""


class SingularMatching(LSSpectralError, ArithmeticError):
    """Interface matching system of the exact sphere solution is singular."""


class CacheError(LSSpectralError, ValueError):
    """Moment cache file is corrupt, of another version, or for another key."""


class NonSeparated(LSSpectralError, ValueError):
    """Addition-theorem series requested for (nearly) equal radii."""


class MaxIterations(LSSpectralError):
    """GMRES hit the iteration cap; carries the best iterate."""

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


class Breakdown(LSSpectralError):
    """GMRES Hessenberg degeneracy; carries the best iterate."""

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report
