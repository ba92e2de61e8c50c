"""Exception and warning types raised across the package."""


class HardSphereError(ValueError):
    """Base class for domain errors."""


class InvalidState(HardSphereError):
    """Phase point lies outside the two-sphere phase space (spheres overlap)."""


class NotInCone(HardSphereError):
    """Velocity does not lie in the collision cone of the position."""


class Degenerate(HardSphereError):
    """Relative position and relative velocity both vanish."""


class UnsupportedRegion(HardSphereError):
    """Requested region/side identity does not exist."""


class AsymmetricDatum(HardSphereError):
    """Initial datum is not invariant under particle exchange."""


class CornerHit(HardSphereError):
    """Billiard trajectory met a corner or grazed the scatterer."""

    def __init__(self, message, time=None, position=None):
        super().__init__(message)
        self.time = time
        self.position = position


class ParseError(HardSphereError):
    """Scenario text could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(HardSphereError):
    """Scenario parsed but a key holds an invalid value."""

    def __init__(self, key, message=""):
        super().__init__(f"{key}: {message}" if message else key)
        self.key = key


class SupportWarning(UserWarning):
    """Initial datum support reaches into the excluded region |x - xbar| < eps."""
