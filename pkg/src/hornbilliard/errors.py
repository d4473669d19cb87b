"""Exception hierarchy.  Every domain failure derives from BilliardError."""


class BilliardError(Exception):
    pass


class DomainError(BilliardError, ValueError):
    """An argument lies outside the domain of the operation."""


class TrappedError(BilliardError):
    """Head-on entry into a horn: the geodesic never returns."""


class InfiniteHorizonError(BilliardError):
    """A ray travelled past the length cap without meeting an obstacle."""


class NearGrazingError(BilliardError):
    """A tangency makes the derivative undefined at this point."""


class SingularityCrossing(BilliardError):
    """A finite-difference stencil straddles a singularity curve."""


class ConfigError(BilliardError, ValueError):
    """Invalid table or run configuration."""


class RangeError(BilliardError, ValueError):
    """A requested root or bracket is outside the representable range."""
