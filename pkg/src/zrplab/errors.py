"""Exception and warning classes shared by all zrplab modules."""


class ZRPError(Exception):
    """Base class for every error raised by zrplab."""


class DivergenceError(ZRPError):
    """The partition series does not converge (fugacity at or beyond the radius)."""


class UnreachableDensity(ZRPError):
    pass


class NonMonotone(ZRPError):
    pass


class NotConcave(ZRPError):
    pass


class LinearFlux(ZRPError):
    """A strictly convex or strictly concave flux is required."""


class NonfiniteSearch(ZRPError):
    pass


class NoConvergence(ZRPError):
    pass


class BadMass(ZRPError):
    pass


class BadShape(ZRPError):
    pass


class TooLarge(ZRPError):
    """State space exceeds the enumeration cap."""


class BadMode(ZRPError):
    pass


class NotCrossed(ZRPError):
    pass


class DominationViolated(ZRPError):
    pass


class OrderBroken(AssertionError):
    """Height order lost inside a monotone coupling (an implementation bug)."""


class RegionViolated(AssertionError):
    pass


class WindowEdgeReached(ZRPError):
    """A particle reached the edge of a finite window standing in for an infinite lattice."""


class WindowTooLarge(ZRPError):
    pass


class ConfigInvalid(ZRPError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SchemaMismatch(ZRPError):
    pass


class BoundaryMaxWarning(UserWarning):
    """The Legendre maximiser sits on the edge of the tabulated density range."""
