"""Exception types shared across the toolkit."""


class SipColavError(Exception):
    """Base class for all toolkit errors."""


class NonConvexPolygon(SipColavError):
    """Vertex list does not describe a convex polygon."""


class DegeneratePolygon(SipColavError):
    """Polygon has fewer than 3 vertices or near-zero area."""


class EmptyObstacleSet(SipColavError):
    """No obstacle points were supplied."""


class OutOfBounds(SipColavError):
    """A queried position lies outside the gridded field."""


class PenetrationCase(SipColavError):
    """Obstacle point lies on or inside the padded footprint; the
    collision-constraint gradient is undefined there."""


class NoConvergence(SipColavError):
    """An iterative routine hit its iteration cap without meeting its
    convergence tolerance."""


class DimensionMismatch(SipColavError):
    """Matrix or vector dimensions are inconsistent."""


class NotSymmetric(SipColavError):
    """Matrix expected to be symmetric is not (beyond tolerance)."""


class IndefiniteBeyondTolerance(SipColavError):
    """Matrix expected to be PSD has eigenvalues below -tolerance."""


class QpFailure(SipColavError):
    """The structured QP could not be solved (infeasible hard bounds or
    numerical breakdown)."""


class MapExit(SipColavError):
    """The candidate trajectory leaves the gridded field."""


class DegeneratePath(SipColavError):
    """Reference waypoints have (near-)zero total length."""


class SchemaError(SipColavError):
    """Scenario file failed validation."""
