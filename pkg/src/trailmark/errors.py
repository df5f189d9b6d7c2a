"""Exception types raised across the package.

Every data or validation failure derives from :class:`TrailmarkError` so the
CLI can turn it into a machine-readable error document.
"""


class TrailmarkError(Exception):
    """Base class for data/validation errors."""


class MalformedDocument(TrailmarkError):
    pass


class SchemaViolation(TrailmarkError):
    pass


class NonMonotoneTimestamps(TrailmarkError):
    pass


class UnknownFactorCode(TrailmarkError):
    pass


class ScoreOutOfRange(TrailmarkError):
    pass


class TooFewFrames(TrailmarkError):
    pass


class ChannelTooSparse(TrailmarkError):
    pass


class BadWindow(TrailmarkError):
    pass


class EmptyInput(TrailmarkError):
    pass


class ShapeMismatch(TrailmarkError):
    pass


class EmptyGrid(TrailmarkError):
    pass


class TooFewSamples(TrailmarkError):
    pass


class DimensionMismatch(TrailmarkError):
    pass


class TooFewPoints(TrailmarkError):
    pass


class OutOfRange(TrailmarkError):
    pass


class NoMajority(TrailmarkError):
    pass


class DegenerateData(TrailmarkError):
    pass


class LengthMismatch(TrailmarkError):
    pass


class ConstantTruth(TrailmarkError):
    pass


class BudgetTooSmall(TrailmarkError):
    pass


class BadConfig(TrailmarkError):
    pass


class DegenerateElbowWarning(UserWarning):
    """All elbow chord distances vanish; the curve has no bend."""
