"""Exception hierarchy shared by all modules."""


class RecurrenceError(Exception):
    """Base class for every error raised by this package."""


class MapError(RecurrenceError):
    pass


class NotExpanding(MapError):
    pass


class NotMarkov(MapError):
    pass


class NotPrimitive(MapError):
    pass


class BadPartition(MapError):
    pass


class Inadmissible(MapError):
    pass


class DepthOverflow(MapError):
    pass


class InsufficientDepth(MapError):
    pass


class NoConvergence(RecurrenceError):
    pass


class BracketFailure(RecurrenceError):
    pass


class BadInput(RecurrenceError):
    pass


class InconsistentDimension(RecurrenceError):
    pass


class InconsistentVariance(RecurrenceError):
    pass


class NonPositiveRate(RecurrenceError):
    pass


class BadInterval(RecurrenceError):
    pass


class ZeroMeasure(RecurrenceError):
    pass


class InvalidEstimate(RecurrenceError):
    pass


class ConfigError(RecurrenceError):
    """Scenario file problem; ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where += f"[{field}] "
        if line is not None:
            where += f"(line {line}) "
        super().__init__(where + message)
