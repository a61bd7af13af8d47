"""Exception types shared across the package."""


class SspeError(Exception):
    """Base class for all package errors."""


class BoundsError(SspeError, ValueError):
    """A value fell outside its declared closed bounds."""


class CapacityError(SspeError, ValueError):
    """A cluster operation would violate a capacity floor."""


class StructuralError(SspeError, ValueError):
    """A topology, placement, or partition references something that does not exist."""


class CodecError(SspeError, ValueError):
    """An action index is outside the codec's cardinality."""


class LifecycleError(SspeError, RuntimeError):
    """An environment was stepped after the episode finished."""


class DomainError(SspeError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class OrderingError(SspeError, ValueError):
    """A metric sample regressed in time."""


class MetricLookupError(SspeError, KeyError):
    """A metric name was queried before any sample was recorded for it."""


class LogParseError(SspeError, ValueError):
    """An event-log line or record could not be parsed.

    `line` is 1-based for files, 0-based record index for in-memory traces.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ConfigValidationError(SspeError, ValueError):
    """A run configuration violated one or more invariants.

    `violations` lists every failure as "field.path: message".
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            "invalid run configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )


class CheckpointIntegrityError(SspeError, ValueError):
    """A checkpoint file is corrupt; `field` names what failed."""

    def __init__(self, field: str, message: str | None = None):
        self.field = field
        super().__init__(message or f"checkpoint integrity failure in field '{field}'")


class ShapeError(SspeError, ValueError):
    """Array or layer dimensions are incompatible."""


class NoDataError(SspeError, RuntimeError):
    """A summary was requested over an empty data series."""
