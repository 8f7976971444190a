"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class LoadError(EngineError):
    """A project table is missing, unreadable, or has a malformed row."""


class SchemaError(EngineError):
    """Loaded data violates the documented table invariants."""


class ConfigError(EngineError):
    """A run configuration is invalid."""


class PanelError(EngineError):
    """A time-series panel cannot be built from the given activity."""


class FitError(EngineError):
    """Model estimation failed."""


class DegenerateSeriesError(FitError):
    """The series has (numerically) zero variance; a likelihood fit is undefined."""


class FilterError(EngineError):
    """A state-space filter produced a non-finite or invalid state."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class BackendError(EngineError):
    """An external forecasting backend failed, timed out, or misbehaved."""


class ProtocolError(BackendError):
    """A backend reply violates the wire protocol."""


class StatsError(EngineError):
    """A statistical test cannot be run on the given sample."""
