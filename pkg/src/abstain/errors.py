"""Exception taxonomy shared across the engine.

Every failure the engine raises deliberately derives from EngineError so
callers (CLI, gateway) can map kinds to exit codes / HTTP statuses without
string matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all deliberate engine failures."""


class InputError(EngineError):
    """Caller passed structurally invalid arguments (e.g. mismatched lists)."""


class SchemaError(EngineError):
    """A dataset or fixture file violates its schema; message carries the line."""


class UndefinedMetricError(EngineError):
    """A metric's denominator is empty; callers must surface a sentinel, not 0."""


class BackendUnavailableError(EngineError):
    """All retry attempts against a backend failed.

    Carries the attempt count and the last underlying cause.
    """

    def __init__(self, message: str, attempts: int = 0, cause: Exception | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.cause = cause


class RetryableTransportError(EngineError):
    """A transient transport or 5xx failure; eligible for retry."""


class FixtureMissError(EngineError):
    """A scripted backend was asked for an unregistered request (test bug)."""


class ProtocolError(EngineError):
    """A backend answered with a malformed or inconsistent response."""


class DegenerateInputError(EngineError):
    """An operation received input it cannot meaningfully process
    (zero vector, empty generation, empty reconstruction)."""


class CapabilityError(EngineError):
    """The configured backend cannot serve what the method requires
    (e.g. token log-probabilities)."""


class CalibrationError(EngineError):
    """Threshold calibration was invoked without usable development data."""


class ConfigurationError(EngineError):
    """The engine or a method was configured inconsistently."""


class DecisionError(EngineError):
    """A decision pipeline stage failed hard; ``stage`` names it."""

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage
