"""Exceptions raised by the correlation backend."""
from typing import Optional


class FloodGuardError(Exception):
    """Base class for all backend errors."""

    kind = "error"


class GraphParseError(FloodGuardError):
    """The attack-graph document is not well-formed."""

    kind = "parse_error"


class GraphValidationError(FloodGuardError):
    """The attack-graph document parsed but breaks a graph invariant."""

    kind = "validation_error"

    def __init__(self, message: str, identifier: Optional[str] = None):
        super().__init__(message)
        self.identifier = identifier


class UnknownVertexError(FloodGuardError):
    kind = "unknown_vertex"

    def __init__(self, vertex_id: str):
        super().__init__(f"Unknown exploit vertex: {vertex_id}")
        self.vertex_id = vertex_id


class TimeRegressionError(FloodGuardError):
    """An alert is older than the stream maximum by more than the tolerance."""

    kind = "time_regression"

    def __init__(self, ts_us: int, clock_us: int):
        super().__init__(
            f"Alert at {ts_us / 1_000_000:.6f}s is older than stream time "
            f"{clock_us / 1_000_000:.6f}s beyond tolerance"
        )
        self.ts_us = ts_us
        self.clock_us = clock_us


class ClockRegressionError(FloodGuardError):
    """A token bucket was asked to refill at a time before its last refill."""

    kind = "clock_regression"

    def __init__(self, now_us: int, last_us: int):
        super().__init__(
            f"Bucket clock moved back from {last_us / 1_000_000:.6f}s "
            f"to {now_us / 1_000_000:.6f}s"
        )
        self.now_us = now_us
        self.last_us = last_us


class DuplicateAlertError(FloodGuardError):
    """An alert id was already used earlier in the stream."""

    kind = "duplicate_alert"

    def __init__(self, alert_id: int, last_id: Optional[int] = None):
        if last_id is None:
            message = f"Alert id {alert_id} is already in the correlation graph"
        else:
            message = f"Alert id {alert_id} is not greater than the previous id {last_id}"
        super().__init__(message)
        self.alert_id = alert_id


class CapExceededError(FloodGuardError):
    kind = "cap_exceeded"


class UnsortedInputError(FloodGuardError):
    kind = "unsorted_input"


class AlertParseError(FloodGuardError):
    """A line of the alert stream could not be parsed."""

    kind = "alert_parse_error"

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SpecError(FloodGuardError):
    """Invalid generator spec document."""

    kind = "spec_error"
