"""Logging filter that collapses repeated messages."""
import logging
from typing import Optional, Tuple


class RepeatedMessageFilter(logging.Filter):
    """
    Drops a record identical to the previous one and counts it instead.

    When a different message arrives after a run of duplicates, a single
    "last message repeated N times" record is logged ahead of it, the way
    syslog does. Attach one instance per handler.
    """

    def __init__(self, name: str = ""):
        super().__init__(name)
        self._last: Optional[Tuple[str, int, str]] = None
        self._repeats = 0

    def filter(self, record: logging.LogRecord) -> bool:
        key = (record.name, record.levelno, record.getMessage())
        if key == self._last:
            self._repeats += 1
            return False
        if self._repeats:
            # Ride on the new record so the summary goes out through the same handler
            record.msg = f"last message repeated {self._repeats} times\n{record.getMessage()}"
            record.args = ()
        self._last = key
        self._repeats = 0
        return True

    def pending(self) -> int:
        return self._repeats

    def flush(self) -> Optional[logging.LogRecord]:
        """Return a "last message repeated N times" record for a run still open, or None."""
        if not self._repeats or self._last is None:
            return None
        name, levelno, _ = self._last
        record = logging.LogRecord(
            name, levelno, __file__, 0, f"last message repeated {self._repeats} times", (), None
        )
        self._last = None
        self._repeats = 0
        return record
