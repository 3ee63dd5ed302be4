"""Token bucket filters with run-length-encoded suppression counters."""
import logging
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from pydantic import BaseModel

from backend.exceptions import ClockRegressionError
from backend.models import MICROS, to_fraction, to_micros

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE_US = MICROS


class Verdict(Enum):
    PASS = "pass"
    OVERLIMIT = "overlimit"


class SuppressedRun(BaseModel):
    """A flushed run of over-limit alerts."""

    count: int
    first_us: int
    last_us: int


class TokenBucket:
    """
    Token bucket filter.

    Credit is kept as an integer number of units, 1/(q * 10^6) of a token for a
    rate p/q, so refilling over any whole number of microseconds is exact and
    long runs never accumulate rounding error. Buckets start full.
    """

    def __init__(
        self,
        rate: Union[int, float, str, Fraction],
        capacity: int,
        start_us: int = 0,
        tolerance_us: int = DEFAULT_TOLERANCE_US,
        full: bool = True,
    ):
        self.rate = to_fraction(rate)
        if self.rate <= 0:
            raise ValueError("Token rate must be positive")
        if capacity <= 0:
            raise ValueError("Bucket capacity must be positive")
        self.capacity = capacity
        self.tolerance_us = tolerance_us
        self._unit = self.rate.denominator * MICROS
        self._accrual = self.rate.numerator
        self._capacity_units = capacity * self._unit
        self._credit = self._capacity_units if full else 0
        self.last_refill_us = start_us

    @property
    def tokens(self) -> Fraction:
        return Fraction(self._credit, self._unit)

    def refill(self, now_us: int) -> None:
        if now_us < self.last_refill_us - self.tolerance_us:
            raise ClockRegressionError(now_us, self.last_refill_us)
        # Within tolerance an earlier clock neither refills nor moves last_refill back
        if now_us > self.last_refill_us:
            self._credit = min(
                self._capacity_units,
                self._credit + (now_us - self.last_refill_us) * self._accrual,
            )
            self.last_refill_us = now_us

    def try_consume(self, now_us: int) -> Verdict:
        """
        Refill up to `now_us`, then take one whole token if there is one.

        Raises:
            ClockRegressionError: If now_us is before the last refill by more than the tolerance
        """
        self.refill(now_us)
        if self._credit >= self._unit:
            self._credit -= self._unit
            return Verdict.PASS
        return Verdict.OVERLIMIT


class RleCounter:
    """Run count of consecutive over-limit alerts at one filter site."""

    def __init__(self) -> None:
        self.suppressed = 0
        self.first_us: Optional[int] = None
        self.last_us: Optional[int] = None

    def __repr__(self) -> str:
        return f"RleCounter(suppressed={self.suppressed}, first_us={self.first_us}, last_us={self.last_us})"

    def record_overlimit(self, ts_us: int) -> "RleCounter":
        if self.suppressed == 0:
            self.first_us = ts_us
            self.last_us = ts_us
        else:
            # Jitter within tolerance must not make the run end before it started
            self.last_us = max(self.last_us, ts_us)
        self.suppressed += 1
        return self

    def flush(self) -> Optional[SuppressedRun]:
        if self.suppressed == 0:
            return None
        run = SuppressedRun(count=self.suppressed, first_us=self.first_us, last_us=self.last_us)
        self.suppressed = 0
        self.first_us = None
        self.last_us = None
        return run


class FilterSite:
    """One token bucket and its suppression counter, keyed by a site id."""

    def __init__(self, site_id: str, rate: Union[int, float, str, Fraction], capacity: int, tolerance: float = 1.0):
        self.site_id = site_id
        self.bucket = TokenBucket(rate, capacity, tolerance_us=to_micros(tolerance))
        self.counter = RleCounter()
        self.passed = 0

    def __repr__(self) -> str:
        return f"FilterSite({self.site_id!r}, tokens={self.bucket.tokens}, {self.counter!r})"

    def offer(self, ts_us: int) -> Verdict:
        verdict = self.bucket.try_consume(ts_us)
        if verdict is Verdict.PASS:
            self.passed += 1
        else:
            self.counter.record_overlimit(ts_us)
        return verdict
