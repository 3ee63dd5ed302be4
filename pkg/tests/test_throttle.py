"""Tests for token buckets, suppression counters and filter sites."""
import random
from fractions import Fraction

import pytest

from backend.exceptions import ClockRegressionError
from backend.throttle import FilterSite, RleCounter, TokenBucket, Verdict


def test_burst_exhausts_capacity():
    bucket = TokenBucket(2, 20)
    verdicts = [bucket.try_consume(0) for _ in range(21)]
    assert verdicts[:20] == [Verdict.PASS] * 20
    assert verdicts[20] is Verdict.OVERLIMIT
    assert bucket.tokens == 0


def test_refill_after_empty():
    bucket = TokenBucket(2, 20, full=False)
    assert bucket.try_consume(0) is Verdict.OVERLIMIT
    assert bucket.try_consume(500_000) is Verdict.PASS
    assert bucket.try_consume(500_000) is Verdict.OVERLIMIT


def test_credit_accumulates_across_calls():
    bucket = TokenBucket(2, 20, full=False)
    for ts_us in (100_000, 200_000, 300_000, 400_000):
        assert bucket.try_consume(ts_us) is Verdict.OVERLIMIT
    assert bucket.tokens == Fraction(4, 5)
    assert bucket.try_consume(500_000) is Verdict.PASS


def test_refill_caps_at_capacity():
    bucket = TokenBucket(2, 5)
    bucket.refill(3_600_000_000)
    assert bucket.tokens == 5


def test_fractional_rate_is_exact():
    bucket = TokenBucket("1/3", 1, full=False)
    assert bucket.try_consume(2_999_999) is Verdict.OVERLIMIT
    assert bucket.try_consume(3_000_000) is Verdict.PASS


@pytest.mark.parametrize("rate, capacity", [(0, 20), (-1, 20), (2, 0)])
def test_bad_parameters(rate, capacity):
    with pytest.raises(ValueError):
        TokenBucket(rate, capacity)


def test_dense_calls_over_41_seconds():
    bucket = TokenBucket(2, 20)
    calls = 300_000
    span_us = 41_000_000
    last = calls - 1
    passed = 0
    for i in range(calls):
        ts_us = (2 * i * span_us + last) // (2 * last)
        if bucket.try_consume(ts_us) is Verdict.PASS:
            passed += 1
    assert passed == 102
    assert calls - passed == 299_898


@pytest.mark.parametrize("seed", range(20))
def test_passes_bounded_by_burst_plus_rate(seed):
    rng = random.Random(seed)
    rate = rng.choice([Fraction(1, 2), Fraction(2), Fraction(7, 3), Fraction(10)])
    capacity = rng.randint(1, 30)
    bucket = TokenBucket(rate, capacity)
    now = 0
    times = []
    for _ in range(2000):
        now += rng.randint(0, 50_000)
        if bucket.try_consume(now) is Verdict.PASS:
            times.append(now)
    span = Fraction(now, 1_000_000)
    assert len(times) <= capacity + rate * span
    # any window holds at most burst + rate * width passes
    for start in range(0, len(times), 50):
        window = [t for t in times if times[start] <= t <= times[start] + 1_000_000]
        assert len(window) <= capacity + rate


def test_clock_tolerance():
    bucket = TokenBucket(2, 20, tolerance_us=1_000_000)
    bucket.try_consume(5_000_000)
    bucket.try_consume(4_200_000)
    assert bucket.last_refill_us == 5_000_000
    with pytest.raises(ClockRegressionError):
        bucket.try_consume(3_999_999)


def test_earlier_clock_does_not_refill():
    bucket = TokenBucket(2, 20, full=False)
    bucket.refill(10_000_000)
    assert bucket.tokens == 20
    for _ in range(20):
        bucket.try_consume(10_000_000)
    assert bucket.try_consume(9_500_000) is Verdict.OVERLIMIT
    assert bucket.tokens == 0


def test_rle_counter_runs():
    counter = RleCounter()
    assert counter.flush() is None
    counter.record_overlimit(1_000_000).record_overlimit(1_500_000).record_overlimit(1_200_000)
    assert counter.suppressed == 3
    run = counter.flush()
    assert (run.count, run.first_us, run.last_us) == (3, 1_000_000, 1_500_000)
    assert counter.suppressed == 0
    assert counter.first_us is None
    assert counter.flush() is None


@pytest.mark.parametrize("seed", range(10))
def test_filter_site_conserves_alerts(seed):
    rng = random.Random(seed)
    site = FilterSite("vertex:e1", rate=2, capacity=20)
    suppressed = 0
    now = 0
    offered = rng.randint(1, 5000)
    for _ in range(offered):
        now += rng.randint(0, 20_000)
        if site.offer(now) is Verdict.OVERLIMIT and rng.random() < 0.01:
            suppressed += site.counter.flush().count
    run = site.counter.flush()
    suppressed += run.count if run else 0
    assert site.passed + suppressed == offered
