"""
Deterministic synthetic workloads: alert floods and attack-scenario injection.

Randomized source addresses come from numpy's PCG64 bit generator (PCG-XSL-RR
128/64, multiplier 0x2360ed051fc65da44385df649fccf645) seeded with the flood's
64-bit seed, drawn in fixed blocks of SOURCE_BLOCK, so a flood spec always yields
the same stream on every platform.
"""
import heapq
import json
import logging
from ipaddress import IPv4Address
from itertools import repeat
from pathlib import Path
from typing import Iterable, Iterator, Union

import numpy as np
from pydantic import ValidationError

from backend.exceptions import CapExceededError, SpecError, UnsortedInputError
from backend.models import MICROS, Alert, FloodSpec, GenSpec, ScenarioSpec

logger = logging.getLogger(__name__)

DEFAULT_CAP = 10_000_000
SOURCE_LOW = int(IPv4Address("1.0.0.0"))
SOURCE_HIGH = int(IPv4Address("223.255.255.255"))
SOURCE_BLOCK = 4096
GROUND_TRUTH = "ground_truth"


def _random_sources(seed: int, exclude: int) -> Iterator[str]:
    rng = np.random.Generator(np.random.PCG64(seed))
    while True:
        block = rng.integers(SOURCE_LOW, SOURCE_HIGH, size=SOURCE_BLOCK, dtype=np.int64, endpoint=True)
        for value in block.tolist():
            if value != exclude:
                yield str(IPv4Address(value))


def flood_ts_us(index: int, spec: FloodSpec) -> int:
    """Timestamp of the index-th flood alert, index / rate seconds, rounded to the microsecond."""
    p, q = spec.rate.numerator, spec.rate.denominator
    return (2 * index * q * MICROS + p) // (2 * p)


def gen_flood(spec: FloodSpec, cap: int = DEFAULT_CAP, first_id: int = 1) -> Iterator[Alert]:
    """
    Generate a constant-rate alert flood.

    Emits floor(rate x duration) alerts spaced 1/rate apart from t=0, all with
    the flood's signature and destination.

    Args:
        spec: Flood parameters
        cap: Upper bound on rate x duration
        first_id: Id of the first alert

    Returns:
        Iterator over the flood's alerts

    Raises:
        CapExceededError: If rate x duration exceeds cap
    """
    if spec.rate * spec.duration > cap:
        raise CapExceededError(
            f"Flood '{spec.signature}' would emit {float(spec.rate * spec.duration):.0f} alerts, cap is {cap}"
        )
    logger.info(f"Generating {spec.count} '{spec.signature}' alerts at {float(spec.rate):.3f}/s")
    return _flood(spec, first_id)


def _flood(spec: FloodSpec, first_id: int) -> Iterator[Alert]:
    if spec.randomize_src:
        sources = _random_sources(spec.seed, int(IPv4Address(spec.dst)))
    else:
        sources = repeat(spec.src)
    for index, src in zip(range(spec.count), sources):
        # Fields are already validated by FloodSpec
        yield Alert.model_construct(
            id=first_id + index,
            signature=spec.signature,
            src=src,
            dst=spec.dst,
            ts_us=flood_ts_us(index, spec),
            attrs={},
        )


def _checked(alerts: Iterable[Alert], name: str) -> Iterator[Alert]:
    last = None
    for alert in alerts:
        if last is not None and alert.ts_us < last:
            raise UnsortedInputError(f"{name} stream is not sorted by ts at alert {alert.id}")
        last = alert.ts_us
        yield alert


def renumber(alerts: Iterable[Alert], first_id: int = 1) -> Iterator[Alert]:
    for new_id, alert in enumerate(alerts, start=first_id):
        yield alert.model_copy(update={"id": new_id})


def scenario_alerts(scenario: ScenarioSpec) -> Iterator[Alert]:
    for index, step in enumerate(scenario.steps, start=1):
        yield Alert(
            id=index,
            signature=step.signature,
            src=step.src,
            dst=step.dst,
            ts_us=step.ts_us,
            attrs={GROUND_TRUTH: "true"},
        )


def inject_scenario(flood: Iterable[Alert], scenario: ScenarioSpec) -> Iterator[Alert]:
    """
    Merge scenario alerts into a time-ordered stream.

    The merge is stable and scenario alerts win ties; ids are reassigned from 1
    and scenario alerts carry attrs ground_truth=true.

    Raises:
        UnsortedInputError: If either input is out of ts order (raised lazily)
    """
    merged = heapq.merge(
        _checked(scenario_alerts(scenario), "scenario"),
        _checked(flood, "flood"),
        key=lambda alert: alert.ts_us,
    )
    return renumber(merged)


def merge_floods(spec: GenSpec) -> Iterator[Alert]:
    floods = [gen_flood(flood, cap=spec.cap) for flood in spec.floods]
    return heapq.merge(*floods, key=lambda alert: alert.ts_us)


def generate(spec: GenSpec) -> Iterator[Alert]:
    """Build the full corpus a generator spec describes: merged floods plus the optional scenario."""
    stream = merge_floods(spec)
    if spec.scenario is not None:
        return inject_scenario(stream, spec.scenario)
    return renumber(stream)


def load_gen_spec(text: Union[str, bytes]) -> GenSpec:
    try:
        raw = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SpecError(f"Malformed spec document: {e}") from e
    try:
        return GenSpec.model_validate(raw)
    except ValidationError as e:
        raise SpecError(f"Invalid spec document: {e}") from e


def load_gen_spec_file(path: Union[str, Path]) -> GenSpec:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise SpecError(f"Spec document is not valid UTF-8: {e.reason} at byte {e.start}") from e
    return load_gen_spec(text)
