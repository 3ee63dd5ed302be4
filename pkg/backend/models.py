from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from ipaddress import AddressValueError, IPv4Address
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_validator,
    model_serializer,
    model_validator,
)

from backend import config

MICROS = 1_000_000
WILDCARD = "*"


def to_micros(value: Any) -> int:
    """
    Convert a timestamp in seconds to integer microseconds.

    Floats are read through their shortest decimal representation so that a
    value such as 40.999863 maps to exactly 40999863 microseconds.

    Args:
        value: Seconds as int, float, Decimal or numeric string

    Returns:
        int: Microseconds, rounded half-even

    Raises:
        ValueError: If the value is not a finite non-negative number
    """
    if isinstance(value, bool):
        raise ValueError("timestamp must be a number")
    try:
        if isinstance(value, float):
            seconds = Decimal(repr(value))
        elif isinstance(value, Fraction):
            seconds = Decimal(value.numerator) / Decimal(value.denominator)
        else:
            seconds = Decimal(str(value))
    except InvalidOperation as e:
        raise ValueError(f"invalid timestamp: {value!r}") from e
    if not seconds.is_finite() or seconds < 0:
        raise ValueError(f"timestamp must be finite and non-negative: {value!r}")
    return int((seconds * MICROS).to_integral_value(rounding=ROUND_HALF_EVEN))


def to_seconds(ts_us: int) -> float:
    return ts_us / MICROS


def to_fraction(value: Any) -> Fraction:
    """Read an exact rational from an int, a decimal string, "p/q" or a float."""
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, Fraction):
        return value
    try:
        if isinstance(value, float):
            return Fraction(repr(value))
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"invalid number: {value!r}") from e


def validate_ipv4(value: str) -> str:
    try:
        return str(IPv4Address(value))
    except AddressValueError as e:
        raise ValueError(f"not an IPv4 address: {value!r}") from e


def validate_host_pattern(value: str) -> str:
    if value == WILDCARD:
        return value
    return validate_ipv4(value)


# Alerts


class Alert(BaseModel):
    """One structured IDS detection event."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0)
    signature: str = Field(..., min_length=1)
    src: str
    dst: str
    ts_us: int = Field(..., ge=0, description="Timestamp in microseconds")
    attrs: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _from_record(cls, data: Any) -> Any:
        # Wire records use "sig" and "ts" (seconds)
        if isinstance(data, dict) and ("ts" in data or "sig" in data):
            data = dict(data)
            if "ts" in data:
                data["ts_us"] = to_micros(data.pop("ts"))
            if "sig" in data:
                data["signature"] = data.pop("sig")
        return data

    @field_validator("src", "dst")
    @classmethod
    def _check_address(cls, value: str) -> str:
        return validate_ipv4(value)

    @field_validator("attrs", mode="before")
    @classmethod
    def _stringify_attrs(cls, value: Any) -> Any:
        if value is None:
            return {}
        if isinstance(value, dict):
            return {str(k): v if isinstance(v, str) else str(v) for k, v in value.items()}
        return value

    @property
    def ts(self) -> float:
        return to_seconds(self.ts_us)

    @model_serializer
    def _to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "ts": self.ts,
            "sig": self.signature,
            "src": self.src,
            "dst": self.dst,
            "attrs": self.attrs,
        }


# Attack graph document


class ExploitVertex(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    vuln: str = Field(..., min_length=1)
    src: str = WILDCARD
    dst: str = WILDCARD

    @field_validator("src", "dst")
    @classmethod
    def _check_pattern(cls, value: str) -> str:
        return validate_host_pattern(value)

    @property
    def specificity(self) -> int:
        """Number of exact (non-wildcard) host fields."""
        return (self.src != WILDCARD) + (self.dst != WILDCARD)


class ConditionVertex(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    predicate: str = Field(..., min_length=1)
    host: str = WILDCARD
    initial: bool = False

    @field_validator("host")
    @classmethod
    def _check_pattern(cls, value: str) -> str:
        return validate_host_pattern(value)


class MappingRule(BaseModel):
    """One entry of the alert-to-exploit mapping function."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    signature: str = Field(..., min_length=1)
    exploit_id: str = Field(..., min_length=1, alias="exploit")


class AttackGraphDocument(BaseModel):
    """Serialized attack graph, as read from and rendered to JSON."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    exploits: Tuple[ExploitVertex, ...] = ()
    conditions: Tuple[ConditionVertex, ...] = ()
    edges: Tuple[Tuple[str, str], ...] = ()
    mapping: Tuple[MappingRule, ...] = ()

    def normalized(self) -> "AttackGraphDocument":
        """Return a copy with every collection sorted, for order-insensitive comparison."""
        return AttackGraphDocument(
            exploits=tuple(sorted(self.exploits, key=lambda v: v.id)),
            conditions=tuple(sorted(self.conditions, key=lambda v: v.id)),
            edges=tuple(sorted(set(self.edges))),
            mapping=tuple(sorted(set(self.mapping), key=lambda r: (r.signature, r.exploit_id))),
        )


# Correlation graph


class NodeKind(str, Enum):
    ALERT = "alert"
    HYPOTHESIZED = "hypothesized"
    CONDITION = "condition"


class CorrelationNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    kind: NodeKind
    vertex_id: str = Field(..., description="Exploit vertex id, or condition id for condition nodes")
    alert_id: Optional[int] = None
    signature: Optional[str] = None
    ts: Optional[float] = None


class CorrelationEdge(BaseModel):
    """Directed "prepares for" relation between two correlation nodes."""

    model_config = ConfigDict(frozen=True)

    source: str
    target: str


class CorrelationGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    nodes: Tuple[CorrelationNode, ...] = ()
    edges: Tuple[CorrelationEdge, ...] = ()

    def nodes_of_kind(self, kind: NodeKind) -> List[CorrelationNode]:
        return [n for n in self.nodes if n.kind == kind]

    def node_for_alert(self, alert_id: int) -> Optional[CorrelationNode]:
        return next((n for n in self.nodes if n.alert_id == alert_id), None)

    def edge_pairs(self) -> set:
        return {(e.source, e.target) for e in self.edges}


# Output events


class PassedAlert(BaseModel):
    type: Literal["passed"] = "passed"
    ts: float
    site: str
    vertex_id: Optional[str] = None
    alert: Alert


class SuppressionSummary(BaseModel):
    """A closed run of over-limit alerts ("last message repeated N times")."""

    type: Literal["suppressed"] = "suppressed"
    ts: float
    filter: str
    count: int = Field(..., gt=0)
    first_ts: float
    last_ts: float


class CorrelationDelta(BaseModel):
    type: Literal["correlation"] = "correlation"
    ts: float
    nodes: List[CorrelationNode] = Field(default_factory=list)
    edges: List[CorrelationEdge] = Field(default_factory=list)
    satisfied: List[str] = Field(default_factory=list, description="Conditions newly satisfied")


class ErrorEvent(BaseModel):
    type: Literal["error"] = "error"
    ts: float
    kind: str
    detail: str
    alert_id: Optional[int] = None


OutputEvent = Annotated[
    Union[PassedAlert, SuppressionSummary, CorrelationDelta, ErrorEvent],
    Field(discriminator="type"),
]


# Engine configuration and statistics


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    vertex_rate: float = Field(2.0, gt=0, description="Tokens per second for exploit-vertex filters")
    vertex_burst: int = Field(20, gt=0, description="Bucket size for exploit-vertex filters")
    sig_rate: float = Field(2.0, gt=0, description="Tokens per second for per-signature filters")
    sig_burst: int = Field(20, gt=0, description="Bucket size for per-signature filters")
    hypothesize: bool = True
    drop_unmapped: bool = False
    throttle: bool = Field(True, description="False gives the unthrottled control run")
    record_conditions: bool = False
    tolerance: float = Field(1.0, ge=0, description="Allowed clock jitter in seconds")
    signature_cache_size: int = Field(65536, gt=0)

    @classmethod
    def from_env(cls, **overrides: Any) -> "EngineConfig":
        """Build a config from FLOODGUARD_* environment variables, then apply overrides."""
        values = config.engine_defaults()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class EngineStats(BaseModel):
    total_in: int = 0
    mapped: int = 0
    unmapped: int = 0
    passed_vertex: int = 0
    passed_signature: int = 0
    suppressed_vertex: int = 0
    suppressed_signature: int = 0
    dropped: int = 0
    rejected: int = 0
    hypothesized: int = 0
    bytes_out: int = 0

    @computed_field
    @property
    def passed_total(self) -> int:
        return self.passed_vertex + self.passed_signature

    @computed_field
    @property
    def suppressed_total(self) -> int:
        return self.suppressed_vertex + self.suppressed_signature

    @computed_field
    @property
    def reduction_ratio(self) -> float:
        if self.total_in == 0:
            return 0.0
        return 1 - self.passed_total / self.total_in


# Workload generation


class FloodSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    signature: str = Field(..., min_length=1)
    rate: Fraction = Field(..., description="Alerts per second")
    duration: Fraction = Field(..., description="Seconds")
    dst: str
    src: str = Field("10.0.0.1", description="Source used when randomize_src is false")
    randomize_src: bool = True
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("rate", "duration", mode="before")
    @classmethod
    def _exact(cls, value: Any) -> Fraction:
        return to_fraction(value)

    @field_validator("rate")
    @classmethod
    def _positive_rate(cls, value: Fraction) -> Fraction:
        if value <= 0:
            raise ValueError("rate must be positive")
        return value

    @field_validator("duration")
    @classmethod
    def _non_negative_duration(cls, value: Fraction) -> Fraction:
        if value < 0:
            raise ValueError("duration must be non-negative")
        return value

    @field_validator("src", "dst")
    @classmethod
    def _check_address(cls, value: str) -> str:
        return validate_ipv4(value)

    @property
    def count(self) -> int:
        """Number of alerts the flood emits: floor(rate x duration)."""
        return int(self.rate * self.duration)


class ScenarioStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    signature: str = Field(..., min_length=1)
    src: str
    dst: str
    ts_us: int = Field(..., ge=0)

    @model_validator(mode="before")
    @classmethod
    def _from_record(cls, data: Any) -> Any:
        if isinstance(data, dict) and "ts" in data:
            data = dict(data)
            data["ts_us"] = to_micros(data.pop("ts"))
        return data

    @field_validator("src", "dst")
    @classmethod
    def _check_address(cls, value: str) -> str:
        return validate_ipv4(value)


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    steps: Tuple[ScenarioStep, ...] = ()

    @field_validator("steps")
    @classmethod
    def _strictly_increasing(cls, steps: Tuple[ScenarioStep, ...]) -> Tuple[ScenarioStep, ...]:
        for before, after in zip(steps, steps[1:]):
            if after.ts_us <= before.ts_us:
                raise ValueError("scenario step timestamps must be strictly increasing")
        return steps


class GenSpec(BaseModel):
    """Generator spec document accepted by `gen`."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    floods: Tuple[FloodSpec, ...] = ()
    scenario: Optional[ScenarioSpec] = None
    cap: int = Field(10_000_000, gt=0, description="Hard cap on rate x duration per flood")
