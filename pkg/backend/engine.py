"""Alert pipeline: map -> throttle -> correlate -> emit."""
import logging
import time
from typing import Callable, Iterable, List, NamedTuple, Optional, TextIO

from cachetools import LRUCache

from backend.attack_graph import AttackGraph, map_alert
from backend.exceptions import ClockRegressionError, DuplicateAlertError, TimeRegressionError
from backend.models import (
    MICROS,
    Alert,
    CorrelationDelta,
    CorrelationGraph,
    EngineConfig,
    EngineStats,
    ErrorEvent,
    NodeKind,
    OutputEvent,
    PassedAlert,
    SuppressionSummary,
    to_seconds,
)
from backend.queue_graph import QueueGraph, build
from backend.throttle import FilterSite, Verdict

logger = logging.getLogger(__name__)


def vertex_site_id(vertex_id: str) -> str:
    return f"vertex:{vertex_id}"


def signature_site_id(signature: str) -> str:
    return f"sig:{signature}"


class EventLog:
    """
    NDJSON event log.

    Every event is serialized once; its size feeds bytes_out. Events are kept
    in memory unless `retain` is False, and written to `stream` when given.
    """

    def __init__(self, stream: Optional[TextIO] = None, retain: bool = True):
        self.stream = stream
        self.retain = retain
        self.events: List[OutputEvent] = []
        self.bytes_out = 0

    def append(self, event: OutputEvent) -> None:
        line = event.model_dump_json()
        self.bytes_out += len(line.encode("utf-8")) + 1
        if self.stream is not None:
            self.stream.write(line)
            self.stream.write("\n")
        if self.retain:
            self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)


class SignatureFilters(LRUCache):
    """Per-signature filter sites, least recently used evicted past maxsize."""

    def __init__(self, maxsize: int, on_evict: Callable[[FilterSite], None]):
        super().__init__(maxsize)
        self._on_evict = on_evict

    def popitem(self):
        key, site = super().popitem()
        self._on_evict(site)
        return key, site


class RunResult(NamedTuple):
    stats: EngineStats
    graph: CorrelationGraph
    events: List[OutputEvent]
    elapsed_seconds: float


class CorrelationEngine:
    """
    Flood-resistant correlation engine for one alert stream.

    Mapped alerts go through the token bucket of their exploit vertex before
    reaching the queue graph; unmapped alerts go through a per-signature
    bucket (or are dropped). Over-limit alerts are only counted, and each run
    of them is reported once, just before the next alert that passes the same
    filter or at end of stream.
    """

    def __init__(self, graph: AttackGraph, config: Optional[EngineConfig] = None, log: Optional[EventLog] = None):
        self.graph = graph
        self.config = config or EngineConfig()
        self.queue_graph: QueueGraph = build(
            graph, tolerance=self.config.tolerance, record_conditions=self.config.record_conditions
        )
        self.log = log if log is not None else EventLog()
        self.stats = EngineStats()
        self.tolerance_us = int(round(self.config.tolerance * MICROS))
        self.vertex_sites = {}
        for vertex_id in sorted(graph.exploits):
            site = FilterSite(
                vertex_site_id(vertex_id),
                self.config.vertex_rate,
                self.config.vertex_burst,
                tolerance=self.config.tolerance,
            )
            self.vertex_sites[vertex_id] = site
            self.queue_graph.slot(vertex_id).rle = site.counter
        self.signature_sites = SignatureFilters(self.config.signature_cache_size, self._evicted)
        self._clock_us: Optional[int] = None
        self._last_id: Optional[int] = None
        self._pending: List[OutputEvent] = []
        self._finished = False

    @property
    def clock(self) -> float:
        return to_seconds(self._clock_us or 0)

    def _evicted(self, site: FilterSite) -> None:
        logger.debug(f"Evicting filter {site.site_id}")
        self._flush_site(site, self._pending)

    def _flush_site(self, site: FilterSite, events: List[OutputEvent]) -> None:
        run = site.counter.flush()
        if run is None:
            return
        events.append(
            SuppressionSummary(
                ts=self.clock,
                filter=site.site_id,
                count=run.count,
                first_ts=to_seconds(run.first_us),
                last_ts=to_seconds(run.last_us),
            )
        )
        logger.debug(f"{site.site_id}: last alert repeated {run.count} times")

    def _signature_site(self, signature: str) -> FilterSite:
        site = self.signature_sites.get(signature)
        if site is None:
            site = FilterSite(
                signature_site_id(signature),
                self.config.sig_rate,
                self.config.sig_burst,
                tolerance=self.config.tolerance,
            )
            self.signature_sites[signature] = site
        return site

    def _check_id(self, alert_id: int) -> None:
        last_id = self._last_id
        self._last_id = alert_id if last_id is None else max(last_id, alert_id)
        if last_id is not None and alert_id <= last_id:
            raise DuplicateAlertError(alert_id, last_id)

    def _check_time(self, ts_us: int) -> None:
        if self._clock_us is not None and ts_us < self._clock_us - self.tolerance_us:
            raise TimeRegressionError(ts_us, self._clock_us)

    def _offer(self, site: FilterSite, ts_us: int) -> Verdict:
        if not self.config.throttle:
            site.passed += 1
            return Verdict.PASS
        return site.offer(ts_us)

    def _emit(self, events: List[OutputEvent]) -> List[OutputEvent]:
        if self._pending:
            events[:0] = self._pending
            self._pending = []
        for event in events:
            self.log.append(event)
        self.stats.bytes_out = self.log.bytes_out
        return events

    def process_alert(self, alert: Alert) -> List[OutputEvent]:
        """
        Run one alert through the pipeline.

        Args:
            alert: Next alert of the stream

        Returns:
            List of output events, in emission order
        """
        self.stats.total_in += 1
        events: List[OutputEvent] = []
        try:
            self._check_id(alert.id)
            self._check_time(alert.ts_us)
            vertex_id = map_alert(self.graph, alert)
            site = None
            verdict = None
            if vertex_id is not None:
                site = self.vertex_sites[vertex_id]
            elif not self.config.drop_unmapped:
                site = self._signature_site(alert.signature)
            if site is not None:
                verdict = self._offer(site, alert.ts_us)
        except (DuplicateAlertError, TimeRegressionError, ClockRegressionError) as e:
            self.stats.rejected += 1
            # Per-alert detail travels in extra; the message text is fixed per kind
            logger.warning(f"Rejected alert: {e.kind}", extra={"alert_id": alert.id, "detail": str(e)})
            events.append(ErrorEvent(ts=self.clock, kind=e.kind, detail=str(e), alert_id=alert.id))
            return self._emit(events)

        if self._clock_us is None or alert.ts_us > self._clock_us:
            self._clock_us = alert.ts_us

        if vertex_id is None:
            self.stats.unmapped += 1
            if site is None:
                self.stats.dropped += 1
            elif verdict is Verdict.PASS:
                self.stats.passed_signature += 1
                self._flush_site(site, events)
                events.append(PassedAlert(ts=self.clock, site=site.site_id, alert=alert))
            else:
                self.stats.suppressed_signature += 1
            return self._emit(events)

        self.stats.mapped += 1
        if verdict is not Verdict.PASS:
            self.stats.suppressed_vertex += 1
            return self._emit(events)

        self.stats.passed_vertex += 1
        self._flush_site(site, events)
        correlation = self.queue_graph.enqueue(vertex_id, alert, hypothesize=self.config.hypothesize)
        self.stats.hypothesized += sum(1 for n in correlation.nodes if n.kind == NodeKind.HYPOTHESIZED)
        events.append(PassedAlert(ts=self.clock, site=site.site_id, vertex_id=vertex_id, alert=alert))
        events.append(
            CorrelationDelta(
                ts=self.clock,
                nodes=correlation.nodes,
                edges=correlation.edges,
                satisfied=correlation.satisfied,
            )
        )
        logger.debug(f"Alert {alert.id} passed {site.site_id}: {len(correlation.edges)} new edges")
        return self._emit(events)

    def finish(self) -> List[OutputEvent]:
        """Flush every open suppression run, ordered by site id. Safe to call twice."""
        events: List[OutputEvent] = []
        if self._finished:
            return events
        self._finished = True
        sites = list(self.vertex_sites.values()) + list(self.signature_sites.values())
        for site in sorted(sites, key=lambda s: s.site_id):
            self._flush_site(site, events)
        return self._emit(events)

    def run_stream(self, alerts: Iterable[Alert]) -> RunResult:
        """
        Process a time-ordered alert stream to the end.

        Args:
            alerts: Alerts sorted by ts within the jitter tolerance

        Returns:
            RunResult: Final stats, correlation graph snapshot, event log and
            wall-clock processing time (machine-dependent)
        """
        started = time.perf_counter()
        logger.info(
            f"Starting replay: vertex filters {self.config.vertex_rate}/s burst {self.config.vertex_burst}, "
            f"signature filters {self.config.sig_rate}/s burst {self.config.sig_burst}, "
            f"throttle={'on' if self.config.throttle else 'off'}"
        )
        for alert in alerts:
            self.process_alert(alert)
        self.finish()
        elapsed = time.perf_counter() - started
        stats = self.stats.model_copy()
        logger.info(
            f"Replay finished in {elapsed:.2f}s: {stats.total_in} in, {stats.passed_total} passed, "
            f"{stats.suppressed_total} suppressed, {stats.dropped} dropped, {stats.rejected} rejected "
            f"(reduction {stats.reduction_ratio:.4%})"
        )
        return RunResult(stats, self.queue_graph.snapshot(), self.log.events, elapsed)


def run_stream(
    graph: AttackGraph,
    alerts: Iterable[Alert],
    config: Optional[EngineConfig] = None,
    log: Optional[EventLog] = None,
) -> RunResult:
    return CorrelationEngine(graph, config, log).run_stream(alerts)
