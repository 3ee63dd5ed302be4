"""Command-line front end: replay, generate, validate and export."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from backend import config
from backend.alert_io import StagedFiles, read_alerts, write_alerts
from backend.attack_graph import load_graph_file
from backend.engine import CorrelationEngine, EventLog
from backend.exceptions import FloodGuardError, GraphParseError, GraphValidationError
from backend.export import load_correlation, to_dot, to_json
from backend.floodgen import generate, load_gen_spec_file
from backend.log_filter import RepeatedMessageFilter
from backend.models import EngineConfig

logger = logging.getLogger("floodguard")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

EVENTS_FILE = "events.jsonl"
STATS_FILE = "stats.json"
CORRELATION_JSON = "correlation.json"
CORRELATION_DOT = "correlation.dot"
TIMING_FILE = "timing.json"


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else config.log_level()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    for handler in logging.getLogger().handlers:
        if not any(isinstance(f, RepeatedMessageFilter) for f in handler.filters):
            handler.addFilter(RepeatedMessageFilter())


def flush_repeated_messages() -> None:
    for handler in logging.getLogger().handlers:
        for log_filter in handler.filters:
            if isinstance(log_filter, RepeatedMessageFilter):
                record = log_filter.flush()
                if record is not None:
                    handler.handle(record)


def _engine_config(args: argparse.Namespace) -> EngineConfig:
    return EngineConfig.from_env(
        vertex_rate=args.vertex_rate,
        vertex_burst=args.vertex_burst,
        sig_rate=args.sig_rate,
        sig_burst=args.sig_burst,
        hypothesize=False if args.no_hypothesize else None,
        drop_unmapped=True if args.drop_unmapped else None,
        throttle=False if args.no_throttle else None,
        record_conditions=True if args.conditions else None,
    )


def cmd_run(args: argparse.Namespace) -> int:
    try:
        graph = load_graph_file(args.graph)
    except OSError as e:
        logger.error(f"Cannot read attack graph: {e}")
        return EXIT_IO
    except (GraphParseError, GraphValidationError) as e:
        logger.error(f"Invalid attack graph {args.graph}: {e}")
        return EXIT_INVALID

    try:
        engine_config = _engine_config(args)
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid engine configuration: {e}")
        return EXIT_INVALID

    try:
        with StagedFiles(args.out) as staged:
            log = EventLog(staged.stage(EVENTS_FILE), retain=False)
            engine = CorrelationEngine(graph, engine_config, log)
            result = engine.run_stream(read_alerts(args.alerts))
            staged.write_text(STATS_FILE, result.stats.model_dump_json(indent=2) + "\n")
            staged.write_text(CORRELATION_JSON, to_json(result.graph))
            staged.write_text(CORRELATION_DOT, to_dot(result.graph))
            rate = result.stats.total_in / result.elapsed_seconds if result.elapsed_seconds > 0 else 0.0
            timing = {
                "machine_dependent": True,
                "elapsed_seconds": round(result.elapsed_seconds, 6),
                "alerts_per_second": round(rate, 1),
            }
            staged.write_text(TIMING_FILE, json.dumps(timing, indent=2) + "\n")
    except FloodGuardError as e:
        logger.error(f"Replay failed: {e}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"I/O error during replay: {e}")
        return EXIT_IO

    stats = result.stats
    print(
        f"{stats.total_in} alerts in, {stats.passed_total} passed, {stats.suppressed_total} suppressed, "
        f"reduction {stats.reduction_ratio:.4%}; output in {args.out}"
    )
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        spec = load_gen_spec_file(args.spec)
    except OSError as e:
        logger.error(f"Cannot read spec: {e}")
        return EXIT_IO
    except FloodGuardError as e:
        logger.error(f"{e}")
        return EXIT_INVALID

    out = Path(args.out)
    try:
        with StagedFiles(out.parent) as staged:
            count = write_alerts(generate(spec), staged.stage(out.name))
    except FloodGuardError as e:
        logger.error(f"Generation failed: {e}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"Cannot write {out}: {e}")
        return EXIT_IO

    print(f"Wrote {count} alerts to {out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        graph = load_graph_file(args.graph)
    except OSError as e:
        print(f"ERROR: cannot read {args.graph}: {e}", file=sys.stderr)
        return EXIT_IO
    except (GraphParseError, GraphValidationError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(
        f"OK: {len(graph.exploits)} exploits, {len(graph.conditions)} conditions, "
        f"{len(graph.document.edges)} edges, {len(graph.mapping)} mapping rules"
    )
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    source = Path(args.run) / CORRELATION_JSON
    try:
        graph = load_correlation(source)
    except OSError as e:
        logger.error(f"Cannot read {source}: {e}")
        return EXIT_IO
    except (ValidationError, UnicodeDecodeError) as e:
        logger.error(f"Invalid correlation graph in {source}: {e}")
        return EXIT_INVALID

    rendered = to_dot(graph) if args.format == "dot" else to_json(graph)
    if args.output is None:
        sys.stdout.write(rendered)
        return EXIT_OK
    output = Path(args.output)
    try:
        with StagedFiles(output.parent) as staged:
            staged.write_text(output.name, rendered)
    except OSError as e:
        logger.error(f"Cannot write {output}: {e}")
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodguard",
        description="Flood-resistant IDS alert correlation over attack graphs",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Replay an alert stream through the engine")
    run.add_argument("--graph", required=True, help="Attack-graph JSON document")
    run.add_argument("--alerts", required=True, help="NDJSON alert stream")
    run.add_argument("--out", required=True, help="Output directory")
    run.add_argument("--vertex-rate", type=float, default=None, help="Tokens/s per exploit-vertex filter (default 2)")
    run.add_argument("--vertex-burst", type=int, default=None, help="Bucket size per exploit-vertex filter (default 20)")
    run.add_argument("--sig-rate", type=float, default=None, help="Tokens/s per signature filter (default 2)")
    run.add_argument("--sig-burst", type=int, default=None, help="Bucket size per signature filter (default 20)")
    run.add_argument("--no-hypothesize", action="store_true", help="Stop at empty queues instead of hypothesizing")
    run.add_argument("--drop-unmapped", action="store_true", help="Discard alerts that map to no exploit vertex")
    run.add_argument("--no-throttle", action="store_true", help="Control run without token bucket filters")
    run.add_argument("--conditions", action="store_true", help="Route correlation edges through condition nodes")
    run.set_defaults(handler=cmd_run)

    gen = subparsers.add_parser("gen", help="Generate a synthetic alert corpus")
    gen.add_argument("--spec", required=True, help="Generator spec JSON document")
    gen.add_argument("--out", required=True, help="NDJSON output file")
    gen.set_defaults(handler=cmd_gen)

    validate = subparsers.add_parser("validate", help="Validate an attack-graph document")
    validate.add_argument("--graph", required=True)
    validate.set_defaults(handler=cmd_validate)

    export = subparsers.add_parser("export", help="Render a run's correlation graph")
    export.add_argument("--run", required=True, help="Output directory of a previous run")
    export.add_argument("--format", choices=["dot", "json"], default="dot")
    export.add_argument("--output", default=None, help="File to write instead of stdout")
    export.set_defaults(handler=cmd_export)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    finally:
        flush_repeated_messages()


if __name__ == "__main__":
    sys.exit(main())
