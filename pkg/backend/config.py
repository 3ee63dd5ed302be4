"""Environment-driven defaults for the engine and the CLI."""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

ENV_FILE = "floodguard.env"

# Load environment variables from floodguard.env (cwd first, then project root)
loaded = load_dotenv(ENV_FILE)
if not loaded:
    load_dotenv(Path(__file__).resolve().parents[1] / ENV_FILE)


def _get_float(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be a number, got {value!r}")


def _get_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be an integer, got {value!r}")


def _get_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def engine_defaults() -> Dict[str, Any]:
    """Read FLOODGUARD_* settings; anything unset falls back to the documented defaults."""
    return {
        "vertex_rate": _get_float("FLOODGUARD_VERTEX_RATE", 2.0),
        "vertex_burst": _get_int("FLOODGUARD_VERTEX_BURST", 20),
        "sig_rate": _get_float("FLOODGUARD_SIG_RATE", 2.0),
        "sig_burst": _get_int("FLOODGUARD_SIG_BURST", 20),
        "hypothesize": _get_bool("FLOODGUARD_HYPOTHESIZE", True),
        "drop_unmapped": _get_bool("FLOODGUARD_DROP_UNMAPPED", False),
        "tolerance": _get_float("FLOODGUARD_TOLERANCE", 1.0),
        "signature_cache_size": _get_int("FLOODGUARD_SIGNATURE_CACHE", 65536),
    }


def log_level(override: Optional[str] = None) -> int:
    name = (override or os.getenv("FLOODGUARD_LOG_LEVEL") or "INFO").upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        logger.warning(f"Unknown log level {name!r}, using INFO")
        return logging.INFO
    return level
