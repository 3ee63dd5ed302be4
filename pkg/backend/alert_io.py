"""Newline-delimited JSON alert streams and all-or-nothing file output."""
import json
import logging
import os
import tempfile
from contextlib import suppress
from decimal import Decimal
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, Optional, TextIO, Union

from pydantic import ValidationError

from backend.exceptions import AlertParseError
from backend.models import Alert

logger = logging.getLogger(__name__)


def parse_alerts(lines: Iterable[str], first_id: int = 1) -> Iterator[Alert]:
    """
    Parse NDJSON alert records, one per line.

    Records look like {"ts": 1.5, "sig": "...", "src": "...", "dst": "...", "attrs": {...}}.
    Blank lines are skipped. Records without an "id" are numbered sequentially;
    explicit ids must be strictly increasing.

    Raises:
        AlertParseError: With the 1-based line number of the bad record
    """
    next_id = first_id
    last_id: Optional[int] = None
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            # Decimal keeps "40.999863" exact down to the microsecond
            record = json.loads(line, parse_float=Decimal)
        except json.JSONDecodeError as e:
            raise AlertParseError(line_no, f"invalid JSON: {e.msg}") from e
        if not isinstance(record, dict):
            raise AlertParseError(line_no, "expected a JSON object")
        record.setdefault("id", next_id)
        try:
            alert = Alert.model_validate(record)
        except ValidationError as e:
            errors = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'record'}: {err['msg']}" for err in e.errors())
            raise AlertParseError(line_no, errors) from e
        if last_id is not None and alert.id <= last_id:
            raise AlertParseError(line_no, f"alert id {alert.id} is not greater than the previous id {last_id}")
        last_id = alert.id
        next_id = alert.id + 1
        yield alert


def _decoded(handle: BinaryIO) -> Iterator[str]:
    for line_no, raw in enumerate(handle, start=1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise AlertParseError(line_no, f"not valid UTF-8: {e.reason}") from e


def read_alerts(path: Union[str, Path]) -> Iterator[Alert]:
    with open(path, "rb") as handle:
        yield from parse_alerts(_decoded(handle))


def write_alerts(alerts: Iterable[Alert], stream: TextIO) -> int:
    count = 0
    for alert in alerts:
        stream.write(alert.model_dump_json())
        stream.write("\n")
        count += 1
    return count


class StagedFiles:
    """
    Output files that appear together or not at all.

    Each staged file is written to a temporary sibling; commit() renames them
    into place, discard() removes them.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self._staged: Dict[Path, Path] = {}
        self._handles: Dict[Path, TextIO] = {}

    def stage(self, name: str) -> TextIO:
        target = self.directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        handle = os.fdopen(fd, "w", encoding="utf-8", newline="\n")
        self._staged[target] = Path(temp_path)
        self._handles[target] = handle
        return handle

    def write_text(self, name: str, text: str) -> None:
        self.stage(name).write(text)

    def commit(self) -> None:
        for handle in self._handles.values():
            handle.close()
        for target, temp_path in self._staged.items():
            os.replace(temp_path, target)
            logger.debug(f"Wrote {target}")
        self._staged.clear()
        self._handles.clear()

    def discard(self) -> None:
        for handle in self._handles.values():
            with suppress(OSError):
                handle.close()
        for temp_path in self._staged.values():
            with suppress(FileNotFoundError):
                temp_path.unlink()
        self._staged.clear()
        self._handles.clear()

    def __enter__(self) -> "StagedFiles":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.commit()
        else:
            self.discard()
