"""Canonical JSON serialization and atomic file writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def dumps_canonical(obj) -> str:
    # dict insertion order is the canonical key order; floats use repr (shortest round trip)
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_atomic(path, data: bytes | str) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json(path, obj) -> None:
    write_atomic(path, dumps_canonical(obj))


def read_json(path):
    """Parse a JSON file; syntax errors carry line/column context."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e


class ParseError(ValueError):
    pass
