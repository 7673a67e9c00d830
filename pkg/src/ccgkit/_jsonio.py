"""Canonical JSON serialization helpers shared by every artifact writer.

All artifacts are written with sorted keys and a fixed separator convention so
that a rerun with the same configuration and seed produces identical bytes.
Writes go through a temporary file in the target directory followed by an
atomic rename, so a crash never leaves a partial artifact behind.
"""

import json
import os
import tempfile
from pathlib import Path


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False)


def dump_json(path: str | Path, obj) -> None:
    """Write ``obj`` as canonical JSON via write-then-rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(canonical_dumps(obj))
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_jsonl(path: str | Path, records) -> None:
    """Write an iterable of records as one JSON object per line, atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_jsonl(path: str | Path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def check_schema_version(doc: dict, expected: int, what: str) -> None:
    got = doc.get("schema_version")
    if got != expected:
        raise SchemaError(
            f"{what}: schema_version {got!r} not supported (expected {expected})"
        )


class SchemaError(ValueError):
    """Raised when an on-disk artifact does not match the expected schema."""
