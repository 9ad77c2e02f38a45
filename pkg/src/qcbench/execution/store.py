"""Append-only JSON-lines run store with a checksum per line."""

from __future__ import annotations

import hashlib
import json
import uuid
from pathlib import Path
from typing import Any

STORE_SCHEMA = 1


class StoreError(RuntimeError):
    pass


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _checksum(record_id: str, kind: str, body: Any) -> str:
    return hashlib.sha256(_canonical([record_id, kind, body]).encode()).hexdigest()


def persist_run(path: str | Path, record: Any) -> str:
    """Append ``record`` (a dict or anything with ``to_dict``) and return its id."""
    body = record.to_dict() if hasattr(record, "to_dict") else record
    kind = type(record).__name__
    record_id = uuid.uuid4().hex
    line = {
        "schema_version": STORE_SCHEMA,
        "id": record_id,
        "kind": kind,
        "record": body,
        "checksum": _checksum(record_id, kind, body),
    }
    path = Path(path)
    try:
        with path.open("a", encoding="utf-8") as fh:
            fh.write(_canonical(line) + "\n")
    except OSError as exc:
        raise StoreError(f"cannot write run store {path}: {exc}") from exc
    return record_id


def read_runs(path: str | Path) -> list[dict]:
    """All stored entries in append order; raises StoreError on a corrupt line."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                entry = json.loads(raw)
                ok = entry["checksum"] == _checksum(entry["id"], entry["kind"], entry["record"])
            except (ValueError, KeyError, TypeError) as exc:
                raise StoreError(f"line {lineno}: unreadable entry ({exc})") from exc
            if not ok:
                raise StoreError(f"line {lineno}: checksum mismatch")
            out.append(entry)
    return out
