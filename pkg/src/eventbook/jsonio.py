"""Canonical JSON serialization shared by every command output.

One formatting (sorted keys, two-space indent, trailing newline) so that
identical runs produce byte-identical files, which the determinism
contract of the CLI relies on.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any


def dumps_canonical(obj: Any) -> str:
    # allow_nan=False keeps the output strict JSON (no NaN/Infinity literals)
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def dump(obj: Any, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def load(path: str | Path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(obj: Any) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
