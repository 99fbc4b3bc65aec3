"""Versioned structured-text (JSON) persistence for trained models.

Weights are stored as flat row-major float lists; Python's float repr makes
the round trip bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import DataError

FORMAT_VERSION = 1


def save_model(path, kind: str, payload: dict) -> None:
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "model": payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path, expected_kind: str | None = None) -> tuple[str, dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    doc = json.loads(path.read_text())
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format version {version!r}")
    kind = doc.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise DataError(f"{path}: expected a {expected_kind!r} model, "
                        f"found {kind!r}")
    return kind, doc["model"]
