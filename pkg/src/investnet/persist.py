"""Versioned JSON persistence for trained models."""

from __future__ import annotations

import json
from pathlib import Path

FORMAT_VERSION = 1


def dump_model(kind: str, payload: dict, path) -> None:
    doc = {"format": f"investnet.{kind}", "version": FORMAT_VERSION, **payload}
    # repr-based float encoding in json round-trips float64 exactly
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_model(kind: str, path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    fmt = doc.get("format")
    if fmt != f"investnet.{kind}":
        raise ValueError(f"{path}: expected format investnet.{kind}, found {fmt!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')!r}")
    return doc
