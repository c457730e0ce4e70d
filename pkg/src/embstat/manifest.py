"""Expected locations of the external embeddings and benchmarks.

Nothing is downloaded; the manifest only says where files are looked up
(relative to ``$EMBSTAT_DATA_DIR``) and, when known, their SHA-256.
"""

from __future__ import annotations

import hashlib
import json
import os
from importlib import resources
from pathlib import Path

DATA_DIR_ENV = "EMBSTAT_DATA_DIR"


def load_manifest() -> dict:
    return json.loads(resources.files("embstat").joinpath("manifest.json").read_text("utf-8"))


def data_dir() -> Path | None:
    base = os.environ.get(DATA_DIR_ENV)
    return Path(base) if base else None


def locate(group: str, key: str, manifest: dict | None = None) -> Path | None:
    """Path of a manifest entry under the data directory, or None if absent."""
    base = data_dir()
    if base is None:
        return None
    entry = (manifest or load_manifest())[group][key]
    path = base / entry["path"]
    return path if path.exists() else None


def sha256_of(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(chunk), b""):
            h.update(block)
    return h.hexdigest()


def verify(path, expected: str | None) -> bool:
    """True when no checksum is recorded or the file matches it."""
    return expected is None or sha256_of(path) == expected
