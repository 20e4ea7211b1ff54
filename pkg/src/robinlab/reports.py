"""Deterministic CSV bodies and JSON run manifests.

CSV bodies are byte-reproducible for identical configs: floats are printed
with %.17g and no timestamps appear outside the manifest.  Every report
directory carries a manifest embedding the config echo and its hash;
mixed-hash aggregation is refused by the verify command.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os

__version__ = "0.1.0"

__all__ = ["config_hash", "write_csv", "write_manifest", "read_manifest", "fmt"]


def fmt(x):
    """Canonical scalar formatting for CSV bodies (17 significant digits)."""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON encoding of the computational config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(x) for x in row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(path, config: dict, extra: dict | None = None):
    record = {
        "tool": "robinlab",
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        record.update(extra)
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return record


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
