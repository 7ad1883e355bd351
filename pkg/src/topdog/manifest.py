"""Run manifests: enough provenance to re-run any subcommand exactly."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def config_sha256(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def write_manifest(subcommand: str, inputs: dict[str, str | Path],
                   outputs: dict[str, str | Path], seed: int | None,
                   config: dict | None = None) -> Path:
    """Write ``<primary output>.manifest.json`` covering every output file.

    The created timestamp is the only non-reproducible field; everything
    else (hashes, seed, version) pins the run down exactly.
    """
    primary = Path(next(iter(outputs.values())))
    payload = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "seed": seed,
        "config_sha256": config_sha256(config) if config is not None else None,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": file_sha256(p)}
                   for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "sha256": file_sha256(p)}
                    for name, p in outputs.items()},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = primary.with_name(primary.name + ".manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
