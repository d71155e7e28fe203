"""Run manifests: digests of everything a stage read and wrote.

A stage is up to date when its manifest exists, every recorded input digest
still matches, and every recorded output file is present with its recorded
digest. Manifests carry no timestamps so reruns are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def manifest_path(out_dir: str | Path, stage: str) -> Path:
    return Path(out_dir) / f"{stage}.manifest.json"


def write_manifest(out_dir: str | Path, stage: str, config: dict,
                   seed: int, inputs: list[str | Path],
                   outputs: list[str | Path]) -> Path:
    record = {
        "subcommand": stage,
        "version": __version__,
        "seed": seed,
        "config_digest": sha256_text(json.dumps(config, sort_keys=True, default=str)),
        "inputs": {str(p): sha256_file(p) for p in inputs if Path(p).exists()},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    path = manifest_path(out_dir, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True))
    return path


def stage_up_to_date(out_dir: str | Path, stage: str, config: dict,
                     inputs: list[str | Path]) -> bool:
    path = manifest_path(out_dir, stage)
    if not path.exists():
        return False
    try:
        record = json.loads(path.read_text())
    except json.JSONDecodeError:
        return False
    config_digest = sha256_text(json.dumps(config, sort_keys=True, default=str))
    if record.get("config_digest") != config_digest:
        return False
    current_inputs = {
        str(p): sha256_file(p) for p in inputs if Path(p).exists()
    }
    if record.get("inputs") != current_inputs:
        return False
    for out_path, digest in record.get("outputs", {}).items():
        if not Path(out_path).exists() or sha256_file(out_path) != digest:
            return False
    return True
