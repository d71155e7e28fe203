"""Flat binary parameter container with a JSON shape manifest.

Layout: magic ``MDP1`` | u32 version | u64 header length | header JSON |
little-endian float64 payloads. The header maps each name to its byte
offset (relative to the payload start) and shape; a sidecar ``<path>.json``
manifest repeats the shapes for inspection without touching the binary.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"MDP1"
VERSION = 1


def save_params(path: str | Path, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    names = sorted(params)
    header = {"version": VERSION, "entries": {}}
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        header["entries"][name] = {"offset": offset, "shape": list(arr.shape)}
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in payloads:
            fh.write(blob)
    manifest = {
        "format": "moldistill-params",
        "version": VERSION,
        "dtype": "float64",
        "shapes": {n: list(np.asarray(params[n]).shape) for n in names},
    }
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path} is not a parameter container")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != VERSION:
        raise DataError(f"unsupported container version {version}")
    header_len = struct.unpack("<Q", raw[8:16])[0]
    header = json.loads(raw[16:16 + header_len])
    payload = raw[16 + header_len:]
    out = {}
    for name, entry in header["entries"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        out[name] = arr.reshape(shape).astype(np.float64)
    return out
