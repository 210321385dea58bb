"""Portable array container: a JSON header followed by raw little-endian float64 data.

Layout::

    STRB-ARRAYS 1\\n
    <header length in bytes, ASCII decimal>\\n
    <UTF-8 JSON header>
    <array 0 bytes><array 1 bytes>...

The header holds user metadata under ``"meta"`` and, under ``"arrays"``,
one entry per array with its name, shape, byte offset (relative to the end
of the header), byte count and SHA-256 digest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"STRB-ARRAYS 1\n"


class StorageError(IOError):
    """Missing, truncated or corrupted container file."""


def write_arrays(path, meta: dict, arrays: dict) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        data = np.asarray(arr, dtype="<f8")
        raw = data.tobytes()
        entries.append({
            "name": name,
            "shape": list(data.shape),
            "offset": offset,
            "nbytes": len(raw),
            "sha256": hashlib.sha256(raw).hexdigest(),
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(header)}\n".encode())
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)


def read_arrays(path) -> tuple:
    """Return ``(meta, arrays)``; raises :class:`StorageError` on any integrity problem."""
    path = Path(path)
    if not path.is_file():
        raise StorageError(f"{path}: file not found")
    blob = path.read_bytes()
    if not blob.startswith(MAGIC):
        raise StorageError(f"{path}: not an array container (bad magic)")
    pos = len(MAGIC)
    nl = blob.find(b"\n", pos)
    try:
        hlen = int(blob[pos:nl])
        header = json.loads(blob[nl + 1: nl + 1 + hlen])
    except (ValueError, json.JSONDecodeError) as exc:
        raise StorageError(f"{path}: corrupted header ({exc})") from exc
    base = nl + 1 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        raw = blob[start: start + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise StorageError(f"{path}: array {e['name']!r} truncated "
                               f"({len(raw)} of {e['nbytes']} bytes)")
        if hashlib.sha256(raw).hexdigest() != e["sha256"]:
            raise StorageError(f"{path}: checksum mismatch for array {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).copy()
    return header["meta"], arrays
