"""Flat binary field container: JSON header + little-endian float64 payload.

Layout: 8-byte magic, uint64 little-endian header length, UTF-8 JSON header,
then the raw array bytes back to back in C order.  The header records every
array's name, shape, dtype and byte offset (relative to the payload start)
plus a free-form metadata dict (lattice dimensions, truncation, component
layout), so snapshots are self-describing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = ["save_arrays", "load_arrays", "MAGIC"]

MAGIC = b"MSYMFLD1"


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    """Write named float arrays with metadata; always little-endian float64."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset})
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    header = {"version": 1, "endianness": "little", "arrays": entries, "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def load_arrays(path):
    """Read a container; returns (dict name -> array, meta dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a field container (bad magic {magic!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    out = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=entry["dtype"], count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).copy()
    return out, header.get("meta", {})
