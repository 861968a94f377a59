"""Versioned binary container shared by split and checkpoint files.

Layout::

    <magic>\n
    <one-line JSON header, sorted keys>\n
    raw little-endian array bytes, in header["arrays"] order

The header lists ``name``, ``dtype`` and ``shape`` for each array, so a
reader needs nothing else. Writing the same content twice yields the same
bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError


def write_container(path, magic: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        specs.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.astype(dtype, copy=False).tobytes())
    header = json.dumps({**meta, "arrays": specs}, sort_keys=True, separators=(",", ":"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(magic.encode("ascii") + b"\n")
        fh.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def read_container(path, magic: str) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    first = raw.find(b"\n")
    if first < 0 or raw[:first].decode("ascii", "replace") != magic:
        raise FormatError(f"{path} is not a {magic} file")
    second = raw.find(b"\n", first + 1)
    if second < 0:
        raise FormatError(f"{path}: truncated header")
    try:
        meta = json.loads(raw[first + 1:second].decode("utf-8"))
        specs = meta.pop("arrays")
    except (UnicodeDecodeError, ValueError, KeyError, AttributeError) as exc:
        raise FormatError(f"{path}: unreadable header") from exc
    arrays = {}
    offset = second + 1
    for spec in specs:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(raw, dtype=dtype, count=nbytes // dtype.itemsize,
                                             offset=offset).reshape(shape).astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return meta, arrays
