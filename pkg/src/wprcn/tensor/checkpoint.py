"""Flat binary container of named float64 arrays.

Layout (all integers little-endian)::

    magic    8 bytes   b"WPRCNCK\\0"
    version  uint32    currently 1
    count    uint32    number of records
    record * count:
        name_len  uint16
        name      name_len bytes, UTF-8
        ndim      uint8
        dims      ndim * uint64
        values    prod(dims) * float64, row-major

Scalars are stored with ``ndim = 0`` and one value.  Records keep the
order in which they were written.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Mapping

import numpy as np

MAGIC = b"WPRCNCK\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_records(fh: BinaryIO, records: Mapping[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(records)))
    for name, value in records.items():
        arr = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"record name too long: {name[:40]}...")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_records(fh: BinaryIO) -> dict[str, np.ndarray]:
    def take(n: int) -> bytes:
        chunk = fh.read(n)
        if len(chunk) != n:
            raise CheckpointError("truncated checkpoint")
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(dims)) if ndim else 1
        values = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
        records[name] = values.reshape(dims)
    return records


def save(path: str | os.PathLike, records: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        write_records(fh, records)


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_records(fh)


def dumps(records: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    write_records(buf, records)
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    return read_records(io.BytesIO(blob))


def prefixed(prefix: str, records: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}{k}": v for k, v in records.items()}


def strip_prefix(prefix: str, records: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k[len(prefix):]: v for k, v in records.items() if k.startswith(prefix)}
