"""Deterministic output formats.

* Functional traces: CSV with a fixed, documented column order and
  17-significant-digit floats (lossless float64 round trip).
* Field snapshots: a 48-byte "GMSP" header followed by row-major
  float64 little-endian payload.
* 2d fields: 8-bit binary PGM with min-max scaling; the scaling bounds
  go to a sidecar text file so the image stays invertible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .functionals import TRACE_COLUMNS, FunctionalTrace

SNAPSHOT_MAGIC = b"GMSP"
SNAPSHOT_VERSION = 1
# magic, u32 version, then five little-endian float64 words:
# dim, grid size axis 0, grid size axis 1 (1 when unused), field count, time
_HEADER = struct.Struct("<4sIddddd")


def fmt17(x):
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SnapshotHeader:
    dim: int
    shape: tuple[int, ...]
    field_count: int
    time: float

    def packed(self):
        n0 = self.shape[0]
        n1 = self.shape[1] if self.dim == 2 else 1
        return _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
                            float(self.dim), float(n0), float(n1),
                            float(self.field_count), float(self.time))

    @property
    def payload_items(self):
        return int(np.prod(self.shape)) * self.field_count


def write_trace(trace: FunctionalTrace, path) -> None:
    """CSV dump, one row per observation time, columns as documented."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for i in range(trace.n_rows()):
            row = [fmt17(trace.column(name)[i]) for name in TRACE_COLUMNS]
            fh.write(",".join(row) + "\n")


def read_trace_csv(path):
    """Columns of a trace CSV keyed by name (for round-trip checks)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_snapshot(fields, header: SnapshotHeader, path) -> None:
    """Binary snapshot of one or more nodal fields."""
    arrays = [np.asarray(f, dtype=float) for f in fields]
    if len(arrays) != header.field_count:
        raise ValueError(
            f"header says {header.field_count} fields, got {len(arrays)}"
        )
    for a in arrays:
        if a.shape != header.shape:
            raise ValueError(f"field shape {a.shape} != header {header.shape}")
    with open(path, "wb") as fh:
        fh.write(header.packed())
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_snapshot(path):
    """Parse a snapshot, validating magic, version and payload length."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, dim, n0, n1, count, time = _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dim = int(dim)
    shape = (int(n0),) if dim == 1 else (int(n0), int(n1))
    header = SnapshotHeader(dim=dim, shape=shape, field_count=int(count),
                            time=time)
    payload = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if payload.size != header.payload_items:
        raise ValueError(
            f"{path}: payload has {payload.size} values, header implies "
            f"{header.payload_items}"
        )
    per = int(np.prod(shape))
    fields = [payload[i * per:(i + 1) * per].reshape(shape).copy()
              for i in range(header.field_count)]
    return header, fields


def write_image(nodal, path) -> None:
    """8-bit PGM of a field with min-max scaling and a bounds sidecar."""
    arr = np.asarray(nodal, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"images need a 1d or 2d field, got shape {arr.shape}")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(arr.shape, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    with open(str(path) + ".bounds.txt", "w", encoding="utf-8") as fh:
        fh.write(f"min = {fmt17(lo)}\nmax = {fmt17(hi)}\n")


def write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def write_csv(path, header, columns) -> None:
    """Generic numeric CSV with 17-digit floats."""
    columns = [np.asarray(c) for c in columns]
    n = columns[0].size
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(fmt17(c[i]) for c in columns) + "\n")
