"""Binary field checkpoints.

Layout (little-endian)::

    offset  size  field
    0       5     magic b"WNLS1"
    5       2     version (uint16)
    7       1     d (uint8)
    8       4     n_x (uint32)
    12      4     n_y (uint32)
    16      8     L (float64)
    24      1     mu (int8)
    25      8     p (float64)
    33      8     q (float64)
    41      8     timestamp (float64, seconds since the epoch)
    49      4     CRC-32 of bytes 0..48
    53      ...   payload: 16 * n_x^d * n_y bytes, (re, im) float64 pairs, y fastest
"""
from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigurationError, MigrationRefusedError
from .functionals import ModelParams
from .grid import Field, make_grid

MAGIC = b"WNLS1"
VERSION = 1
_HEAD = struct.Struct("<5sHBIIdbddd")
_CRC = struct.Struct("<I")
HEADER_SIZE = _HEAD.size + _CRC.size


@dataclass(frozen=True)
class CheckpointMeta:
    version: int
    params: ModelParams
    timestamp: float


def write_checkpoint(path, u: Field, params: ModelParams, timestamp: float | None = None) -> Path:
    if u.diverged or not np.all(np.isfinite(u.values)):
        raise CheckpointError("refusing to checkpoint a non-finite field")
    spec = u.spec
    ts = time.time() if timestamp is None else float(timestamp)
    head = _HEAD.pack(MAGIC, VERSION, spec.d, spec.n_x, spec.n_y, float(spec.L), int(params.mu),
                      float(params.p), float(params.q), ts)
    payload = np.ascontiguousarray(u.values, dtype="<c16").tobytes()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(_CRC.pack(zlib.crc32(head)))
        fh.write(payload)
    return path


def read_checkpoint(path) -> tuple[Field, CheckpointMeta]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic", offset=0)
    if len(data) < 7:
        raise CheckpointError("truncated header", offset=len(data))
    (version,) = struct.unpack_from("<H", data, 5)
    if version != VERSION:
        raise MigrationRefusedError(f"checkpoint version {version} cannot be read by version {VERSION}", offset=5)
    if len(data) < HEADER_SIZE:
        raise CheckpointError("truncated header", offset=len(data))
    head = data[: _HEAD.size]
    (crc,) = _CRC.unpack_from(data, _HEAD.size)
    if zlib.crc32(head) != crc:
        raise CheckpointError("header checksum mismatch", offset=_HEAD.size)
    _, _, d, n_x, n_y, L, mu, p, q, ts = _HEAD.unpack(head)
    try:
        spec = make_grid(d, L, n_x, n_y)
        params = ModelParams(mu, p, q, d)
    except ConfigurationError as exc:
        raise CheckpointError(f"invalid header contents: {exc}", offset=7) from exc
    need = 16 * spec.size
    have = len(data) - HEADER_SIZE
    if have < need:
        raise CheckpointError(f"truncated payload: expected {need} bytes, found {have}", offset=len(data))
    if have > need:
        raise CheckpointError(f"trailing bytes after payload ({have - need})", offset=HEADER_SIZE + need)
    vals = np.frombuffer(data, dtype="<c16", count=spec.size, offset=HEADER_SIZE)
    vals = vals.astype(np.complex128).reshape(spec.shape)
    return Field(spec, vals), CheckpointMeta(version, params, ts)
