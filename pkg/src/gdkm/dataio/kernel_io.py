"""Bit-exact binary kernel files.

Layout (all integers little-endian u32, values little-endian float64)::

    "GDKM" version
    v1: rows cols payload                     (a single matrix)
    v2: tt_form 3 × (rows cols payload)       (BlockGram ii, ti, tt)
    8-byte blake2b checksum of everything above

tt_form is 0 for a missing tt block (stored as 0 × 0), 1 for a full P_t × P_t
block and 2 for a diagonal-only one (stored as a P_t × 1 column).
"""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import List

import numpy as np

from gdkm.autodiff.tape import value_of
from gdkm.dataio.dataset import SchemaError
from gdkm.errors import DataError
from gdkm.kernels.blocks import BlockGram

MAGIC = b"GDKM"
CHECKSUM_BYTES = 8
VERSION_MATRIX = 1
VERSION_BLOCKS = 2
TT_MISSING, TT_FULL, TT_DIAGONAL = 0, 1, 2
_U32 = struct.Struct("<I")
_SHAPE = struct.Struct("<II")


class IoError(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=CHECKSUM_BYTES).digest()


def _section(m: np.ndarray) -> bytes:
    m = np.ascontiguousarray(m, dtype="<f8")
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    return _SHAPE.pack(*m.shape) + m.tobytes()


def save_kernel(k, path: Path) -> None:
    """Write a dense matrix (v1) or a BlockGram (v2), replacing ``path`` atomically."""
    path = Path(path)
    if isinstance(k, BlockGram):
        if k.tt is None:
            tt, form = np.zeros((0, 0)), TT_MISSING
        elif k.tt_full:
            tt, form = value_of(k.tt), TT_FULL
        else:
            tt, form = value_of(k.tt).reshape(-1, 1), TT_DIAGONAL
        body = MAGIC + _U32.pack(VERSION_BLOCKS) + _U32.pack(form)
        body += b"".join(_section(value_of(b)) for b in (k.ii, k.ti, tt))
    else:
        m = np.asarray(value_of(k), dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("save_kernel needs a matrix or a BlockGram")
        body = MAGIC + _U32.pack(VERSION_MATRIX) + _section(m)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_bytes(body + _checksum(body))
        tmp.replace(path)
    except OSError as exc:
        raise IoError(f"cannot write kernel file {path}: {exc}") from exc


def _read_sections(body: bytes, offset: int, count: int) -> List[np.ndarray]:
    out: List[np.ndarray] = []
    for _ in range(count):
        if offset + _SHAPE.size > len(body):
            raise SchemaError("kernel file header is truncated")
        rows, cols = _SHAPE.unpack_from(body, offset)
        offset += _SHAPE.size
        size = rows * cols * 8
        if offset + size > len(body):
            raise SchemaError(f"header announces {rows}x{cols} values but the payload is shorter")
        out.append(np.frombuffer(body, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols).astype(np.float64))
        offset += size
    if offset != len(body):
        raise SchemaError(f"kernel file has {len(body) - offset} bytes beyond the announced payload")
    return out


def load_kernel(path: Path):
    """Read a kernel file; returns an ndarray (v1) or a BlockGram (v2)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read kernel file {path}: {exc}") from exc
    if len(data) < len(MAGIC) + _U32.size + CHECKSUM_BYTES:
        raise ChecksumMismatch(f"{path.name} is too short to hold a kernel")
    body, stored = data[:-CHECKSUM_BYTES], data[-CHECKSUM_BYTES:]
    if _checksum(body) != stored:
        raise ChecksumMismatch(f"{path.name} failed its checksum (truncated or corrupted)")
    if body[: len(MAGIC)] != MAGIC:
        raise IoError(f"{path.name} is not a kernel file")
    (version,) = _U32.unpack_from(body, len(MAGIC))
    offset = len(MAGIC) + _U32.size
    if version == VERSION_MATRIX:
        (m,) = _read_sections(body, offset, 1)
        return m
    if version == VERSION_BLOCKS:
        if offset + _U32.size > len(body):
            raise SchemaError("kernel file header is truncated")
        (form,) = _U32.unpack_from(body, offset)
        ii, ti, tt = _read_sections(body, offset + _U32.size, 3)
        return _blocks(ii, ti, tt, form)
    raise SchemaError(f"unsupported kernel file version {version}")


def _blocks(ii: np.ndarray, ti: np.ndarray, tt: np.ndarray, form: int) -> BlockGram:
    p_i, p_t = ii.shape[0], ti.shape[0]
    if ii.shape != (p_i, p_i) or (ti.size and ti.shape[1] != p_i):
        raise SchemaError("BlockGram sections have inconsistent shapes")
    expected = {TT_MISSING: (0, 0), TT_FULL: (p_t, p_t), TT_DIAGONAL: (p_t, 1)}.get(form)
    if expected is None:
        raise SchemaError(f"unknown tt form {form}")
    if tt.shape != expected:
        raise SchemaError(f"tt section has shape {tt.shape}, expected {expected}")
    if form == TT_MISSING:
        return BlockGram(ii=ii, ti=ti, tt=None)
    if form == TT_FULL:
        return BlockGram(ii=ii, ti=ti, tt=tt, tt_full=True)
    return BlockGram(ii=ii, ti=ti, tt=tt.ravel(), tt_full=False)
