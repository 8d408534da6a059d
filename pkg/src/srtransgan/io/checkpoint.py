"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic        4 bytes   b"SRTG"
    version      u32       FORMAT_VERSION
    meta_len     u64       byte length of the metadata document
    meta         UTF-8     JSON: configs, training step, RNG state, extras
    count        u64       number of tensors
    per tensor:
      name_len   u32
      name       UTF-8
      rank       u32
      extents    rank x u64
      dtype      u8        0 = float32
      payload    float32 little-endian, row-major
    checksum     u64       CRC-64/XZ of every preceding byte

Tensor names are namespaced: ``generator.*``, ``discriminator.*``,
``opt_g.m.*``/``opt_g.v.*`` and ``opt_d.*`` for optimizer moments.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DecodeError

MAGIC = b"SRTG"
FORMAT_VERSION = 1
DTYPE_F32 = 0

_CRC64_POLY = 0xC96C5795D7870F42  # ECMA-182, reflected


def _crc64_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint64)
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table[i] = crc
    return table


_TABLE = [int(v) for v in _crc64_table()]


def crc64(data: bytes, crc: int = 0) -> int:
    """CRC-64/XZ (reflected ECMA-182, init and xorout all ones)."""
    table = _TABLE
    crc ^= 0xFFFFFFFFFFFFFFFF
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


class CheckpointError(DecodeError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        n = len(prefix)
        return {k[n:]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    meta = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts += [struct.pack("<Q", len(meta)), meta, struct.pack("<Q", len(ckpt.tensors))]
    for name, value in ckpt.tensors.items():
        arr = np.asarray(value)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"tensor {name} contains non-finite values")
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<I", arr.ndim)]
        parts += [struct.pack("<Q", d) for d in arr.shape]
        parts += [struct.pack("<B", DTYPE_F32), np.ascontiguousarray(arr, dtype="<f4").tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<Q", crc64(body))


def decode_checkpoint(buf: bytes, source="<bytes>") -> Checkpoint:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise BadMagicError(f"{source}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"{source}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    if len(buf) < 16:
        raise ChecksumError(f"{source}: truncated checkpoint")
    body, (stored,) = buf[:-8], struct.unpack("<Q", buf[-8:])
    if crc64(body) != stored:
        raise ChecksumError(f"{source}: checksum mismatch (file corrupt or truncated)")

    pos = 8

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, body, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (meta_len,) = take("<Q")
        meta = json.loads(body[pos:pos + meta_len].decode("utf-8"))
        pos += meta_len
        (count,) = take("<Q")
        tensors = {}
        for _ in range(count):
            (name_len,) = take("<I")
            name = body[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = take("<I")
            shape = take(f"<{rank}Q") if rank else ()
            (dtype,) = take("<B")
            if dtype != DTYPE_F32:
                raise CheckpointError(f"{source}: tensor {name} has unknown dtype tag {dtype}")
            n = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(body, dtype="<f4", count=n, offset=pos).astype(np.float32).reshape(shape)
            pos += 4 * n
            tensors[name] = data
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{source}: malformed checkpoint ({exc})") from exc
    if pos != len(body):
        raise CheckpointError(f"{source}: {len(body) - pos} trailing bytes before checksum")
    return Checkpoint(meta, tensors)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    data = encode_checkpoint(ckpt)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"{path}: cannot write checkpoint ({exc.strerror})") from exc


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    return decode_checkpoint(buf, path)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
