"""8-bit image codecs: binary PPM/PGM natively, PNG through Pillow.

Images are ``(3, H, W)`` float32 arrays in [0, 1]. Decoding divides 8-bit
samples by 255; encoding clamps to [0, 1] and rounds half up.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import DecodeError, PreconditionError

_WHITESPACE = b" \t\r\n\v\f"


def _read_header(buf: bytes, path) -> tuple[bytes, list[int], int]:
    """Parse a netpbm header; returns magic, integer fields and payload offset."""
    magic = buf[:2]
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos] in _WHITESPACE:
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
            pos += 1
        token = buf[start:pos]
        if not token.isdigit():
            raise DecodeError(f"{path}: malformed netpbm header")
        fields.append(int(token))
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise DecodeError(f"{path}: malformed netpbm header")
    return magic, fields, pos + 1


def decode_netpbm(buf: bytes, path="<bytes>") -> tuple[np.ndarray, int]:
    """Decode a P5/P6 buffer into an integer array of shape ``(C, H, W)`` and its maxval."""
    if buf[:2] not in (b"P5", b"P6"):
        raise DecodeError(f"{path}: not a binary PGM/PPM file")
    magic, (w, h, maxval), offset = _read_header(buf, path)
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise DecodeError(f"{path}: invalid header values {w}x{h} maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = w * h * channels
    payload = buf[offset:offset + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise DecodeError(f"{path}: truncated pixel data")
    arr = np.frombuffer(payload, dtype=dtype).reshape(h, w, channels).transpose(2, 0, 1)
    if arr.max(initial=0) > maxval:
        raise DecodeError(f"{path}: sample exceeds maxval {maxval}")
    return arr, maxval


def _from_uint8(arr: np.ndarray) -> np.ndarray:
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    return (arr.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def load_image(path) -> np.ndarray:
    """Read a PNG, PPM (P6) or PGM (P5) file as a ``(3, H, W)`` float32 array in [0, 1]."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: cannot read ({exc.strerror})") from exc
    if buf[:2] in (b"P5", b"P6"):
        arr, maxval = decode_netpbm(buf, path)
        if maxval != 255:
            raise DecodeError(f"{path}: unsupported bit depth (maxval {maxval}, expected 255)")
        return _from_uint8(arr)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise DecodeError(f"{path}: unrecognised image format")


def _load_png(path: Path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I", "F") or im.mode.startswith("I;"):
                raise DecodeError(f"{path}: unsupported bit depth (mode {im.mode})")
            if im.mode in ("L", "LA"):
                arr = np.asarray(im.convert("L"))[None]
            else:
                arr = np.asarray(im.convert("RGB")).transpose(2, 0, 1)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise DecodeError(f"{path}: corrupt PNG ({exc})") from exc
    return _from_uint8(np.ascontiguousarray(arr))


def quantize(img: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Clamp to [0, 1] and map to integers with round-half-up."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    q = np.floor(x * maxval + 0.5)
    return q.astype(np.uint8 if maxval <= 255 else np.uint16)


def encode_netpbm(q: np.ndarray, maxval: int = 255) -> bytes:
    """Encode a ``(C, H, W)`` integer array with C in {1, 3} as P5/P6."""
    c, h, w = q.shape
    magic = {1: b"P5", 3: b"P6"}.get(c)
    if magic is None:
        raise PreconditionError(f"netpbm needs 1 or 3 channels, got {c}")
    dtype = ">u2" if maxval > 255 else np.uint8
    header = magic + f"\n{w} {h}\n{maxval}\n".encode("ascii")
    return header + np.ascontiguousarray(q.transpose(1, 2, 0)).astype(dtype).tobytes()


def save_image(img, path) -> None:
    """Write a ``(3, H, W)`` or ``(1, H, W)`` array in [0, 1]; format chosen by extension."""
    img = np.asarray(getattr(img, "data", img))
    if img.ndim == 2:
        img = img[None]
    path = Path(path)
    suffix = path.suffix.lower()
    q = quantize(img)
    path.parent.mkdir(parents=True, exist_ok=True)
    if suffix in (".ppm", ".pgm", ".pnm"):
        if suffix == ".ppm" and q.shape[0] == 1:
            q = np.repeat(q, 3, axis=0)
        _atomic_write(path, encode_netpbm(q))
    elif suffix == ".png":
        from PIL import Image

        if q.shape[0] == 1:
            im = Image.fromarray(q[0], mode="L")
        else:
            im = Image.fromarray(np.ascontiguousarray(q.transpose(1, 2, 0)), mode="RGB")
        tmp = path.with_name(path.name + ".tmp")
        im.save(tmp, format="PNG")
        os.replace(tmp, path)
    else:
        raise PreconditionError(f"{path}: unsupported output format {suffix!r}")


def save_pgm16(values: np.ndarray, path) -> None:
    """Write a single-channel map in [0, 1] as a 16-bit binary PGM."""
    values = np.asarray(values)
    if values.ndim == 3:
        values = values.reshape(values.shape[0], values.shape[1]) if values.shape[2] == 1 else values[0]
    _atomic_write(Path(path), encode_netpbm(quantize(values[None], 65535), 65535))


def load_pgm(path) -> np.ndarray:
    """Read a P5 file of any bit depth as an ``(H, W)`` float64 array in [0, 1]."""
    path = Path(path)
    arr, maxval = decode_netpbm(path.read_bytes(), path)
    if arr.shape[0] != 1:
        raise DecodeError(f"{path}: expected a single-channel PGM")
    return arr[0].astype(np.float64) / maxval


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"{path}: write failed ({exc.strerror})") from exc
