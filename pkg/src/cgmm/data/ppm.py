"""Binary PPM (P6) reading and writing for ``[3, H, W]`` rasters in [0, 1]."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


class PPMFormatError(ValueError):
    """Malformed PPM data; the message names the byte offset."""


def encode_ppm(raster: np.ndarray) -> bytes:
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim != 3 or raster.shape[0] != 3:
        raise ValueError(f"expected a 3xHxW raster, got {raster.shape}")
    if raster.min(initial=0.0) < 0.0 or raster.max(initial=0.0) > 1.0:
        raise ValueError("raster values must lie in [0, 1]")
    _, h, w = raster.shape
    payload = np.rint(raster * 255.0).astype(np.uint8).transpose(1, 2, 0).tobytes()
    return f"P6\n{w} {h}\n255\n".encode("ascii") + payload


def write_frame(path: str | os.PathLike, raster: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(raster))


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, start offset, position after token), skipping whitespace
    and ``#`` comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PPMFormatError(f"unexpected end of header at byte {start}")
    return buf[start:pos], start, pos


def decode_ppm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P6":
        raise PPMFormatError(f"bad magic {buf[:2]!r} at byte 0, expected b'P6'")
    pos = 2
    values = []
    for field in ("width", "height", "maxval"):
        tok, start, pos = _next_token(buf, pos)
        if not tok.isdigit() or int(tok) <= 0:
            raise PPMFormatError(f"invalid {field} {tok!r} at byte {start}")
        values.append(int(tok))
    w, h, maxval = values
    if maxval != 255:
        raise PPMFormatError(f"unsupported maxval {maxval}; only 8-bit channels are read")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PPMFormatError(f"missing separator before payload at byte {pos}")
    pos += 1
    need = 3 * w * h
    if len(buf) - pos != need:
        raise PPMFormatError(
            f"payload at byte {pos} has {len(buf) - pos} bytes, expected {need} for {w}x{h}")
    pixels = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


def read_frame(path: str | os.PathLike) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def quantize(raster: np.ndarray) -> np.ndarray:
    """Snap values to the 1/255 grid used on disk."""
    return np.rint(np.clip(raster, 0.0, 1.0) * 255.0) / 255.0
