"""Binary PPM (P6, maxval 255) reading and writing."""

from __future__ import annotations

import os

import numpy as np


class PpmError(ValueError):
    pass


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PpmError(f"unexpected end of header at byte {start}")
    return buf[start:pos], pos


def decode_ppm(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if buf[:2] != b"P6":
        raise PpmError(f"{source}: bad magic {buf[:2]!r} at byte 0, expected b'P6'")
    pos = 2
    fields = []
    for what in ("width", "height", "maxval"):
        tok_start = pos
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PpmError(f"{source}: non-integer {what} {tok!r} near byte {tok_start}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PpmError(f"{source}: non-positive size {width}x{height}")
    if maxval != 255:
        raise PpmError(f"{source}: maxval {maxval} unsupported (only 255) at byte {pos}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PpmError(f"{source}: missing whitespace after header at byte {pos}")
    pos += 1
    need = width * height * 3
    have = len(buf) - pos
    if have < need:
        raise PpmError(f"{source}: truncated payload, {have} of {need} bytes after byte offset {pos}")
    raw = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    return raw.reshape(height, width, 3).transpose(2, 0, 1).astype(np.float32) / 255.0


def read_ppm(path) -> np.ndarray:
    """Load a P6 file as a (3, H, W) float32 array in [0, 1]."""
    with open(path, "rb") as fh:
        return decode_ppm(fh.read(), os.fspath(path))


def encode_ppm(image) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise PpmError(f"expected a (3, H, W) image, got shape {img.shape}")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    _, h, w = q.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + q.transpose(1, 2, 0).tobytes()


def write_ppm(image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))
