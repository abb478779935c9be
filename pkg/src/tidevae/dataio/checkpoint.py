"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TIDE"                      4 bytes magic
    version                      u32, currently 1
    config length                u32
    config                       UTF-8 JSON of the TideConfig fields
    repeated until EOF:
        name length              u32
        name                     UTF-8
        rank                     u32
        extents                  rank x u32
        values                   prod(extents) x float32
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..engine.tensor import parameter
from ..model import TideConfig, TideVae, layer_layout

MAGIC = b"TIDE"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model: TideVae) -> bytes:
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg]
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{p.data.ndim}I", p.data.ndim, *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(model: TideVae, path) -> None:
    """Parameters are stored as float32; a float32 model round-trips bit-exactly."""
    data = encode_checkpoint(model)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf, self.pos, self.source = buf, 0, source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.source}: truncated while reading {what} at byte {self.pos} "
                                  f"(need {n}, have {len(self.buf) - self.pos})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def decode_checkpoint(buf: bytes, source: str = "<bytes>") -> TideVae:
    r = _Reader(buf, source)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{source}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version} at byte 4")
    cfg_len = r.u32("config length")
    cfg_at = r.pos
    try:
        cfg_doc = json.loads(r.take(cfg_len, "config").decode("utf-8"))
        config = TideConfig(**cfg_doc)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{source}: invalid config document at byte {cfg_at}: {exc}") from None

    params = {}
    while r.pos < len(buf):
        rec_at = r.pos
        name = r.take(r.u32("name length"), "name").decode("utf-8", errors="replace")
        rank = r.u32(f"rank of {name}")
        extents = tuple(r.u32(f"extent of {name}") for _ in range(rank))
        count = int(np.prod(extents)) if rank else 1
        raw = r.take(4 * count, f"values of {name}")
        if name in params:
            raise CheckpointError(f"{source}: duplicate record {name!r} at byte {rec_at}")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(extents).astype(np.float32)

    expected = {}
    for lname, kind, shape in layer_layout(config):
        expected[f"{lname}.weight"] = shape
        expected[f"{lname}.bias"] = (shape[1] if kind in ("dense", "convT") else shape[0],)
    missing = [k for k in expected if k not in params]
    extra = [k for k in params if k not in expected]
    if missing or extra:
        raise CheckpointError(f"{source}: parameter set mismatch; missing {missing[:3]}, unexpected {extra[:3]}")
    for k, shape in expected.items():
        if params[k].shape != tuple(shape):
            raise CheckpointError(f"{source}: {k} has shape {params[k].shape}, config implies {tuple(shape)}")
    return TideVae(config, {k: parameter(params[k], name=k) for k in expected})


def load_checkpoint(path) -> TideVae:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), os.fspath(path))
