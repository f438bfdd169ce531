"""Binary model container.

Layout (all integers little-endian)::

    magic    8 bytes  b"DHARMDL\\0"
    version  u32
    kind     u16 length + UTF-8        model kind tag: unet | fcn | cnn | knn
    config   u32 length + UTF-8 JSON   sorted keys
    count    u32                       number of arrays
    per array:
        name   u16 length + UTF-8
        ndim   u8, then ndim x u64 extents
        data   product(extents) x float64 (<f8)
    digest   32 bytes SHA-256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"DHARMDL\0"
VERSION = 1
_DIGEST = 32


def dumps(kind: str, config: dict, arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    kind_b = kind.encode()
    parts.append(struct.pack("<H", len(kind_b)) + kind_b)
    cfg_b = json.dumps(config, sort_keys=True).encode()
    parts.append(struct.pack("<I", len(cfg_b)) + cfg_b)
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        name_b = name.encode()
        parts.append(struct.pack("<H", len(name_b)) + name_b)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("model file is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf: bytes) -> tuple[str, dict, dict]:
    if len(buf) < len(MAGIC) + _DIGEST or buf[: len(MAGIC)] != MAGIC:
        raise FormatError("not a model file (bad magic or too short)")
    body, digest = buf[:-_DIGEST], buf[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError("model file checksum mismatch (corrupt or truncated)")
    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    (n,) = r.unpack("<H")
    kind = r.take(n).decode()
    (n,) = r.unpack("<I")
    try:
        config = json.loads(r.take(n).decode())
    except ValueError as exc:
        raise FormatError(f"bad config block: {exc}") from exc
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(body):
        raise FormatError("trailing bytes after parameter payloads")
    return kind, config, arrays


def save(path, kind: str, config: dict, arrays: dict) -> None:
    Path(path).write_bytes(dumps(kind, config, arrays))


def load(path) -> tuple[str, dict, dict]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model file {path}: {exc}") from exc
    return loads(buf)
