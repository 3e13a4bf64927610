"""Versioned binary checkpoint format.

Layout (all integers little-endian)::

    b"LCKP"                         magic
    u32   version (= 1)
    u32   metadata length M
    M     metadata, UTF-8 JSON with sorted keys
    u32   entry count
    per entry:
      u16   name length L, then L bytes UTF-8 name
      u8    ndim D, then D x u32 dims
      prod(dims) x float32 values, row-major
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"LCKP"
VERSION = 1


class CheckpointFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Checkpoint:
    entries: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    metadata: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(self.entries))]
        for name, arr in self.entries.items():
            raw = name.encode("utf-8")
            arr = np.asarray(arr, dtype=np.float32)
            parts.append(struct.pack("<H", len(raw)) + raw)
            parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
            parts.append(arr.astype("<f4").tobytes(order="C"))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        reader = _Reader(blob)
        if reader.take(4, "magic") != MAGIC:
            raise CheckpointFormatError("bad magic, not an LCKP checkpoint", 0)
        (version,) = reader.unpack("<I", "version")
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}", 4)
        (meta_len,) = reader.unpack("<I", "metadata length")
        meta_at = reader.pos
        try:
            metadata = json.loads(reader.take(meta_len, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise CheckpointFormatError("metadata is not valid UTF-8 JSON", meta_at) from None
        (count,) = reader.unpack("<I", "entry count")
        entries: OrderedDict[str, np.ndarray] = OrderedDict()
        for _ in range(count):
            name_at = reader.pos
            (name_len,) = reader.unpack("<H", "name length")
            try:
                name = reader.take(name_len, "entry name").decode("utf-8")
            except UnicodeDecodeError:
                raise CheckpointFormatError("entry name is not UTF-8", name_at) from None
            (ndim,) = reader.unpack("<B", f"rank of {name!r}")
            dims = reader.unpack(f"<{ndim}I", f"dims of {name!r}")
            n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            raw = reader.take(4 * n, f"values of {name!r}")
            if name in entries:
                raise CheckpointFormatError(f"duplicate entry {name!r}", name_at)
            entries[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
        if reader.pos != len(blob):
            raise CheckpointFormatError(f"{len(blob) - reader.pos} trailing bytes", reader.pos)
        return cls(entries, metadata)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError(f"truncated while reading {what}", self.pos)
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))
