"""Versioned binary checkpoint container.

Layout, all little-endian:

    magic   4 bytes  "MGCK"
    version u32      currently 1
    meta    u32 byte length + canonical JSON (sorted keys, no whitespace)
    table   u32 tensor count, then per tensor:
              u16 name length, UTF-8 name,
              u8 dtype code (0 = float32),
              u8 rank, u32 per dimension,
              raw payload

The metadata JSON is canonicalized and carries no timestamps, so identical
model state serializes to identical bytes. Loading verifies sizes as it
walks the buffer and reports the byte offset of the first inconsistency.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ContractError, ParseError, VersionError

MAGIC = b"MGCK"
FORMAT_VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4")}
CODE_FOR_DTYPE = {np.dtype(np.float32): 0}


def save_checkpoint(tensors: dict[str, np.ndarray], metadata: dict,
                    path: str) -> None:
    """Serialize name->float32-array map plus a JSON-able metadata dict."""
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    meta = json.dumps(metadata, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        # np.ascontiguousarray would promote 0-d to (1,); tobytes below
        # already emits C order for any layout.
        arr = np.asarray(arr)
        if arr.dtype not in CODE_FOR_DTYPE:
            raise ContractError(f"tensor '{name}' has unsupported dtype {arr.dtype}")
        if not np.isfinite(arr).all():
            raise ContractError(f"tensor '{name}' holds non-finite values")
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise ContractError(f"tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", CODE_FOR_DTYPE[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4", copy=False).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.blob):
            raise ParseError(f"truncated checkpoint while reading {what}",
                             offset=self.pos)
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as (tensors, metadata); bit-exact with save."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise VersionError("not a checkpoint file (bad magic)", offset=0)
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version} "
                           f"(this build reads {FORMAT_VERSION})", offset=4)
    meta_len = r.u32("metadata length")
    meta_at = r.pos
    try:
        metadata = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"metadata is not valid JSON: {e}", offset=meta_at)
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        name_at = r.pos
        name_len = r.u16(f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        if name in tensors:
            raise ParseError(f"duplicate tensor name '{name}'", offset=name_at)
        code = r.u8(f"tensor '{name}' dtype")
        if code not in DTYPE_CODES:
            raise ParseError(f"tensor '{name}' has unknown dtype code {code}",
                             offset=r.pos - 1)
        rank = r.u8(f"tensor '{name}' rank")
        dims = tuple(r.u32(f"tensor '{name}' dim {d}") for d in range(rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(size * DTYPE_CODES[code].itemsize,
                         f"tensor '{name}' payload")
        tensors[name] = np.frombuffer(payload, dtype=DTYPE_CODES[code]
                                      ).reshape(dims).copy()
    if r.pos != len(blob):
        raise ParseError("trailing bytes after tensor table", offset=r.pos)
    return tensors, metadata
