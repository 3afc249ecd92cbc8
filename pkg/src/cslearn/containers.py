"""Bit-exact named-tensor container for checkpoints and matrix export.

Layout (little-endian): magic "TCLT", version u32, entry count u32, then
per entry: name length u32, UTF-8 name, dtype code u8 (1 = float32),
rank u8, dims u64 each, raw payload. Entry order is preserved so a
save/load/save round trip is byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TCLT"
VERSION = 1
DTYPE_F32 = 1


class FormatError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    if len(set(tensors)) != len(tensors):
        raise ValueError("tensor names must be unique")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BB", DTYPE_F32, a.ndim))
            f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            f.write(a.tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise FormatError(f"truncated header: {len(raw)} bytes")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    out: dict[str, np.ndarray] = {}
    off = 12
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off:off + nlen].decode("utf-8")
            off += nlen
            dtype, rank = struct.unpack_from("<BB", raw, off)
            off += 2
            dims = struct.unpack_from(f"<{rank}Q", raw, off)
            off += 8 * rank
        except struct.error as e:
            raise FormatError(f"corrupt entry header at offset {off}") from e
        if dtype != DTYPE_F32:
            raise FormatError(f"unknown dtype code {dtype} for {name!r}")
        size = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
        if rank == 0:
            dims, size = (), 4
        if off + size > len(raw):
            raise FormatError(f"truncated payload for {name!r} at offset {off}")
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f4", count=size // 4, offset=off).reshape(dims).copy()
        off += size
    if off != len(raw):
        raise FormatError(f"{len(raw) - off} trailing bytes at offset {off}")
    return out


def pack_text(text: str) -> np.ndarray:
    """Store text as an f32 array of byte values (container is f32-only)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def unpack_text(arr: np.ndarray) -> str:
    return arr.astype(np.uint8).tobytes().decode("utf-8")


def pack_u64(value: int) -> np.ndarray:
    return np.frombuffer(struct.pack("<Q", value), dtype=np.uint8).astype(np.float32)


def unpack_u64(arr: np.ndarray) -> int:
    (v,) = struct.unpack("<Q", arr.astype(np.uint8).tobytes())
    return v
