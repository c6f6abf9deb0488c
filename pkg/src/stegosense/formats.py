"""Little-endian binary containers for per-pixel maps.

Layout: 16-byte header (4-byte magic, u32 version, u32 width, u32 height)
followed by row-major payload sections.
"""

from __future__ import annotations

import struct

import numpy as np

VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def pack(magic: bytes, shape: tuple[int, int], *sections: np.ndarray, trailer: bytes = b"") -> bytes:
    h, w = shape
    parts = [_HEADER.pack(magic, VERSION, w, h)]
    for s in sections:
        parts.append(np.ascontiguousarray(s).tobytes())
    parts.append(trailer)
    return b"".join(parts)


def unpack(data: bytes, magic: bytes, dtypes: list[str], trailer: int = 0) -> list[np.ndarray]:
    """Split ``data`` into one array per dtype; a ``trailer``-byte tail is appended as bytes."""
    if len(data) < _HEADER.size:
        raise FormatError(f"file too short for a {magic.decode()} header")
    got, version, w, h = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported {magic.decode()} version {version}")
    pos = _HEADER.size
    out = []
    for dt in dtypes:
        dt = np.dtype(dt)
        n = w * h * dt.itemsize
        if len(data) < pos + n:
            raise FormatError(f"{magic.decode()} payload truncated")
        out.append(np.frombuffer(data, dtype=dt, count=w * h, offset=pos).reshape(h, w).copy())
        pos += n
    if len(data) - pos != trailer:
        raise FormatError(f"{magic.decode()} payload has {len(data) - pos} trailing bytes, expected {trailer}")
    if trailer:
        out.append(data[pos:])
    return out
