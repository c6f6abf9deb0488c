"""8-bit grayscale images: binary PGM I/O and synthetic covers.

Images are plain ``numpy.ndarray`` objects of dtype ``uint8`` and shape
``(height, width)``. :func:`check_image` is the validation gate used by the
rest of the package.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .rng import derive_seed

MIN_SIZE = 5
TWO_REGION_NOISE = 24
TEXTURE_MAX_AMPLITUDE = 2.0


class PGMError(ValueError):
    """Malformed PGM input. ``kind`` names the failure, ``offset`` the byte position."""

    def __init__(self, kind: str, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.kind = kind
        self.offset = offset


def check_image(img, min_size: int = MIN_SIZE) -> np.ndarray:
    """Validate a grayscale image and return it as a read-only uint8 array."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise ValueError(f"image is {arr.shape[1]}x{arr.shape[0]}, minimum is {min_size}x{min_size}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("pixel values must be integers")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("pixel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


_WS = b" \t\n\r\v\f"


def _next_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, token_start, end) skipping whitespace and '#' comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c in (b"#",):
            nl = data.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
        elif c and c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    return data[start:pos], start, pos


def read_pgm(data: bytes, min_size: int = MIN_SIZE) -> np.ndarray:
    """Parse a binary (P5) PGM with maxval 255.

    ``min_size`` exists so parser tests can read tiny rasters; everything
    else should keep the default.
    """
    if data[:2] != b"P5":
        raise PGMError("magic", f"bad magic number {data[:2]!r}, expected b'P5'", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, start, pos = _next_token(data, pos)
        if not tok:
            raise PGMError("truncated", f"header ended before {name}", start)
        if not tok.isdigit():
            raise PGMError("header", f"invalid {name} {tok!r}", start)
        fields.append((int(tok), start))
    (width, w_at), (height, h_at), (maxval, m_at) = fields
    if maxval != 255:
        raise PGMError("maxval", f"unsupported maxval {maxval}", m_at)
    if width < min_size or height < min_size:
        raise PGMError("dimensions", f"image {width}x{height} smaller than {min_size}x{min_size}", w_at)
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise PGMError("truncated", "missing whitespace after maxval", pos)
    pos += 1
    need = width * height
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise PGMError("truncated", f"raster has {len(raster)} of {need} bytes", pos + len(raster))
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    img.flags.writeable = False
    return img


def write_pgm(img) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def load_pgm(path) -> np.ndarray:
    return read_pgm(Path(path).read_bytes())


def save_pgm(path, img) -> None:
    Path(path).write_bytes(write_pgm(img))


# -- synthetic covers -------------------------------------------------------

_KIND_RE = re.compile(r"^\s*([a-z\-]+)\s*(?:\(\s*(\d+)\s*\))?\s*$")


def _box_mean_int(noise: np.ndarray, k: int) -> np.ndarray:
    """Integer k x k box mean with mirror padding (floor division)."""
    r = k // 2
    padded = np.pad(noise.astype(np.int64), ((r, k - 1 - r), (r, k - 1 - r)), mode="symmetric")
    c = np.cumsum(np.cumsum(padded, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    h, w = noise.shape
    s = c[k:k + h, k:k + w] - c[:h, k:k + w] - c[k:k + h, :w] + c[:h, :w]
    return s // (k * k)


def _smoothed_noise(rng: np.random.Generator, shape, k: int) -> np.ndarray:
    noise = rng.integers(0, 256, size=shape)
    return np.clip(_box_mean_int(noise, k), 0, 255)


def synth_cover(kind: str, width: int, height: int, seed: int = 0) -> np.ndarray:
    """Deterministic synthetic cover.

    ``kind`` is one of ``flat(level)``, ``gradient``, ``smoothed-noise(k)``,
    ``two-region(k)`` (smooth left half, noisy right half) or
    ``textured(k)`` (smooth base with spatially varying noise).
    """
    m = _KIND_RE.match(kind)
    if not m:
        raise ValueError(f"unknown cover kind {kind!r}")
    name, arg = m.group(1), m.group(2)
    arg = None if arg is None else int(arg)
    rng = np.random.default_rng(seed)
    shape = (height, width)
    if name == "flat":
        level = 128 if arg is None else arg
        if not 0 <= level <= 255:
            raise ValueError(f"flat level {level} outside [0, 255]")
        out = np.full(shape, level, dtype=np.int64)
    elif name == "gradient":
        axis = int(rng.integers(0, 2))
        n = shape[1 - axis]
        ramp = np.round(np.linspace(16, 239, n)).astype(np.int64)
        if rng.integers(0, 2):
            ramp = ramp[::-1]
        out = np.broadcast_to(ramp[None, :] if axis == 0 else ramp[:, None], shape).copy()
    elif name == "smoothed-noise":
        k = 5 if arg is None else arg
        if k < 1:
            raise ValueError("smoothed-noise kernel size must be >= 1")
        out = _smoothed_noise(rng, shape, k)
    elif name == "two-region":
        k = 9 if arg is None else arg
        base = _smoothed_noise(rng, shape, k)
        half = width // 2
        noise = rng.integers(-TWO_REGION_NOISE, TWO_REGION_NOISE + 1, size=(height, width - half))
        out = base.copy()
        out[:, half:] = base[:, half:] + noise
    elif name == "textured":
        # smooth base plus uniform noise whose amplitude varies smoothly in space
        k = 13 if arg is None else arg
        base = _smoothed_noise(rng, shape, k)
        amp = _box_mean_int(rng.integers(0, 256, size=shape), max(3, 2 * k + 1)).astype(np.float64)
        amp = (amp - amp.min()) / max(amp.max() - amp.min(), 1.0) * TEXTURE_MAX_AMPLITUDE
        out = base + np.rint(rng.uniform(-1.0, 1.0, size=shape) * amp).astype(np.int64)
    else:
        raise ValueError(f"unknown cover kind {kind!r}")
    out = np.clip(out, 0, 255).astype(np.uint8)
    out.flags.writeable = False
    return out


DESK_KINDS = ("textured(13)",)


def desk_corpus(count: int = 200, size: int = 64, seed: int = 0, kinds=DESK_KINDS) -> list[np.ndarray]:
    """A reproducible corpus of synthetic covers cycling through ``kinds``."""
    return [synth_cover(kinds[i % len(kinds)], size, size, derive_seed(seed, i)) for i in range(count)]
