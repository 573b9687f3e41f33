"""8-bit PGM input/output and a synthetic test-image generator."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PGMError(ValueError):
    pass


def _tokens(data: bytes, count: int, pos: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMError("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 (binary) or P2 (ASCII) 8-bit graymap to a uint8 array."""
    (magic,), pos = _tokens(data, 1)
    if magic not in (b"P5", b"P2"):
        raise PGMError(f"unsupported PGM magic {magic!r}")
    (w, h, maxval), pos = _tokens(data, 3, pos)
    width, height, maxval = int(w), int(h), int(maxval)
    if width < 1 or height < 1:
        raise PGMError("empty image")
    if not 0 < maxval < 256:
        raise PGMError(f"only 8-bit PGM is supported (maxval {maxval})")
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        raw = data[pos:pos + width * height]
        if len(raw) != width * height:
            raise PGMError("truncated PGM raster")
        img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    else:
        values = data[pos:].split()
        if len(values) < width * height:
            raise PGMError("truncated PGM raster")
        img = np.array([int(v) for v in values[:width * height]], dtype=np.uint8).reshape(height, width)
    if maxval != 255:
        img = np.round(img.astype(np.float64) * 255.0 / maxval).astype(np.uint8)
    return img.copy()


def encode_pgm(image) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2:
        raise PGMError("expected a 2D grayscale image")
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path, image) -> None:
    Path(path).write_bytes(encode_pgm(image))


def list_pgm(directory) -> list[Path]:
    """PGM files in a directory, sorted by name."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() == ".pgm" and p.is_file())


def synthetic_image(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Piecewise-smooth grayscale image: smooth gradients, a few flat-shaded
    ellipses and rectangles with sharp edges, plus mild texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = 90 + 60 * np.sin(xx / width * rng.uniform(1, 3) * np.pi + rng.uniform(0, np.pi)) \
        * np.cos(yy / height * rng.uniform(0.5, 2) * np.pi)
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry, rx = rng.uniform(0.08, 0.3) * height, rng.uniform(0.08, 0.3) * width
        level = rng.uniform(20, 235)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        shade = level + 0.2 * (yy - cy) + 0.1 * (xx - cx)
        img = np.where(mask, shade, img)
    img += rng.normal(0, 3, size=img.shape)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)
