"""Binary PGM (P5) read/write and nearest-neighbor resize.

The P5 container is the one raster format simple enough to round-trip
bit-exactly with no imaging dependency: a text header, then one byte
per pixel.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a uint8 grayscale array as binary PGM."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ParseError(f"PGM image must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ParseError(f"PGM image must be uint8, got {arr.dtype}")
    h, w = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes(order="C"))


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated tokens, skipping # comments."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ParseError("truncated PGM header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(data) and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            tokens.append(data[start:i])
    return tokens, i + 1  # past the single whitespace after the last token


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM into a uint8 array of shape [H, W]."""
    data = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise ParseError(f"{path}: bad PGM header: {exc}") from exc
    if maxval <= 0 or maxval > 255:
        raise ParseError(f"{path}: unsupported PGM maxval {maxval}")
    expected = w * h
    pixels = data[offset : offset + expected]
    if len(pixels) != expected:
        raise ParseError(f"{path}: expected {expected} pixels, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


def resize_nearest(image: np.ndarray, side: int) -> np.ndarray:
    """Resize to side x side by index map floor(i * src / dst)."""
    h, w = image.shape
    rows = (np.arange(side) * h) // side
    cols = (np.arange(side) * w) // side
    return image[np.ix_(rows, cols)]
