"""Minimal binary netpbm codecs: P6 color frames, P5 gray maps."""
from __future__ import annotations

import numpy as np

from .errors import DataError


def write_ppm(path: str, image: np.ndarray) -> None:
    """Write a (3, height, width) uint8 image as binary PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3 or image.dtype != np.uint8:
        raise DataError(f"{path}: PPM writer expects (3, h, w) uint8, got {image.dtype} {image.shape}")
    _, h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.transpose(1, 2, 0).tobytes())


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a (height, width) uint8 image as binary PGM."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise DataError(f"{path}: PGM writer expects (h, w) uint8, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def _read_tokens(data: bytes, count: int, path: str) -> tuple[list[int], int]:
    """Parse whitespace/comment-separated header integers; returns values and
    the offset just past the single whitespace byte that ends the header."""
    values: list[int] = []
    i = 0
    while len(values) < count:
        if i >= len(data):
            raise DataError(f"{path}: truncated netpbm header")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            token = data[i:j]
            if not token.isdigit():
                raise DataError(f"{path}: malformed netpbm header token {token!r}")
            values.append(int(token))
            i = j
    return values, i + 1


def read_ppm(path: str) -> np.ndarray:
    """Read a binary PPM into (3, height, width) uint8."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise DataError(f"{path}: not a binary PPM (bad magic)")
    (w, h, maxval), offset = _read_tokens(data[2:], 3, path)
    offset += 2
    if maxval != 255:
        raise DataError(f"{path}: unsupported PPM maxval {maxval}")
    expected = w * h * 3
    pixels = data[offset : offset + expected]
    if len(pixels) != expected:
        raise DataError(f"{path}: PPM payload is short ({len(pixels)} of {expected} bytes)")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1).copy()


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (bad magic)")
    (w, h, maxval), offset = _read_tokens(data[2:], 3, path)
    offset += 2
    if maxval != 255:
        raise DataError(f"{path}: unsupported PGM maxval {maxval}")
    expected = w * h
    pixels = data[offset : offset + expected]
    if len(pixels) != expected:
        raise DataError(f"{path}: PGM payload is short ({len(pixels)} of {expected} bytes)")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()
