"""Plain-file image IO: binary PGM (P5) for inputs, PFM for float maps.

PGM follows the netpbm convention: 16-bit samples are big-endian and
``#`` starts a comment anywhere in the header.  PFM is the grayscale
``Pf`` variant with a negative scale marking little-endian floats and
rows stored bottom to top.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ImageFormatError",
    "read_pgm",
    "write_pgm",
    "read_pfm",
    "write_pfm",
    "phase_to_gray16",
]


class ImageFormatError(ValueError):
    pass


def _header_tokens(data, path, count):
    """Yield `count` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the first payload byte (one
    whitespace character after the last token).
    """
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ImageFormatError(f"{path}: header ended early")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1


def read_pgm(path):
    """Read a binary PGM file. Returns ``(array, maxval)``."""
    data = open(path, "rb").read()
    if data[:2] != b"P5":
        raise ImageFormatError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    (_, w, h, maxval), start = _header_tokens(data, path, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    payload = data[start:start + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"{path}: expected {need} payload bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    if maxval > 255:
        arr = arr.astype(np.uint16)
    return arr, maxval


def write_pgm(path, arr, maxval=255):
    """Write a 2-D unsigned integer array as binary PGM."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("PGM output needs a 2-D array")
    h, w = arr.shape
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        f.write(arr.astype(dtype).tobytes())


def read_pfm(path):
    """Read a grayscale little-endian PFM file as float32."""
    data = open(path, "rb").read()
    if data[:2] != b"Pf":
        raise ImageFormatError(f"{path}: not a grayscale PFM (magic {data[:2]!r})")
    (_, w, h, scale), start = _header_tokens(data, path, 4)
    w, h = int(w), int(h)
    if float(scale) >= 0:
        raise ImageFormatError(f"{path}: big-endian PFM not supported")
    need = w * h * 4
    payload = data[start:start + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"{path}: expected {need} payload bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return arr[::-1].copy()


def write_pfm(path, arr):
    """Write a 2-D float array as grayscale little-endian PFM."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("PFM output needs a 2-D array")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode())
        f.write(arr[::-1].astype("<f4").tobytes())


def phase_to_gray16(phase):
    """Map phase values in [-pi, pi] linearly onto uint16 [0, 65535]."""
    t = (np.asarray(phase) + np.pi) / (2 * np.pi)
    return np.clip(np.round(t * 65535), 0, 65535).astype(np.uint16)
