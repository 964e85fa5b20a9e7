"""Binary portable pixmap / graymap I/O.

Frames are stored as 8-bit P6 pixmaps, label masks as P5 graymaps with the
label value as the gray level.  Writing is byte-deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an [H,W,3] uint8 array as a binary P6 file."""
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise FormatError(f"P6 writer expects [H,W,3] uint8, got {a.shape} {a.dtype}")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(a).tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    """Write an [H,W] array of values in [0,255] as a binary P5 file."""
    a = np.asarray(gray)
    if a.ndim != 2:
        raise FormatError(f"P5 writer expects [H,W], got shape {a.shape}")
    if a.min() < 0 or a.max() > 255:
        raise FormatError("P5 values must lie in [0,255]")
    a = a.astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(a).tobytes())


def _read_header(f, magic: bytes):
    if f.read(2) != magic:
        raise FormatError(f"bad magic, expected {magic.decode()}")
    fields = []
    while len(fields) < 3:
        tok = b""
        ch = f.read(1)
        # skip whitespace and comment lines between header tokens
        while ch.isspace():
            ch = f.read(1)
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        while ch and not ch.isspace():
            tok += ch
            ch = f.read(1)
        if not tok:
            raise FormatError("truncated header")
        fields.append(tok)
    try:
        w, h, maxval = (int(t) for t in fields)
    except ValueError as exc:
        raise FormatError(f"non-numeric header field: {exc}") from exc
    if w < 1 or h < 1 or maxval != 255:
        raise FormatError(f"unsupported header w={w} h={h} maxval={maxval}")
    return w, h


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file into an [H,W,3] uint8 array."""
    with open(path, "rb") as f:
        w, h = _read_header(f, b"P6")
        data = f.read(w * h * 3)
    if len(data) != w * h * 3:
        raise FormatError(f"P6 payload truncated in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file into an [H,W] uint8 array."""
    with open(path, "rb") as f:
        w, h = _read_header(f, b"P5")
        data = f.read(w * h)
    if len(data) != w * h:
        raise FormatError(f"P5 payload truncated in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)
