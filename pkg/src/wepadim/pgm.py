"""Minimal binary PGM (P5) reader/writer.

Masks use maxval 255 (one byte per sample); heatmaps use maxval 65535 with
big-endian samples, per the Netpbm convention.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError, StorageError


def write_pgm(values: np.ndarray, path: str | Path, maxval: int = 255) -> None:
    if values.ndim != 2:
        raise FormatError("PGM payload must be 2-D")
    if maxval == 255:
        payload = values.astype(np.uint8).tobytes()
    elif maxval == 65535:
        payload = values.astype(">u2").tobytes()
    else:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    h, w = values.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise StorageError(f"cannot write PGM {path}: {exc}") from exc


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    """Returns (values, maxval); values are uint8 or uint16."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read PGM {path}: {exc}") from exc

    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed; a single whitespace byte precedes the raster
    pos = 0
    tokens = []
    while len(tokens) < 4:
        if pos >= len(raw):
            raise FormatError(f"{path}: truncated PGM header")
        ch = raw[pos : pos + 1]
        if ch == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                pos += 1
            tokens.append(raw[start:pos])
    pos += 1  # the single whitespace after maxval
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval == 255:
        dtype, itemsize = np.uint8, 1
    elif maxval == 65535:
        dtype, itemsize = np.dtype(">u2"), 2
    else:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    need = w * h * itemsize
    payload = raw[pos : pos + need]
    if len(payload) != need:
        raise StorageError(f"{path}: PGM payload truncated")
    values = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return values.astype(np.uint16) if maxval == 65535 else values.copy(), maxval
