"""Binary PGM (P5) / PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .texture import GrayFrame, RgbFrame


class PnmError(ValueError):
    pass


def _tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    # header tokens are whitespace separated; '#' starts a comment to end of line
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PnmError("truncated header")
        out.append(data[start:pos])
    return out, pos


def decode(data: bytes) -> GrayFrame | RgbFrame:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported magic {magic!r}; expected P5 or P6")
    (w, h, maxval), pos = _tokens(data, 3, 2)
    try:
        width, height, maxv = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PnmError(f"bad header value: {exc}") from None
    if width <= 0 or height <= 0:
        raise PnmError(f"bad dimensions {width}x{height}")
    if maxv != 255:
        raise PnmError(f"only maxval 255 is supported, got {maxv}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PnmError("missing whitespace after header")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = data[pos : pos + need]
    if len(body) != need:
        raise PnmError(f"expected {need} pixel bytes, got {len(body)}")
    px = np.frombuffer(body, dtype=np.uint8)
    if channels == 1:
        return GrayFrame(px.reshape(height, width))
    return RgbFrame(px.reshape(height, width, 3))


def encode(frame: GrayFrame | RgbFrame) -> bytes:
    magic = b"P5" if isinstance(frame, GrayFrame) else b"P6"
    header = magic + b"\n%d %d\n255\n" % (frame.width, frame.height)
    return header + frame.pixels.tobytes()


def read(path: str | os.PathLike) -> GrayFrame | RgbFrame:
    try:
        return decode(Path(path).read_bytes())
    except PnmError as exc:
        raise PnmError(f"{path}: {exc}") from None


def write(path: str | os.PathLike, frame: GrayFrame | RgbFrame) -> None:
    Path(path).write_bytes(encode(frame))
