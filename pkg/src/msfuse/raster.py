"""In-memory rasters and binary PGM (P5) / PPM (P6) files."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from msfuse import jsonio


class RasterFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Raster:
    """Row-major samples of shape ``(height, width, channels)``.

    ``uint8`` for 8-bit data, ``uint16`` for 16-bit (single channel only).
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3):
            raise ValueError(f"raster must be HxWx1 or HxWx3, got shape {a.shape}")
        if a.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"raster samples must be uint8 or uint16, got {a.dtype}")
        if a.dtype == np.uint16 and a.shape[2] != 1:
            raise ValueError("16-bit samples are only supported for single-channel rasters")
        if a.shape[0] == 0 or a.shape[1] == 0:
            raise ValueError("raster must be non-empty")
        object.__setattr__(self, "data", np.ascontiguousarray(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def depth(self) -> int:
        return 16 if self.data.dtype == np.uint16 else 8

    @property
    def maxval(self) -> int:
        return 65535 if self.depth == 16 else 255

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.data.dtype == other.data.dtype and np.array_equal(self.data, other.data)


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(buf: bytes, count: int):
    pos, out = 0, []
    for _ in range(count):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise RasterFormatError("truncated PNM header")
        out.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the samples
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise RasterFormatError("malformed PNM header terminator")
    return out, pos + 1


def decode_pnm(buf: bytes) -> Raster:
    tokens, offset = _header_tokens(buf, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise RasterFormatError(f"unsupported PNM magic {magic!r}; only binary P5/P6 are read")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise RasterFormatError("non-integer PNM header field") from None
    channels = 3 if magic == b"P6" else 1
    if w <= 0 or h <= 0:
        raise RasterFormatError(f"invalid PNM size {w}x{h}")
    if maxval == 255:
        dtype = np.dtype(np.uint8)
    elif maxval == 65535 and channels == 1:
        dtype = np.dtype(">u2")
    else:
        raise RasterFormatError(f"unsupported maxval {maxval} for {magic.decode()}")
    n = w * h * channels * dtype.itemsize
    payload = buf[offset : offset + n]
    if len(payload) != n:
        raise RasterFormatError(f"PNM payload has {len(payload)} bytes, expected {n}")
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w, channels)
    return Raster(data.astype(np.uint16) if maxval == 65535 else data.copy())


def encode_pnm(r: Raster) -> bytes:
    magic = b"P6" if r.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n%d\n" % (r.width, r.height, r.maxval)
    payload = r.data.astype(">u2").tobytes() if r.depth == 16 else r.data.tobytes()
    return header + payload


def read_pnm(path) -> Raster:
    return decode_pnm(Path(path).read_bytes())


def write_pnm(r: Raster, path) -> None:
    jsonio.write_atomic(path, encode_pnm(r))
