"""Grayscale rasters and pixel-domain preprocessing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from semcrypt.errors import DataError, DimensionMismatch

DEFAULT_SIZE = 64


@dataclass(eq=False)
class ImageBuffer:
    """A 2-D grayscale raster with 8- or 16-bit unsigned samples.

    ``pixels`` is a row-major ``(height, width)`` array; it is converted to
    ``uint8``/``uint16`` on construction and every sample is range-checked.
    """

    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise DataError(f"bit depth must be 8 or 16, got {self.bit_depth}")
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > self.max_value):
            raise DataError(f"samples out of range for {self.bit_depth}-bit image")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        self.pixels = np.ascontiguousarray(arr, dtype=dtype)

    @classmethod
    def from_samples(cls, width: int, height: int, bit_depth: int, samples) -> "ImageBuffer":
        arr = np.asarray(samples)
        if arr.size != width * height:
            raise DataError(f"{arr.size} samples for a {width}x{height} image")
        return cls(arr.reshape(height, width), bit_depth)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def samples(self) -> np.ndarray:
        return self.pixels.reshape(-1)

    def raw_bytes(self) -> bytes:
        """Samples as little-endian bytes, row-major."""
        if self.bit_depth == 8:
            return self.pixels.tobytes()
        return self.pixels.astype("<u2").tobytes()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.bit_depth == other.bit_depth
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height}, {self.bit_depth}-bit)"


@dataclass(frozen=True)
class Window:
    center: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("window width must be positive")


def default_window(bit_depth: int) -> Window:
    """Full-range window used when a file carries no window tags."""
    return Window(center=float(1 << (bit_depth - 1)), width=float(1 << bit_depth))


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def normalize_to_8bit(img: ImageBuffer, window: Window | None = None) -> ImageBuffer:
    w = window or default_window(img.bit_depth)
    lo = w.center - w.width / 2.0
    v = 255.0 * (img.pixels.astype(np.float64) - lo) / w.width
    return ImageBuffer(np.clip(_round_half_up(v), 0, 255), 8)


def resize_bilinear(img: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    if (out_w, out_h) == (img.width, img.height):
        return ImageBuffer(img.pixels.copy(), img.bit_depth)
    src = img.pixels.astype(np.float64)

    def axis(n_in: int, n_out: int):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    y0, y1, fy = axis(img.height, out_h)
    x0, x1, fx = axis(img.width, out_w)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bottom * fy[:, None]
    return ImageBuffer(np.clip(_round_half_up(out), 0, img.max_value), img.bit_depth)


def preprocess(img: ImageBuffer, size: int = DEFAULT_SIZE, window: Window | None = None) -> ImageBuffer:
    """Default pipeline input: windowed to 8 bits, then resized to ``size``x``size``."""
    out = img if img.bit_depth == 8 and window is None else normalize_to_8bit(img, window)
    return resize_bilinear(out, size, size)


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    if a.pixels.shape != b.pixels.shape or a.bit_depth != b.bit_depth:
        raise DimensionMismatch(f"{a!r} vs {b!r}")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(a.max_value ** 2 / mse)


# PGM (P5) I/O. 16-bit samples are big-endian per the netpbm convention.

def encode_pgm(img: ImageBuffer) -> bytes:
    header = f"P5\n{img.width} {img.height}\n{img.max_value}\n".encode("ascii")
    body = img.pixels.tobytes() if img.bit_depth == 8 else img.pixels.astype(">u2").tobytes()
    return header + body


def decode_pgm(data: bytes) -> ImageBuffer:
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P5":
        raise DataError("not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise DataError("bad PGM header field") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataError("PGM header field out of range")
    bit_depth = 8 if maxval < 256 else 16
    dtype = np.uint8 if bit_depth == 8 else np.dtype(">u2")
    count = width * height
    need = count * (1 if bit_depth == 8 else 2)
    if len(data) - pos < need:
        raise DataError("truncated PGM raster")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return ImageBuffer(arr.reshape(height, width).astype(np.uint16 if bit_depth == 16 else np.uint8), bit_depth)


def read_pgm(path: str | Path) -> ImageBuffer:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, img: ImageBuffer) -> None:
    Path(path).write_bytes(encode_pgm(img))
