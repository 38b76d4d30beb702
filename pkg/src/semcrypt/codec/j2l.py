"""The ``.j2l`` codestream: wavelet coefficients, run-length tokens, range coding.

Layout (little-endian)::

    magic "J2KL" | version u8 = 1 | mode u8 | width u32 | height u32 |
    levels u8 | bit_depth u8 | base_qstep f32 | subband_count u8 |
    subband_count x (coded_len u32, payload)

Each subband is tokenised and range coded independently. Tokens are
varints (LEB128) whose first byte tells them apart:

* a non-zero coefficient ``v`` is ``varint(zigzag(v) + 1)`` (first byte >= 2),
* a single zero is the byte ``1``,
* a run of ``r >= 2`` zeros is the byte ``0`` followed by ``varint(r - 2)``.

A subband made only of zeros is stored with ``coded_len = 0`` and no payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from semcrypt.codec import rangecoder
from semcrypt.codec.wavelet import (
    MAX_LEVELS,
    Mode,
    dequantize,
    dwt_forward,
    dwt_inverse,
    max_levels,
    quantize,
    step_size,
    subbands,
)
from semcrypt.errors import BadMagic, CorruptPayload, DimensionTooSmall, HeaderFieldOutOfRange
from semcrypt.image import ImageBuffer

MAGIC = b"J2KL"
VERSION = 1
HEADER = struct.Struct("<4sBBIIBBfB")
LENGTH = struct.Struct("<I")

DEFAULT_LEVELS = 3
DEFAULT_QSTEP = 8.5
MAX_DIMENSION = 1 << 14
MAX_PIXELS = 1 << 24
_MAX_VARINT_SHIFT = 42


@dataclass(frozen=True)
class Codestream:
    mode: Mode
    width: int
    height: int
    levels: int
    bit_depth: int
    base_qstep: float
    subband_payloads: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        head = HEADER.pack(MAGIC, VERSION, int(self.mode), self.width, self.height,
                           self.levels, self.bit_depth, self.base_qstep, len(self.subband_payloads))
        body = b"".join(LENGTH.pack(len(p)) + p for p in self.subband_payloads)
        return head + body


def default_levels(width: int, height: int) -> int:
    return min(DEFAULT_LEVELS, max_levels(width, height))


# --- tokens -------------------------------------------------------------------

def _varints(values: np.ndarray) -> np.ndarray:
    """LEB128-encode a flat array of non-negative integers, concatenated."""
    v = values.astype(np.uint64)
    nbytes = np.ones(v.size, dtype=np.int64)
    rest = v >> np.uint64(7)
    while rest.any():
        nbytes += rest > 0
        rest >>= np.uint64(7)
    starts = np.cumsum(nbytes) - nbytes
    out = np.empty(int(nbytes.sum()), dtype=np.uint8)
    for k in range(int(nbytes.max(initial=0))):
        sel = nbytes > k
        low7 = (v[sel] >> np.uint64(7 * k)) & np.uint64(0x7F)
        more = (nbytes[sel] - 1 > k).astype(np.uint64) << np.uint64(7)
        out[starts[sel] + k] = (low7 | more).astype(np.uint8)
    return out


def tokenize(coeffs: np.ndarray) -> bytes:
    flat = np.asarray(coeffs, dtype=np.int64).reshape(-1)
    idx = np.flatnonzero(flat)
    ends = np.append(idx, flat.size)
    runs = ends - np.concatenate(([0], idx + 1))
    vals = flat[idx]
    zig = np.where(vals > 0, 2 * vals, -2 * vals - 1) + 1

    # per nonzero (plus the trailing run): [run marker, run varint, value varint]
    units = np.zeros((ends.size, 3), dtype=np.int64)
    present = np.zeros((ends.size, 3), dtype=bool)
    units[:, 0] = runs == 1
    present[:, 0] = runs >= 1
    units[:, 1] = runs - 2
    present[:, 1] = runs >= 2
    units[:-1, 2] = zig
    present[:-1, 2] = True
    return _varints(units[present]).tobytes()


def _decode_band(payload: bytes, count: int) -> np.ndarray:
    out = np.zeros(count, dtype=np.int64)
    if not payload:
        return out
    dec = rangecoder.Decoder(payload)
    symbol = dec.symbol

    def varint(first: int) -> int:
        value = first & 0x7F
        shift = 7
        b = first
        while b & 0x80:
            if shift > _MAX_VARINT_SHIFT:
                raise CorruptPayload("varint too long")
            b = symbol()
            value |= (b & 0x7F) << shift
            shift += 7
        return value

    i = 0
    while i < count:
        b = symbol()
        if b == 1:
            i += 1
        elif b == 0:
            run = varint(symbol()) + 2
            if i + run > count:
                raise CorruptPayload("zero run overflows subband")
            i += run
        else:
            z = varint(b) - 1
            if z == 0:
                raise CorruptPayload("zero coded as a value token")
            out[i] = z >> 1 if not z & 1 else -((z + 1) >> 1)
            i += 1
    if not dec.finished_cleanly():
        raise CorruptPayload("trailing bytes in subband payload")
    return out


# --- encode / decode ----------------------------------------------------------

def encode(img: ImageBuffer, mode: Mode = Mode.LOSSLESS_53, levels: int | None = None,
           base_qstep: float = DEFAULT_QSTEP) -> bytes:
    mode = Mode(mode)
    if levels is None:
        levels = default_levels(img.width, img.height)
    if not 1 <= levels <= MAX_LEVELS or levels > max_levels(img.width, img.height):
        raise DimensionTooSmall(f"{img.width}x{img.height} image cannot take {levels} levels")
    if mode is Mode.LOSSY_97 and not (base_qstep > 0 and math.isfinite(base_qstep)):
        raise ValueError("lossy mode needs a positive base_qstep")

    plane = img.pixels.astype(np.int64) - (1 << (img.bit_depth - 1))
    coeffs = dwt_forward(plane, mode, levels)
    payloads = []
    for band in subbands(img.width, img.height, levels):
        c = coeffs[band.rows, band.cols]
        if mode is Mode.LOSSY_97:
            c = quantize(c, step_size(base_qstep, band.level))
        if not c.any():
            payloads.append(b"")
            continue
        payloads.append(rangecoder.encode_bytes(tokenize(c)))
    qstep = float(np.float32(base_qstep)) if mode is Mode.LOSSY_97 else 0.0
    return Codestream(mode, img.width, img.height, levels, img.bit_depth, qstep,
                      tuple(payloads)).to_bytes()


def parse_codestream(data: bytes) -> Codestream:
    data = bytes(data)
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise BadMagic("not a J2KL codestream")
    magic, version, mode, width, height, levels, bit_depth, qstep, count = HEADER.unpack_from(data)
    if version != VERSION:
        raise BadMagic(f"unsupported J2KL version {version}")
    if mode not in (0, 1):
        raise HeaderFieldOutOfRange(f"mode {mode}")
    if not (1 <= width <= MAX_DIMENSION and 1 <= height <= MAX_DIMENSION) or width * height > MAX_PIXELS:
        raise HeaderFieldOutOfRange(f"dimensions {width}x{height}")
    if bit_depth not in (8, 16):
        raise HeaderFieldOutOfRange(f"bit depth {bit_depth}")
    if not 1 <= levels <= MAX_LEVELS or levels > max_levels(width, height):
        raise HeaderFieldOutOfRange(f"levels {levels} for {width}x{height}")
    if mode == Mode.LOSSLESS_53 and qstep != 0.0:
        raise HeaderFieldOutOfRange("lossless stream carries a quantization step")
    if mode == Mode.LOSSY_97 and not (qstep > 0 and math.isfinite(qstep)):
        raise HeaderFieldOutOfRange(f"quantization step {qstep}")
    if count != 3 * levels + 1:
        raise HeaderFieldOutOfRange(f"subband count {count} for {levels} levels")

    pos = HEADER.size
    payloads = []
    for _ in range(count):
        if pos + LENGTH.size > len(data):
            raise CorruptPayload("truncated subband table")
        (n,) = LENGTH.unpack_from(data, pos)
        pos += LENGTH.size
        if pos + n > len(data):
            raise CorruptPayload("subband payload runs past end of stream")
        payloads.append(data[pos : pos + n])
        pos += n
    if pos != len(data):
        raise CorruptPayload("trailing bytes after last subband")
    return Codestream(Mode(mode), width, height, levels, bit_depth, float(qstep), tuple(payloads))


def decode(data: bytes) -> ImageBuffer:
    cs = parse_codestream(data)
    coeffs = np.zeros((cs.height, cs.width), dtype=np.int64)
    plane = coeffs.astype(np.float64) if cs.mode is Mode.LOSSY_97 else coeffs
    for band, payload in zip(subbands(cs.width, cs.height, cs.levels), cs.subband_payloads):
        shape = (band.rows.stop - band.rows.start, band.cols.stop - band.cols.start)
        q = _decode_band(payload, shape[0] * shape[1]).reshape(shape)
        if cs.mode is Mode.LOSSY_97:
            plane[band.rows, band.cols] = dequantize(q, step_size(cs.base_qstep, band.level))
        else:
            plane[band.rows, band.cols] = q
    recon = dwt_inverse(plane, cs.mode, cs.levels)
    if cs.mode is Mode.LOSSY_97:
        recon = np.floor(recon + 0.5)
    max_value = (1 << cs.bit_depth) - 1
    recon = recon + (1 << (cs.bit_depth - 1))
    return ImageBuffer(np.clip(recon, 0, max_value), cs.bit_depth)
