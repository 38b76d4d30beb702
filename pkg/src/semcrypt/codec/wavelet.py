"""Multilevel lifting DWT (reversible 5/3, irreversible 9/7) and dead-zone quantization.

Coefficients are laid out Mallat-style in a single plane: after each level
the low-pass quadrant occupies the top-left ``ceil(h/2) x ceil(w/2)`` corner
and the next level recurses into it. Boundaries use whole-sample symmetric
extension, so any length >= 2 is supported.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from semcrypt.errors import DimensionTooSmall

ALPHA = -1.586134342
BETA = -0.052980118
GAMMA = 0.882911075
DELTA = 0.443506852
K = 1.230174105

MAX_LEVELS = 6


class Mode(enum.IntEnum):
    LOSSLESS_53 = 0
    LOSSY_97 = 1


class Subband(NamedTuple):
    name: str  # LL, HL, LH or HH
    level: int  # 1 is the finest decomposition
    rows: slice
    cols: slice


def max_levels(width: int, height: int) -> int:
    return min(MAX_LEVELS, int(np.floor(np.log2(min(width, height)))))


def subbands(width: int, height: int, levels: int) -> list[Subband]:
    """Subbands in stream order: LL of the deepest level, then HL/LH/HH coarse to fine."""
    dims = [(height, width)]
    for _ in range(levels):
        h, w = dims[-1]
        dims.append(((h + 1) // 2, (w + 1) // 2))
    lh, lw = dims[levels]
    bands = [Subband("LL", levels, slice(0, lh), slice(0, lw))]
    for level in range(levels, 0, -1):
        h, w = dims[level - 1]
        h_lo, w_lo = dims[level]
        bands.append(Subband("HL", level, slice(0, h_lo), slice(w_lo, w)))
        bands.append(Subband("LH", level, slice(h_lo, h), slice(0, w_lo)))
        bands.append(Subband("HH", level, slice(h_lo, h), slice(w_lo, w)))
    return bands


def _neighbours(v: np.ndarray, count: int, shift: int) -> tuple[np.ndarray, np.ndarray]:
    """Left/right neighbours of ``count`` positions taken from ``v`` (along axis 1).

    ``shift=0``: neighbours v[i-1], v[i] (update step, mirrored at the left);
    ``shift=1``: neighbours v[i], v[i+1] (predict step, mirrored at the right).
    """
    m = v.shape[1]
    if shift:
        left = v[:, :count]
        idx = np.minimum(np.arange(1, count + 1), m - 1)
        # mirror x[n] -> x[n-2]: the missing right even neighbour is the last even sample
        right = v[:, idx]
        return left, right
    li = np.arange(-1, count - 1)
    li[0] = 0
    ri = np.minimum(np.arange(count), m - 1)
    return v[:, li], v[:, ri]


def _fwd53(x: np.ndarray) -> np.ndarray:
    s = x[:, 0::2].copy()
    d = x[:, 1::2].copy()
    a, b = _neighbours(s, d.shape[1], 1)
    d -= (a + b) >> 1
    a, b = _neighbours(d, s.shape[1], 0)
    s += (a + b + 2) >> 2
    return np.concatenate([s, d], axis=1)


def _inv53(y: np.ndarray) -> np.ndarray:
    n = y.shape[1]
    ns = (n + 1) // 2
    s = y[:, :ns].copy()
    d = y[:, ns:].copy()
    a, b = _neighbours(d, ns, 0)
    s -= (a + b + 2) >> 2
    a, b = _neighbours(s, d.shape[1], 1)
    d += (a + b) >> 1
    out = np.empty_like(y)
    out[:, 0::2] = s
    out[:, 1::2] = d
    return out


def _fwd97(x: np.ndarray) -> np.ndarray:
    s = x[:, 0::2].astype(np.float64)
    d = x[:, 1::2].astype(np.float64)
    for coef_d, coef_s in ((ALPHA, BETA), (GAMMA, DELTA)):
        a, b = _neighbours(s, d.shape[1], 1)
        d += coef_d * (a + b)
        a, b = _neighbours(d, s.shape[1], 0)
        s += coef_s * (a + b)
    return np.concatenate([s / K, d * (K / 2)], axis=1)


def _inv97(y: np.ndarray) -> np.ndarray:
    n = y.shape[1]
    ns = (n + 1) // 2
    s = y[:, :ns] * K
    d = y[:, ns:] * (2 / K)
    for coef_d, coef_s in ((GAMMA, DELTA), (ALPHA, BETA)):
        a, b = _neighbours(d, ns, 0)
        s -= coef_s * (a + b)
        a, b = _neighbours(s, d.shape[1], 1)
        d -= coef_d * (a + b)
    out = np.empty((y.shape[0], n), dtype=np.float64)
    out[:, 0::2] = s
    out[:, 1::2] = d
    return out


def _check(shape: tuple[int, int], levels: int) -> None:
    if not 1 <= levels <= MAX_LEVELS:
        raise DimensionTooSmall(f"levels must be in 1..{MAX_LEVELS}, got {levels}")
    if min(shape) < (1 << levels):
        raise DimensionTooSmall(f"{shape[1]}x{shape[0]} plane too small for {levels} levels")


def dwt_forward(plane: np.ndarray, mode: Mode, levels: int) -> np.ndarray:
    """Forward transform; integer in/out for 5/3, float64 out for 9/7."""
    _check(plane.shape, levels)
    mode = Mode(mode)
    if mode is Mode.LOSSLESS_53:
        out, fwd = plane.astype(np.int64), _fwd53
    else:
        out, fwd = plane.astype(np.float64), _fwd97
    h, w = out.shape
    for _ in range(levels):
        region = fwd(out[:h, :w])
        out[:h, :w] = fwd(region.T).T
        h, w = (h + 1) // 2, (w + 1) // 2
    return out


def dwt_inverse(coeffs: np.ndarray, mode: Mode, levels: int) -> np.ndarray:
    _check(coeffs.shape, levels)
    mode = Mode(mode)
    if mode is Mode.LOSSLESS_53:
        out, inv = coeffs.astype(np.int64), _inv53
    else:
        out, inv = coeffs.astype(np.float64), _inv97
    dims = [out.shape]
    for _ in range(levels - 1):
        h, w = dims[-1]
        dims.append(((h + 1) // 2, (w + 1) // 2))
    for h, w in reversed(dims):
        region = inv(out[:h, :w].T).T
        out[:h, :w] = inv(region)
    return out


def step_size(base_qstep: float, level: int) -> float:
    """Per-subband step: finer quantization for coarser levels."""
    return base_qstep * 2.0 ** (-level)


def quantize(coeffs: np.ndarray, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("quantization step must be positive")
    c = np.asarray(coeffs, dtype=np.float64)
    return (np.sign(c) * np.floor(np.abs(c) / step)).astype(np.int64)


def dequantize(q: np.ndarray, step: float) -> np.ndarray:
    q = np.asarray(q, dtype=np.int64)
    return np.where(q == 0, 0.0, np.sign(q) * (np.abs(q) + 0.5) * step)
