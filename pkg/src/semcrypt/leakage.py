"""Leakage metrics: SSIM, perceptual hash, byte entropy, chi-square uniformity, and the audit gate."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dctn
from scipy.stats import chi2

from semcrypt.errors import DimensionMismatch, EmptyInput, ImageTooSmall
from semcrypt.image import ImageBuffer, normalize_to_8bit, resize_bilinear

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03

SSIM_GATE = 0.01
PHASH_GATE = 20
ENTROPY_GATE = 7.99
CHI2_GATE = 0.001


def _gaussian_kernel() -> np.ndarray:
    x = np.arange(WINDOW) - WINDOW // 2
    g = np.exp(-(x * x) / (2 * SIGMA * SIGMA))
    return g / g.sum()


_KERNEL = _gaussian_kernel()


def _filter_valid(x: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(x, WINDOW, axis=0) @ _KERNEL
    return sliding_window_view(rows, WINDOW, axis=1) @ _KERNEL


def ssim_map(a: ImageBuffer, b: ImageBuffer) -> np.ndarray:
    if a.pixels.shape != b.pixels.shape or a.bit_depth != b.bit_depth:
        raise DimensionMismatch(f"{a!r} vs {b!r}")
    if a.width < WINDOW or a.height < WINDOW:
        raise ImageTooSmall(f"SSIM needs at least {WINDOW}x{WINDOW}, got {a.width}x{a.height}")
    x = a.pixels.astype(np.float64)
    y = b.pixels.astype(np.float64)
    c1 = (K1 * a.max_value) ** 2
    c2 = (K2 * a.max_value) ** 2
    mx, my = _filter_valid(x), _filter_valid(y)
    vx = _filter_valid(x * x) - mx * mx
    vy = _filter_valid(y * y) - my * my
    cxy = _filter_valid(x * y) - mx * my
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean SSIM over all valid 11x11 Gaussian windows."""
    return float(ssim_map(a, b).mean())


def phash(img: ImageBuffer) -> int:
    """64-bit DCT hash; bit 63 is the DC term, bits follow row-major order of the 8x8 block."""
    if img.width < 8 or img.height < 8:
        raise ImageTooSmall("pHash needs at least 8x8")
    small = resize_bilinear(img, 32, 32).pixels.astype(np.float64)
    block = dctn(small, type=2, norm="ortho")[:8, :8].reshape(-1)
    median = np.median(block[1:])
    out = 0
    for bit in block > median:
        out = (out << 1) | int(bit)
    return out


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def byte_entropy(data: bytes) -> float:
    if not data:
        raise EmptyInput("entropy of an empty buffer")
    counts = np.bincount(np.frombuffer(bytes(data), dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(data)
    return float(max(0.0, -(p * np.log2(p)).sum()))


def chi2_uniformity_pvalue(data: bytes) -> float:
    """Upper-tail p-value of Pearson's chi-square against uniform bytes (255 dof)."""
    if not data:
        raise EmptyInput("chi-square of an empty buffer")
    counts = np.bincount(np.frombuffer(bytes(data), dtype=np.uint8), minlength=256)
    expected = len(data) / 256
    stat = float(((counts - expected) ** 2).sum() / expected)
    return float(chi2.sf(stat, 255))


def render_cipher_as_image(data: bytes, width: int, height: int) -> ImageBuffer:
    """First ``width*height`` bytes as 8-bit samples, row-major, zero-padded when short."""
    raw = np.zeros(width * height, dtype=np.uint8)
    head = np.frombuffer(bytes(data)[: width * height], dtype=np.uint8)
    raw[: head.size] = head
    return ImageBuffer(raw.reshape(height, width), 8)


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"


@dataclass(frozen=True)
class LeakageReport:
    ssim_plain_vs_cipher: float
    phash_distance: int
    cipher_entropy: float
    histogram_chi2_pvalue: float
    ssim_plain_vs_masked: float | None
    flags: dict = field(default_factory=dict)

    @property
    def verdict(self) -> Verdict:
        return Verdict.PASS if all(self.flags.values()) else Verdict.FAIL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def audit(plain: ImageBuffer, cipher_bytes: bytes, masked: ImageBuffer | None = None) -> LeakageReport:
    """Gate a ciphertext (and optionally report on a masked image) against its plaintext."""
    ref = plain if plain.bit_depth == 8 else normalize_to_8bit(plain)
    rendered = render_cipher_as_image(cipher_bytes, ref.width, ref.height)
    s = ssim(ref, rendered)
    dist = hamming(phash(ref), phash(rendered))
    ent = byte_entropy(cipher_bytes)
    pval = chi2_uniformity_pvalue(cipher_bytes)
    masked_ssim = None
    if masked is not None:
        masked_ssim = ssim(plain, masked)
    flags = {
        "ssim": s < SSIM_GATE,
        "phash": dist >= PHASH_GATE,
        "entropy": ent >= ENTROPY_GATE,
        "chi2": pval > CHI2_GATE,
    }
    if not all(math.isfinite(v) for v in (s, ent, pval)):
        flags = {k: False for k in flags}
    return LeakageReport(s, dist, ent, pval, masked_ssim, flags)
