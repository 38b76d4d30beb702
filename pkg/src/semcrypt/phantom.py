"""Synthetic chest-radiograph phantoms used as a desk-scale stand-in for real scans.

Every phantom shares a chest-like background: a mid-gray body field with two
darker lung ellipses whose intensity ramps up towards the bottom of the
image. The ellipse geometry is jittered per seed so left/right symmetry (and
thus the perceptual hash) varies between phantoms. On top of that:

* ``NODULE``: a bright filled disc,
* ``LINEAR_OPACITY``: a bright straight band at a random angle,
* ``CLEAR_FIELD``: nothing but the background.

All shape boundaries are soft (a smoothstep ramp ``size/16`` pixels wide),
as anatomy is on a radiograph. Gaussian noise with
``sigma = noise_sigma * MAX`` is added last and the result is rounded and
clamped.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from semcrypt.image import ImageBuffer
from semcrypt.rng import Xoshiro256

DEFAULT_NOISE = 0.02

BODY_LEVEL = 0.55
LUNG_TOP = 0.25
LUNG_RAMP = 0.20
NODULE_GAIN = 0.35
BAND_GAIN = 0.30


def _soft(depth: np.ndarray, edge: float) -> np.ndarray:
    """Coverage in [0, 1] from signed depth inside a shape (pixels)."""
    t = np.clip(0.5 + depth / edge, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


class PhantomClass(enum.IntEnum):
    NODULE = 0
    LINEAR_OPACITY = 1
    CLEAR_FIELD = 2

    @classmethod
    def parse(cls, name: str) -> "PhantomClass":
        key = name.strip().lower().replace("-", "_")
        aliases = {"nodule": cls.NODULE, "linear": cls.LINEAR_OPACITY,
                   "linear_opacity": cls.LINEAR_OPACITY, "linearopacity": cls.LINEAR_OPACITY,
                   "clear": cls.CLEAR_FIELD, "clear_field": cls.CLEAR_FIELD,
                   "clearfield": cls.CLEAR_FIELD}
        if key not in aliases:
            raise ValueError(f"unknown phantom class {name!r}")
        return aliases[key]


NUM_CLASSES = len(PhantomClass)


@dataclass(frozen=True)
class PhantomSpec:
    class_label: PhantomClass
    size: int = 64
    seed: int = 0
    noise_sigma: float = DEFAULT_NOISE
    bit_depth: int = 8

    def __post_init__(self):
        if self.size < 16:
            raise ValueError("phantom size must be >= 16")
        if not 0.0 <= self.noise_sigma < 1.0:
            raise ValueError("noise_sigma must lie in [0, 1)")
        if self.bit_depth not in (8, 16):
            raise ValueError("bit_depth must be 8 or 16")
        object.__setattr__(self, "class_label", PhantomClass(self.class_label))


def phantom_generate(spec: PhantomSpec) -> ImageBuffer:
    n = spec.size
    rng = Xoshiro256(spec.seed)
    max_value = (1 << spec.bit_depth) - 1

    coords = np.arange(n, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    yn, xn = yy / (n - 1), xx / (n - 1)

    edge = n / 16
    field = np.full((n, n), BODY_LEVEL)
    lung = LUNG_TOP + LUNG_RAMP * yn
    for side in (-1.0, 1.0):
        cx = 0.5 + side * rng.uniform_range(0.18, 0.26)
        cy = rng.uniform_range(0.45, 0.55)
        ax = rng.uniform_range(0.14, 0.20)
        ay = rng.uniform_range(0.30, 0.38)
        rho = np.sqrt(((xn - cx) / ax) ** 2 + ((yn - cy) / ay) ** 2)
        cover = _soft((1.0 - rho) * min(ax, ay) * (n - 1), edge)
        field = field + cover * (lung - field)

    if spec.class_label is PhantomClass.NODULE:
        r = rng.uniform_range(n / 10, n / 5)
        cx = rng.uniform_range(r, n - 1 - r)
        cy = rng.uniform_range(r, n - 1 - r)
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        field = field + NODULE_GAIN * _soft(r - dist, edge)
    elif spec.class_label is PhantomClass.LINEAR_OPACITY:
        theta = rng.uniform_range(0.0, math.pi)
        width = rng.uniform_range(n / 16, n / 8)
        px = rng.uniform_range(0.35, 0.65) * (n - 1)
        py = rng.uniform_range(0.35, 0.65) * (n - 1)
        dist = np.abs((xx - px) * math.sin(theta) - (yy - py) * math.cos(theta))
        field = field + BAND_GAIN * _soft(width / 2 - dist, edge)

    values = field * max_value
    if spec.noise_sigma > 0:
        values = values + spec.noise_sigma * max_value * rng.normals(n * n).reshape(n, n)
    return ImageBuffer(np.clip(np.floor(values + 0.5), 0, max_value), spec.bit_depth)


def phantom_corpus(count_per_class: int, seed: int, size: int = 64,
                   noise_sigma: float = DEFAULT_NOISE, bit_depth: int = 8):
    """Balanced corpus, classes interleaved: returns ``(images, labels)``.

    Phantom ``i`` uses seed ``seed * 1_000_003 + i`` so corpora drawn from
    different experiment seeds do not overlap.
    """
    images, labels = [], []
    for i in range(count_per_class * NUM_CLASSES):
        label = PhantomClass(i % NUM_CLASSES)
        spec = PhantomSpec(label, size, (seed * 1_000_003 + i) & ((1 << 64) - 1), noise_sigma, bit_depth)
        images.append(phantom_generate(spec))
        labels.append(int(label))
    return images, labels
