"""Keyed, invertible block scrambling: the masked image domain.

The image is cut into ``B x B`` blocks. Block ``i`` is rotated by
``90 * rotations[i]`` degrees (counter-clockwise), negated (``v -> MAX - v``)
when ``negations[i]`` is set, and written to block slot ``permutation[i]``.

Everything is drawn from a SHA-256 counter-mode keystream
``SHA-256(key || counter_u64_le)``: first the Fisher-Yates permutation
(rejection-sampled 32-bit draws), then 2 bits per block of rotation, then
1 bit per block of negation. This is a privacy transform, not a cipher.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from semcrypt.errors import BlockSizeMismatch, UsageError
from semcrypt.image import ImageBuffer

DEFAULT_BLOCK = 8
KEY_LEN = 32


@dataclass(frozen=True)
class MaskKey:
    key: bytes

    def __post_init__(self):
        if len(self.key) != KEY_LEN:
            raise ValueError(f"mask key must be {KEY_LEN} bytes")

    @classmethod
    def from_text(cls, text: str) -> "MaskKey":
        """64 hex digits are taken literally; anything else is hashed with SHA-256."""
        text = text.strip()
        if not text:
            raise UsageError("mask key must not be empty")
        if len(text) == 2 * KEY_LEN:
            try:
                return cls(bytes.fromhex(text))
            except ValueError:
                pass
        return cls(hashlib.sha256(text.encode("utf-8")).digest())


class KeyStream:
    def __init__(self, key: bytes):
        self._key = bytes(key)
        self._counter = 0
        self._buf = b""
        self._pos = 0
        self._bitbuf = 0
        self._nbits = 0

    def read(self, n: int) -> bytes:
        while len(self._buf) - self._pos < n:
            block = hashlib.sha256(self._key + struct.pack("<Q", self._counter)).digest()
            self._counter += 1
            self._buf = self._buf[self._pos:] + block
            self._pos = 0
        out = self._buf[self._pos : self._pos + n]
        self._pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def below(self, n: int) -> int:
        """Uniform in ``[0, n)`` by rejection, no modulo bias."""
        limit = (1 << 32) - (1 << 32) % n
        while True:
            w = self.u32()
            if w < limit:
                return w % n

    def bits(self, k: int) -> int:
        """``k`` bits, least-significant first within each keystream byte."""
        while self._nbits < k:
            self._bitbuf |= self.read(1)[0] << self._nbits
            self._nbits += 8
        out = self._bitbuf & ((1 << k) - 1)
        self._bitbuf >>= k
        self._nbits -= k
        return out


@dataclass(frozen=True)
class MaskPlan:
    block_size: int
    blocks_x: int
    blocks_y: int
    permutation: tuple[int, ...]
    rotations: tuple[int, ...]
    negations: tuple[bool, ...]

    def __post_init__(self):
        n = self.blocks_x * self.blocks_y
        if not (len(self.permutation) == len(self.rotations) == len(self.negations) == n):
            raise ValueError("plan schedules must have one entry per block")
        if sorted(self.permutation) != list(range(n)):
            raise ValueError("permutation is not a bijection")
        if any(r not in (0, 1, 2, 3) for r in self.rotations):
            raise ValueError("rotations must be quarter turns 0..3")

    @property
    def block_count(self) -> int:
        return self.blocks_x * self.blocks_y

    @classmethod
    def identity(cls, width: int, height: int, block_size: int) -> "MaskPlan":
        bx, by = _grid(width, height, block_size)
        n = bx * by
        return cls(block_size, bx, by, tuple(range(n)), (0,) * n, (False,) * n)


def _grid(width: int, height: int, block_size: int) -> tuple[int, int]:
    if block_size < 1 or width % block_size or height % block_size:
        raise BlockSizeMismatch(f"block size {block_size} does not divide {width}x{height}")
    return width // block_size, height // block_size


def derive_mask_plan(key: MaskKey, width: int, height: int, block_size: int = DEFAULT_BLOCK) -> MaskPlan:
    bx, by = _grid(width, height, block_size)
    n = bx * by
    ks = KeyStream(key.key)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = ks.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    rotations = tuple(ks.bits(2) for _ in range(n))
    negations = tuple(bool(ks.bits(1)) for _ in range(n))
    return MaskPlan(block_size, bx, by, tuple(perm), rotations, negations)


def _to_blocks(img: ImageBuffer, plan: MaskPlan) -> np.ndarray:
    if (img.width, img.height) != (plan.blocks_x * plan.block_size, plan.blocks_y * plan.block_size):
        raise BlockSizeMismatch(f"plan for {plan.blocks_x}x{plan.blocks_y} blocks of {plan.block_size} "
                                f"does not fit a {img.width}x{img.height} image")
    b = plan.block_size
    return img.pixels.reshape(plan.blocks_y, b, plan.blocks_x, b).swapaxes(1, 2).reshape(-1, b, b)


def _from_blocks(blocks: np.ndarray, plan: MaskPlan, bit_depth: int) -> ImageBuffer:
    b = plan.block_size
    px = blocks.reshape(plan.blocks_y, plan.blocks_x, b, b).swapaxes(1, 2)
    return ImageBuffer(px.reshape(plan.blocks_y * b, plan.blocks_x * b), bit_depth)


def _rotate(blocks: np.ndarray, turns: np.ndarray) -> np.ndarray:
    out = blocks.copy()
    for k in (1, 2, 3):
        sel = (turns % 4) == k
        if sel.any():
            out[sel] = np.rot90(blocks[sel], k, axes=(1, 2))
    return out


def apply_mask(img: ImageBuffer, plan: MaskPlan) -> ImageBuffer:
    blocks = _rotate(_to_blocks(img, plan), np.array(plan.rotations))
    neg = np.array(plan.negations)
    blocks[neg] = img.max_value - blocks[neg]
    out = np.empty_like(blocks)
    out[np.array(plan.permutation)] = blocks
    return _from_blocks(out, plan, img.bit_depth)


def invert_mask(img: ImageBuffer, plan: MaskPlan) -> ImageBuffer:
    blocks = _to_blocks(img, plan)[np.array(plan.permutation)]
    neg = np.array(plan.negations)
    blocks[neg] = img.max_value - blocks[neg]
    return _from_blocks(_rotate(blocks, -np.array(plan.rotations)), plan, img.bit_depth)


def apply_mask_batch(images: np.ndarray, plan: MaskPlan, max_value: int) -> np.ndarray:
    """Mask a ``(N, H, W)`` stack with one plan; the CNN's masked domain."""
    n = images.shape[0]
    b = plan.block_size
    blocks = images.reshape(n, plan.blocks_y, b, plan.blocks_x, b).swapaxes(2, 3).reshape(n, -1, b, b)
    rotated = blocks.copy()
    for i, k in enumerate(plan.rotations):
        if k:
            rotated[:, i] = np.rot90(blocks[:, i], k, axes=(1, 2))
    neg = np.array(plan.negations)
    rotated[:, neg] = max_value - rotated[:, neg]
    out = np.empty_like(rotated)
    out[:, np.array(plan.permutation)] = rotated
    return out.reshape(n, plan.blocks_y, plan.blocks_x, b, b).swapaxes(2, 3).reshape(images.shape)
