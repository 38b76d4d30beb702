import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semcrypt.errors import BlockSizeMismatch
from semcrypt.image import ImageBuffer
from semcrypt.leakage import ssim
from semcrypt.mask import (
    KeyStream,
    MaskKey,
    MaskPlan,
    apply_mask,
    apply_mask_batch,
    derive_mask_plan,
    invert_mask,
)
from semcrypt.phantom import phantom_corpus
from semcrypt.rng import Xoshiro256


def key(i: int) -> MaskKey:
    return MaskKey(i.to_bytes(32, "little"))


def test_plan_deterministic_and_bijective():
    a = derive_mask_plan(key(1), 64, 64, 8)
    assert a == derive_mask_plan(key(1), 64, 64, 8)
    assert sorted(a.permutation) == list(range(64))
    assert len(a.rotations) == len(a.negations) == 64


def test_single_block_plan():
    plan = derive_mask_plan(key(3), 16, 16, 16)
    assert plan.permutation == (0,)


def test_fixed_points_match_uniform_permutations():
    n, keys = 64, 1000
    fixed = [sum(i == p for i, p in enumerate(derive_mask_plan(key(k), 64, 64).permutation)) for k in range(keys)]
    rate = np.mean(fixed) / n
    # fixed-point count of a uniform permutation has mean 1 and variance 1
    sigma = 1 / np.sqrt(keys) / n
    assert abs(rate - 1 / n) <= 3 * sigma


def test_keystream_matches_sha256_counter_mode():
    import hashlib
    import struct

    k = bytes(range(32))
    ks = KeyStream(k)
    expect = b"".join(hashlib.sha256(k + struct.pack("<Q", c)).digest() for c in range(3))
    assert ks.read(70) + ks.read(26) == expect


def test_keystream_below_is_unbiased_enough():
    ks = KeyStream(bytes(32))
    counts = np.bincount([ks.below(3) for _ in range(3000)], minlength=3)
    assert counts.min() > 900


def test_identity_plan_is_identity():
    img = ImageBuffer(np.arange(256).reshape(16, 16))
    assert apply_mask(img, MaskPlan.identity(16, 16, 4)) == img


def test_rotation_and_negation_semantics():
    img = ImageBuffer(np.array([[1, 2], [3, 4]]))
    plan = MaskPlan(2, 1, 1, (0,), (1,), (True,))
    # one quarter turn counter-clockwise, then v -> 255 - v
    assert apply_mask(img, plan).pixels.tolist() == [[253, 251], [254, 252]]


@given(hnp.arrays(np.uint16, (16, 24)), st.integers(0, 2**32), st.sampled_from([1, 2, 4, 8]))
def test_round_trip(arr, seed, block):
    img = ImageBuffer(arr, 16)
    plan = derive_mask_plan(key(seed), 24, 16, block)
    assert invert_mask(apply_mask(img, plan), plan) == img


def test_composition_and_constant_image():
    rng = np.random.default_rng(1)
    img = ImageBuffer(rng.integers(0, 256, (32, 32)))
    p, q = derive_mask_plan(key(10), 32, 32), derive_mask_plan(key(11), 32, 32)
    assert invert_mask(invert_mask(apply_mask(apply_mask(img, p), q), q), p) == img
    const = ImageBuffer(np.full((32, 32), 9))
    assert invert_mask(apply_mask(const, p), p) == const


def test_histogram_preserved_without_negation():
    rng = np.random.default_rng(2)
    img = ImageBuffer(rng.integers(0, 256, (64, 64)))
    p = derive_mask_plan(key(4), 64, 64)
    p = MaskPlan(p.block_size, p.blocks_x, p.blocks_y, p.permutation, p.rotations, (False,) * 64)
    out = apply_mask(img, p)
    assert np.array_equal(np.bincount(out.samples, minlength=256), np.bincount(img.samples, minlength=256))


def test_key_sensitivity():
    rng = Xoshiro256(8)
    agree = []
    for _ in range(200):
        k = bytearray(rng.random_bytes(32))
        a = derive_mask_plan(MaskKey(bytes(k)), 64, 64).permutation
        bit = rng.below(256)
        k[bit // 8] ^= 1 << (bit % 8)
        b = derive_mask_plan(MaskKey(bytes(k)), 64, 64).permutation
        agree.append(np.mean(np.array(a) == np.array(b)))
    assert np.mean(agree) < 0.10


def test_masked_ssim_low_on_phantoms():
    images, _ = phantom_corpus(34, seed=12)
    scores = [ssim(im, apply_mask(im, derive_mask_plan(key(i), 64, 64, 8))) for i, im in enumerate(images[:100])]
    assert np.mean(scores) < 0.35


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    stack = rng.integers(0, 256, (5, 32, 32))
    plan = derive_mask_plan(key(5), 32, 32, 8)
    batch = apply_mask_batch(stack, plan, 255)
    for i in range(5):
        assert np.array_equal(batch[i], apply_mask(ImageBuffer(stack[i]), plan).pixels)


def test_block_size_errors():
    with pytest.raises(BlockSizeMismatch):
        derive_mask_plan(key(1), 64, 60, 8)
    plan = derive_mask_plan(key(1), 64, 64, 8)
    with pytest.raises(BlockSizeMismatch):
        apply_mask(ImageBuffer(np.zeros((32, 32))), plan)


def test_key_from_text():
    assert MaskKey.from_text("00" * 32).key == bytes(32)
    assert len(MaskKey.from_text("correct horse").key) == 32
    assert MaskKey.from_text("a") == MaskKey.from_text("a")
