import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra import numpy as hnp

from semcrypt.crypto import encrypt_container, parse_container
from semcrypt.codec import encode
from semcrypt.errors import DimensionMismatch, EmptyInput, ImageTooSmall
from semcrypt.image import ImageBuffer
from semcrypt.leakage import (
    Verdict,
    audit,
    byte_entropy,
    chi2_uniformity_pvalue,
    hamming,
    phash,
    render_cipher_as_image,
    ssim,
)
from semcrypt.mask import MaskKey, apply_mask, derive_mask_plan
from semcrypt.phantom import PhantomClass, PhantomSpec, phantom_corpus, phantom_generate
from semcrypt.rng import Xoshiro256

pairs = hnp.arrays(np.uint8, (2, 16, 19))


def test_ssim_identity_is_exactly_one(phantoms):
    for im in phantoms[0][:5]:
        assert ssim(im, im) == 1.0


def test_ssim_matches_reference_implementation():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.integers(0, 256, (30, 27))
        b = np.clip(a + rng.integers(-40, 40, a.shape), 0, 255)
        ref = skm.structural_similarity(a.astype(float), b.astype(float), gaussian_weights=True, sigma=1.5,
                                        use_sample_covariance=False, data_range=255)
        assert ssim(ImageBuffer(a), ImageBuffer(b)) == pytest.approx(ref, abs=1e-12)


@given(pairs)
def test_ssim_symmetric_and_bounded(arr):
    a, b = ImageBuffer(arr[0]), ImageBuffer(arr[1])
    s = ssim(a, b)
    assert abs(s - ssim(b, a)) <= 1e-9
    assert -1.0 <= s <= 1.0


def test_ssim_negative_for_inverted(phantoms):
    for im in phantoms[0][:20]:
        assert ssim(im, ImageBuffer(255 - im.pixels)) < 0


def test_ssim_errors():
    with pytest.raises(DimensionMismatch):
        ssim(ImageBuffer(np.zeros((12, 12))), ImageBuffer(np.zeros((12, 13))))
    with pytest.raises(ImageTooSmall):
        ssim(ImageBuffer(np.zeros((10, 12))), ImageBuffer(np.zeros((10, 12))))


def test_ssim_one_only_for_identical(phantoms):
    images = phantoms[0]
    for a, b in zip(images, images[1:]):
        assert ssim(a, b) < 1.0


def test_phash_identity_and_noise_robustness():
    rng = Xoshiro256(50)
    dists = []
    for i in range(50):
        clean = phantom_generate(PhantomSpec(PhantomClass(i % 3), seed=i, noise_sigma=0.0))
        noise = rng.normals(64 * 64).reshape(64, 64) * 0.02 * 255
        noisy = ImageBuffer(np.clip(np.floor(clean.pixels + noise + 0.5), 0, 255))
        assert hamming(phash(clean), phash(clean)) == 0
        dists.append(hamming(phash(clean), phash(noisy)))
    assert max(dists) <= 10


@given(hnp.arrays(np.uint8, (24, 24)))
def test_phash_brightness_shift(arr):
    arr = np.clip(arr, 1, 254).astype(np.int64)
    base = phash(ImageBuffer(arr))
    for delta in (-1, 1):
        assert hamming(base, phash(ImageBuffer(arr + delta))) <= 2


def test_phash_bit_layout():
    h = phash(ImageBuffer(np.tile(np.arange(64, dtype=np.uint8) * 4, (64, 1))))
    assert 0 <= h < 1 << 64
    with pytest.raises(ImageTooSmall):
        phash(ImageBuffer(np.zeros((7, 9))))


def test_entropy_examples():
    assert byte_entropy(bytes(100)) == 0.0
    assert byte_entropy(bytes(range(256))) == 8.0
    with pytest.raises(EmptyInput):
        byte_entropy(b"")
    assert byte_entropy(Xoshiro256(1).random_bytes(1 << 16)) >= 7.99


def test_chi2_pvalue():
    assert chi2_uniformity_pvalue(bytes(range(256)) * 64) == pytest.approx(1.0)
    assert chi2_uniformity_pvalue(bytes(4096)) < 1e-100
    with pytest.raises(EmptyInput):
        chi2_uniformity_pvalue(b"")


def test_render_cipher():
    assert render_cipher_as_image(b"\x01\x02\x03\x04", 2, 2).pixels.tolist() == [[1, 2], [3, 4]]
    assert render_cipher_as_image(b"\x05", 2, 2).samples.tolist() == [5, 0, 0, 0]
    assert render_cipher_as_image(b"abc", 3, 1) == render_cipher_as_image(b"abc", 3, 1)


@pytest.fixture(scope="module")
def pipeline_sample():
    plain = phantom_generate(PhantomSpec(PhantomClass.NODULE, size=256, seed=4))
    box = encrypt_container(encode(plain), "pw", rng=Xoshiro256(4))
    masked = apply_mask(plain, derive_mask_plan(MaskKey(bytes(32)), 256, 256, 32))
    return plain, parse_container(box).ciphertext, masked


def test_audit_passes_genuine_output(pipeline_sample):
    plain, cipher, masked = pipeline_sample
    report = audit(plain, cipher, masked)
    assert report.verdict is Verdict.PASS, report
    assert report.ssim_plain_vs_masked is not None
    assert report.to_dict()["verdict"] == "pass"


def test_audit_sabotage_modes(pipeline_sample):
    plain, cipher, _ = pipeline_sample
    identity = audit(plain, plain.raw_bytes())
    assert identity.verdict is Verdict.FAIL and not identity.flags["ssim"]
    zeros = audit(plain, bytes(len(cipher)))
    assert zeros.verdict is Verdict.FAIL and not zeros.flags["entropy"]
    # ECB-like: one constant 16-byte block XORed into every block
    pad = np.frombuffer(Xoshiro256(2).random_bytes(16), dtype=np.uint8)
    raw = np.frombuffer(plain.raw_bytes(), dtype=np.uint8).reshape(-1, 16) ^ pad
    ecb = audit(plain, raw.tobytes())
    assert ecb.verdict is Verdict.FAIL and not ecb.flags["entropy"]


def test_audit_on_16bit_plain():
    plain = phantom_generate(PhantomSpec(PhantomClass.CLEAR_FIELD, size=256, seed=1, bit_depth=16))
    report = audit(plain, Xoshiro256(3).random_bytes(40000))
    assert report.flags["entropy"] and report.flags["ssim"]
