import numpy as np
import pytest

from semcrypt.phantom import PhantomClass, PhantomSpec, phantom_corpus, phantom_generate


def test_deterministic():
    spec = PhantomSpec(PhantomClass.NODULE, size=64, seed=123)
    assert phantom_generate(spec) == phantom_generate(spec)


def test_seed_changes_image():
    a = phantom_generate(PhantomSpec(PhantomClass.NODULE, seed=1))
    b = phantom_generate(PhantomSpec(PhantomClass.NODULE, seed=2))
    assert a != b


def test_noise_free_clear_field_is_smooth():
    img = phantom_generate(PhantomSpec(PhantomClass.CLEAR_FIELD, size=64, seed=5, noise_sigma=0.0))
    px = img.pixels.astype(int)
    assert px.max() - px.min() <= img.max_value
    # soft edges: neighbouring pixels never jump by more than a few levels
    assert np.abs(np.diff(px, axis=0)).max() < 40
    assert np.abs(np.diff(px, axis=1)).max() < 40


def test_nodule_brighter_than_clear_field():
    images, labels = phantom_corpus(1000, seed=3, size=16)
    labels = np.array(labels)
    means = np.array([im.pixels.mean() for im in images])
    assert means[labels == PhantomClass.NODULE].mean() > means[labels == PhantomClass.CLEAR_FIELD].mean()


def test_corpus_balanced_and_interleaved():
    images, labels = phantom_corpus(4, seed=0, size=32)
    assert labels == [0, 1, 2] * 4
    assert all(im.width == 32 for im in images)


@pytest.mark.parametrize("bit_depth", [8, 16])
def test_bit_depths(bit_depth):
    img = phantom_generate(PhantomSpec(PhantomClass.LINEAR_OPACITY, seed=9, bit_depth=bit_depth))
    assert img.bit_depth == bit_depth
    assert img.pixels.max() > (1 << bit_depth) // 2


def test_spec_validation():
    with pytest.raises(ValueError):
        PhantomSpec(PhantomClass.NODULE, size=8)
    with pytest.raises(ValueError):
        PhantomSpec(PhantomClass.NODULE, noise_sigma=1.0)
    assert PhantomClass.parse("Linear-Opacity") is PhantomClass.LINEAR_OPACITY
    with pytest.raises(ValueError):
        PhantomClass.parse("effusion")
