"""Training configuration, the three input domains, and the SGD loop."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from semcrypt.cnn.model import CnnModel, default_model, he_uniform_init
from semcrypt.crypto import aes_cbc_encrypt
from semcrypt.mask import MaskKey, apply_mask_batch, derive_mask_plan
from semcrypt.phantom import DEFAULT_NOISE, phantom_corpus
from semcrypt.rng import Xoshiro256


class Domain(str, enum.Enum):
    PLAIN = "plain"
    MASKED = "masked"
    CIPHER = "cipher"


@dataclass(frozen=True)
class Secrets:
    """Keys for the masked and cipher-control domains."""

    mask_key: MaskKey
    cipher_key: bytes

    @classmethod
    def from_seed(cls, seed: int) -> "Secrets":
        # experiment keys are reproducible from the seed; real deployments pass their own
        base = hashlib.sha256(b"semcrypt-experiment" + seed.to_bytes(8, "little", signed=True)).digest()
        return cls(MaskKey(hashlib.sha256(base + b"mask").digest()), hashlib.sha256(base + b"aes").digest())


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 7
    train_per_class: int = 200
    test_per_class: int = 100
    noise_sigma: float = DEFAULT_NOISE
    size: int = 64
    block_size: int = 8
    domain: Domain = Domain.PLAIN
    per_image_mask_keys: bool = False
    secrets: Secrets | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        object.__setattr__(self, "domain", Domain(self.domain))

    def keys(self) -> Secrets:
        return self.secrets or Secrets.from_seed(self.seed)


def load_split(cfg: TrainConfig, split: str) -> tuple[np.ndarray, np.ndarray]:
    """Raw phantom pixels ``(N, H, W)`` and labels for ``"train"`` or ``"test"``."""
    per_class, offset = (cfg.train_per_class, 0) if split == "train" else (cfg.test_per_class, 1)
    images, labels = phantom_corpus(per_class, cfg.seed * 2 + offset, cfg.size, cfg.noise_sigma)
    stack = np.stack([im.pixels for im in images]) if images else np.zeros((0, cfg.size, cfg.size), np.uint8)
    return stack, np.array(labels, dtype=np.int64)


def to_domain(pixels: np.ndarray, cfg: TrainConfig, split: str, max_value: int = 255) -> np.ndarray:
    """Map raw pixels into the configured domain, still as integer samples."""
    keys = cfg.keys()
    if cfg.domain is Domain.PLAIN:
        return pixels
    n, h, w = pixels.shape
    if cfg.domain is Domain.MASKED:
        if not cfg.per_image_mask_keys:
            return apply_mask_batch(pixels, derive_mask_plan(keys.mask_key, w, h, cfg.block_size), max_value)
        out = np.empty_like(pixels)
        for i in range(n):
            k = MaskKey(hashlib.sha256(keys.mask_key.key + split.encode() + i.to_bytes(8, "little")).digest())
            out[i] = apply_mask_batch(pixels[i : i + 1], derive_mask_plan(k, w, h, cfg.block_size), max_value)[0]
        return out
    # cipher control: AES-CBC of the raw samples under a fresh IV per image, first h*w bytes rendered
    iv_rng = Xoshiro256(cfg.seed ^ (0x5EED if split == "train" else 0x7E57))
    out = np.empty((n, h, w), dtype=np.uint8)
    for i in range(n):
        ct = aes_cbc_encrypt(pixels[i].tobytes(), keys.cipher_key, iv_rng.random_bytes(16))
        out[i] = np.frombuffer(ct[: h * w], dtype=np.uint8).reshape(h, w)
    return out


def to_input(samples: np.ndarray, max_value: int = 255) -> np.ndarray:
    """Integer samples to centred float32 network input in [-0.5, 0.5]."""
    return (samples.astype(np.float32) / np.float32(max_value) - np.float32(0.5))[:, None]


def sgd_train(model: CnnModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, rng: Xoshiro256,
              log=None) -> list[float]:
    """SGD with momentum; returns the mean loss of each epoch."""
    velocity = {(id(layer), name): np.zeros_like(layer.params[name]) for layer, name in model.parameters()}
    lr = model.dtype.type(cfg.learning_rate)
    mu = model.dtype.type(cfg.momentum)
    history = []
    for epoch in range(cfg.epochs):
        order = list(range(len(y)))
        rng.shuffle(order)
        order = np.array(order, dtype=np.int64)
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(x[idx], y[idx])
            losses.append(loss * len(idx))
            for layer, name in model.parameters():
                key = (id(layer), name)
                v = velocity[key]
                v *= mu
                v -= lr * grads[key]
                layer.params[name] += v
        history.append(float(np.sum(losses) / max(len(y), 1)))
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {history[-1]:.4f}")
    return history


def train(cfg: TrainConfig, log=None) -> CnnModel:
    """Deterministic for a fixed config: He-uniform init and data order both come from ``cfg.seed``."""
    rng = Xoshiro256(cfg.seed)
    model = he_uniform_init(default_model(cfg.size), rng)
    pixels, labels = load_split(cfg, "train")
    x = to_input(to_domain(pixels, cfg, "train"))
    sgd_train(model, x, labels, cfg, rng, log)
    return model


def test_inputs(cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    pixels, labels = load_split(cfg, "test")
    return to_input(to_domain(pixels, cfg, "test")), labels
