"""The CNN container: construction, forward pass, loss/gradients, and the ``.tcnn`` file format.

File layout (little-endian)::

    magic "TCNN" | version u8 = 1 | layer_count u8 |
    per layer: kind u8 | dims u32 x 4 | f32 weights | f32 biases

Layer kind 0 records the input spec as dims ``(channels, height, width, 0)``.
Conv dims are ``(out, in, 3, 3)``, dense dims are ``(out, in, 1, 1)``, and
parameter-free layers store zeros.
"""

from __future__ import annotations

import struct

import numpy as np

from semcrypt.cnn.layers import Conv2d, Dense, Flatten, Kind, Layer, MaxPool2, ReLU
from semcrypt.errors import BadMagic, ShapeHeaderMismatch, ShapeMismatch
from semcrypt.rng import Xoshiro256

MAGIC = b"TCNN"
VERSION = 1
LAYER = struct.Struct("<B4I")
NUM_CLASSES = 3


class CnnModel:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, int, int]):
        self.layers = layers
        self.input_shape = tuple(input_shape)  # (channels, height, width)
        shape = self.input_shape
        for layer in layers:
            shape = layer.out_shape(shape)
        if len(shape) != 1:
            raise ShapeMismatch(f"model must end in a vector, got {shape}")
        self.num_classes = shape[0]

    @property
    def dtype(self):
        for layer in self.layers:
            if layer.params:
                return layer.params["W"].dtype
        return np.dtype(np.float32)

    def parameters(self):
        """Yields ``(layer, name)`` for every trainable tensor in a fixed order."""
        for layer in self.layers:
            for name in ("W", "b"):
                if name in layer.params:
                    yield layer, name

    def astype(self, dtype) -> "CnnModel":
        for layer, name in self.parameters():
            layer.params[name] = layer.params[name].astype(dtype)
        return self

    def _prepare(self, batch: np.ndarray) -> np.ndarray:
        x = np.asarray(batch)
        if x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"batch shape {np.shape(batch)} does not match input {self.input_shape}")
        return x.astype(self.dtype, copy=False)

    def forward(self, batch: np.ndarray) -> np.ndarray:
        x = self._prepare(batch)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def loss_and_grads(self, batch: np.ndarray, labels: np.ndarray):
        """Mean softmax cross-entropy and the gradient of every parameter."""
        labels = np.asarray(labels)
        logits = self.forward(batch)
        if labels.shape != (logits.shape[0],):
            raise ShapeMismatch("one label per batch element required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ShapeMismatch("label outside class range")
        probs = softmax(logits)
        n = logits.shape[0]
        picked = probs[np.arange(n), labels]
        loss = float(-np.mean(np.log(np.maximum(picked, np.finfo(probs.dtype).tiny))))
        dy = probs.copy()
        dy[np.arange(n), labels] -= 1
        dy /= n
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        grads = {(id(layer), name): layer.grads[name] for layer, name in self.parameters()}
        return loss, grads

    def predict_proba(self, batch: np.ndarray, chunk: int = 256) -> np.ndarray:
        batch = np.asarray(batch)
        return np.concatenate([softmax(self.forward(batch[i : i + chunk]))
                               for i in range(0, len(batch), chunk)]) if len(batch) else np.zeros((0, self.num_classes))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def default_model(size: int = 64, num_classes: int = NUM_CLASSES, dtype=np.float32) -> CnnModel:
    """Conv(8) -> ReLU -> Pool -> Conv(16) -> ReLU -> Pool -> Flatten -> Dense(classes)."""
    if size % 4:
        raise ShapeMismatch("input size must be a multiple of 4")
    flat = 16 * (size // 4) ** 2
    layers = [Conv2d(1, 8, dtype), ReLU(), MaxPool2(), Conv2d(8, 16, dtype), ReLU(), MaxPool2(),
              Flatten(), Dense(flat, num_classes, dtype)]
    return CnnModel(layers, (1, size, size))


def he_uniform_init(model: CnnModel, rng: Xoshiro256) -> CnnModel:
    """W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero, drawn layer by layer."""
    for layer in model.layers:
        if not layer.params:
            continue
        w = layer.params["W"]
        limit = np.sqrt(6.0 / layer.fan_in)
        u = rng.uniforms(w.size).reshape(w.shape)
        layer.params["W"] = ((2.0 * u - 1.0) * limit).astype(w.dtype)
        layer.params["b"] = np.zeros_like(layer.params["b"])
    return model


# --- serialization ------------------------------------------------------------------

def save_model(model: CnnModel) -> bytes:
    out = bytearray(MAGIC + struct.pack("<BB", VERSION, len(model.layers) + 1))
    c, h, w = model.input_shape
    out += LAYER.pack(Kind.INPUT, c, h, w, 0)
    for layer in model.layers:
        out += LAYER.pack(layer.kind, *layer.dims())
        if layer.params:
            out += layer.params["W"].astype("<f4").tobytes()
            out += layer.params["b"].astype("<f4").tobytes()
    return bytes(out)


def load_model(data: bytes) -> CnnModel:
    data = bytes(data)
    if len(data) < 6 or data[:4] != MAGIC:
        raise BadMagic("not a TCNN model file")
    version, count = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise BadMagic(f"unsupported TCNN version {version}")
    pos = 6

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ShapeHeaderMismatch(f"file ends inside {what}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    layers: list[Layer] = []
    input_shape = None
    for i in range(count):
        kind, *dims = LAYER.unpack(take(LAYER.size, "layer header"))
        try:
            kind = Kind(kind)
        except ValueError:
            raise ShapeHeaderMismatch(f"unknown layer kind {kind}") from None
        if i == 0:
            if kind is not Kind.INPUT or dims[3] != 0 or min(dims[:3]) < 1:
                raise ShapeHeaderMismatch("first record must be the input spec")
            input_shape = tuple(dims[:3])
            continue
        if kind is Kind.CONV:
            if dims[2:] != [3, 3] or min(dims[:2]) < 1:
                raise ShapeHeaderMismatch(f"conv dims {dims}")
            layer = Conv2d(dims[1], dims[0])
        elif kind is Kind.DENSE:
            if dims[2:] != [1, 1] or min(dims[:2]) < 1:
                raise ShapeHeaderMismatch(f"dense dims {dims}")
            layer = Dense(dims[1], dims[0])
        elif kind in (Kind.RELU, Kind.POOL, Kind.FLATTEN):
            if any(dims):
                raise ShapeHeaderMismatch(f"parameter-free layer with dims {dims}")
            layer = {Kind.RELU: ReLU, Kind.POOL: MaxPool2, Kind.FLATTEN: Flatten}[kind]()
        else:
            raise ShapeHeaderMismatch("input spec may only appear first")
        for name in ("W", "b"):
            if name in layer.params:
                shape = layer.params[name].shape
                n = int(np.prod(shape))
                layer.params[name] = np.frombuffer(take(4 * n, "weights"), dtype="<f4").astype(np.float32).reshape(shape)
        layers.append(layer)
    if pos != len(data):
        raise ShapeHeaderMismatch("trailing bytes after last layer")
    if input_shape is None:
        raise ShapeHeaderMismatch("model has no input spec")
    try:
        model = CnnModel(layers, input_shape)
    except ShapeMismatch as exc:
        raise ShapeHeaderMismatch(str(exc)) from None
    for layer, name in model.parameters():
        if not np.all(np.isfinite(layer.params[name])):
            raise ShapeHeaderMismatch("non-finite weights")
    return model
