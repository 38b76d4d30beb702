"""NCHW layers with explicit forward/backward passes.

Each layer caches what its backward pass needs during ``forward``; calling
``backward`` consumes the gradient of the loss w.r.t. the layer output and
returns the gradient w.r.t. its input, filling ``grads`` for parameters.
"""

from __future__ import annotations

import enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from semcrypt.errors import ShapeMismatch


class Kind(enum.IntEnum):
    INPUT = 0
    CONV = 1
    RELU = 2
    POOL = 3
    FLATTEN = 4
    DENSE = 5


class Layer:
    kind: Kind
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def out_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dims(self) -> tuple[int, int, int, int]:
        """Shape record written to the model file."""
        return (0, 0, 0, 0)


class Conv2d(Layer):
    """3x3 convolution, stride 1, zero padding 1."""

    kind = Kind.CONV
    K = 3

    def __init__(self, in_ch: int, out_ch: int, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.params["W"] = np.zeros((out_ch, in_ch, self.K, self.K), dtype=dtype)
        self.params["b"] = np.zeros(out_ch, dtype=dtype)

    @property
    def fan_in(self) -> int:
        return self.in_ch * self.K * self.K

    def dims(self):
        return (self.out_ch, self.in_ch, self.K, self.K)

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.in_ch:
            raise ShapeMismatch(f"conv expects {self.in_ch} channels, got {c}")
        return (self.out_ch, h, w)

    def forward(self, x):
        n, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        win = sliding_window_view(xp, (self.K, self.K), axis=(2, 3))  # n, c, h, w, k, k
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * self.K * self.K)
        self._cache = (cols, x.shape)
        wmat = self.params["W"].reshape(self.out_ch, -1)
        y = cols @ wmat.T + self.params["b"]
        return y.reshape(n, h, w, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy):
        cols, (n, c, h, w) = self._cache
        dflat = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self.grads["W"] = (dflat.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = dflat.sum(axis=0)
        dcols = (dflat @ self.params["W"].reshape(self.out_ch, -1)).reshape(n, h, w, c, self.K, self.K)
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
        for i in range(self.K):
            for j in range(self.K):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, 1:-1, 1:-1]


class ReLU(Layer):
    kind = Kind.RELU

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype)

    def backward(self, dy):
        return np.where(self._mask, dy, 0).astype(dy.dtype)


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; ties route the gradient to the first maximum."""

    kind = Kind.POOL

    def out_shape(self, shape):
        c, h, w = shape
        if h % 2 or w % 2:
            raise ShapeMismatch(f"2x2 pooling needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x):
        n, c, h, w = x.shape
        quads = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        self._arg = quads.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(quads, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        n, c, h, w = self._shape
        quads = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
        np.put_along_axis(quads, self._arg[..., None], dy[..., None], axis=-1)
        return quads.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


class Flatten(Layer):
    kind = Kind.FLATTEN

    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    kind = Kind.DENSE

    def __init__(self, in_dim: int, out_dim: int, dtype=np.float32):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.params["W"] = np.zeros((out_dim, in_dim), dtype=dtype)
        self.params["b"] = np.zeros(out_dim, dtype=dtype)

    @property
    def fan_in(self) -> int:
        return self.in_dim

    def dims(self):
        return (self.out_dim, self.in_dim, 1, 1)

    def out_shape(self, shape):
        if shape != (self.in_dim,):
            raise ShapeMismatch(f"dense expects ({self.in_dim},), got {shape}")
        return (self.out_dim,)

    def forward(self, x):
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = dy.T @ self._x
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"]
