"""Differentiable building blocks on ``(batch, channels, height, width)`` arrays.

Every layer caches what its backward pass needs during ``forward`` and
stores parameter gradients in ``grads`` (same keys as ``params``) on
``backward``.  Parameters are float64 throughout.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


def _check_rank(x, rank, name):
    if x.ndim != rank:
        raise ValueError(f"{name} expects a rank-{rank} input, got shape {x.shape}")


class Conv2D(Layer):
    """Valid-padding cross-correlation, weight shape ``(F, C, kh, kw)``."""

    def __init__(self, c_in, c_out, kernel, rng=None):
        super().__init__()
        kh, kw = kernel
        self.kernel = (int(kh), int(kw))
        fan_in = c_in * kh * kw
        rng = np.random.default_rng(0) if rng is None else rng
        self.params["W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, kh, kw))
        self.params["b"] = np.zeros(c_out)
        self.zero_grads()

    def output_shape(self, shape):
        c, h, w = shape
        kh, kw = self.kernel
        return self.params["W"].shape[0], h - kh + 1, w - kw + 1

    def forward(self, x, train=False):
        _check_rank(x, 4, "Conv2D")
        W = self.params["W"]
        F, C, kh, kw = W.shape
        if x.shape[1] != C or x.shape[2] < kh or x.shape[3] < kw:
            raise ValueError(f"Conv2D kernel {W.shape} incompatible with input {x.shape}")
        cols = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (B, C, Ho, Wo, kh, kw)
        self._x = x
        self._cols = cols
        out = np.einsum("bchwij,fcij->bfhw", cols, W, optimize=True)
        return out + self.params["b"][None, :, None, None]

    def backward(self, g):
        W = self.params["W"]
        F, C, kh, kw = W.shape
        self.grads["W"] = np.einsum("bfhw,bchwij->fcij", g, self._cols, optimize=True)
        self.grads["b"] = g.sum(axis=(0, 2, 3))
        gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        gcols = sliding_window_view(gp, (kh, kw), axis=(2, 3))
        return np.einsum("bfhwij,fcij->bchw", gcols, W[:, :, ::-1, ::-1], optimize=True)


class AvgPool2D(Layer):
    """Non-overlapping mean pooling; trailing rows/columns that do not fill a window are dropped."""

    def __init__(self, pool):
        super().__init__()
        self.pool = (int(pool[0]), int(pool[1]))

    def output_shape(self, shape):
        c, h, w = shape
        return c, h // self.pool[0], w // self.pool[1]

    def forward(self, x, train=False):
        _check_rank(x, 4, "AvgPool2D")
        ph, pw = self.pool
        B, C, H, W = x.shape
        Ho, Wo = H // ph, W // pw
        if Ho == 0 or Wo == 0:
            raise ValueError(f"pool {self.pool} larger than input {x.shape}")
        self._shape = x.shape
        v = x[:, :, : Ho * ph, : Wo * pw].reshape(B, C, Ho, ph, Wo, pw)
        return v.mean(axis=(3, 5))

    def backward(self, g):
        ph, pw = self.pool
        B, C, H, W = self._shape
        up = np.repeat(np.repeat(g, ph, axis=2), pw, axis=3) / (ph * pw)
        dx = np.zeros(self._shape)
        dx[:, :, : up.shape[2], : up.shape[3]] = up
        return dx


class Dense(Layer):
    """Affine map ``x @ W + b`` with ``W`` of shape ``(n_in, n_out)``."""

    def __init__(self, n_in, n_out, rng=None, scale=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        std = np.sqrt(2.0 / n_in) if scale is None else scale
        self.params["W"] = rng.normal(0.0, std, (n_in, n_out))
        self.params["b"] = np.zeros(n_out)
        self.zero_grads()

    def forward(self, x, train=False):
        _check_rank(x, 2, "Dense")
        if x.shape[1] != self.params["W"].shape[0]:
            raise ValueError(f"Dense expects {self.params['W'].shape[0]} features, got {x.shape[1]}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        self.grads["W"] = self._x.T @ g
        self.grads["b"] = g.sum(axis=0)
        return g @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, g):
        return np.where(self._mask, g, 0.0)


class Dropout(Layer):
    """Inverted dropout.  At train time a keep-mask is drawn from ``rng`` unless
    one is supplied through ``mask``; kept units are scaled by ``1/(1-rate)``.
    """

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self.rng = None
        self.mask = None

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._scale = None
            return x
        if self.mask is not None:
            keep = np.broadcast_to(self.mask, x.shape)
        else:
            keep = self.rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, g):
        return g if self._scale is None else g * self._scale


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)
