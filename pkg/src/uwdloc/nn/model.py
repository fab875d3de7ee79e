"""Three-branch CNN on SOS tensors and its joint assembly.

A branch is ``blocks`` repetitions of conv -> ReLU -> avgpool (dropout on the
first ``dropout_blocks``), then flatten, dense+ReLU layers and a linear scalar
head.  Each head is followed by a fixed affine map ``mean + std * raw`` so the
raw regression output lives on a unit scale; the map is part of the config,
not a trainable parameter.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, replace

import numpy as np

from .layers import AvgPool2D, Conv2D, Dense, Dropout, Flatten, ReLU

COORDS = ("range", "azimuth", "inclination")


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple = (10, 199)  # (pairs, lags)
    blocks: int = 3
    channels: tuple = (8, 16, 32)
    kernels: tuple = ((3, 3),)
    pool: tuple = (2, 2)
    dropout: float = 0.2
    dropout_blocks: int | None = None
    dense: tuple = (64,)
    inclination_loss: str = "period"
    input_scale: float = 1.0
    out_mean: tuple = (0.0, 0.0, 0.0)
    out_std: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("need at least one block")
        if len(self.channels) != self.blocks:
            raise ValueError(f"channels {self.channels} must list one width per block")
        if len(self.kernels) not in (1, self.blocks):
            raise ValueError("kernels must hold one entry or one per block")
        if self.inclination_loss not in ("period", "scale"):
            raise ValueError(f"unknown inclination loss {self.inclination_loss!r}")

    @property
    def n_dropout_blocks(self):
        return self.blocks - 1 if self.dropout_blocks is None else self.dropout_blocks

    def kernel(self, i):
        return tuple(self.kernels[0] if len(self.kernels) == 1 else self.kernels[i])

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("input_shape", "channels", "pool", "dense", "out_mean", "out_std"):
            if k in d:
                d[k] = tuple(d[k])
        if "kernels" in d:
            d["kernels"] = tuple(tuple(k) for k in d["kernels"])
        return cls(**d)


def sos_to_input(sos, scale=1.0):
    """``(B, pairs, lags, 2)`` SOS batch to ``(B, 2, pairs, lags)`` network input."""
    sos = np.asarray(sos, dtype=float)
    if sos.ndim == 3:
        sos = sos[None]
    if sos.ndim != 4 or sos.shape[-1] != 2:
        raise ValueError(f"expected SOS tensors (B, pairs, lags, 2), got {sos.shape}")
    return np.ascontiguousarray(np.moveaxis(sos, -1, 1)) / scale


class _Sequential:
    def __init__(self, layers):
        self.layers = layers

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


def _build_core(config: NetworkConfig, rng):
    """Feature extractor; kernels and pools shrink to fit small feature maps."""
    layers = []
    shape = (2,) + tuple(config.input_shape)
    for i in range(config.blocks):
        kh, kw = config.kernel(i)
        kernel = (min(kh, shape[1]), min(kw, shape[2]))
        conv = Conv2D(shape[0], config.channels[i], kernel, rng)
        shape = conv.output_shape(shape)
        pool = AvgPool2D((min(config.pool[0], shape[1]), min(config.pool[1], shape[2])))
        shape = pool.output_shape(shape)
        layers += [conv, ReLU(), pool]
        if i < config.n_dropout_blocks and config.dropout > 0:
            layers.append(Dropout(config.dropout))
    layers.append(Flatten())
    width = int(np.prod(shape))
    for h in config.dense:
        layers += [Dense(width, h, rng), ReLU()]
        width = h
    return _Sequential(layers), width


class Branch:
    """Single-coordinate regressor (``coord`` in 0..2 for range/azimuth/inclination)."""

    def __init__(self, config: NetworkConfig, coord, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        self.coord = int(coord)
        self.core, self.width = _build_core(config, rng)
        self.head = Dense(self.width, 1, rng, scale=1.0 / np.sqrt(self.width))

    @property
    def layers(self):
        return self.core.layers + [self.head]

    def features(self, x, train=False):
        return self.core.forward(x, train)

    def forward(self, x, train=False):
        raw = self.head.forward(self.features(x, train), train)[:, 0]
        return self.config.out_mean[self.coord] + self.config.out_std[self.coord] * raw

    def backward(self, g):
        """``g`` is dLoss/dOutput of shape (B,)."""
        g = (self.config.out_std[self.coord] * np.asarray(g))[:, None]
        return self.core.backward(self.head.backward(g))


class JointModel:
    """Concatenated branch features followed by a dense layer emitting (r, theta, phi)."""

    def __init__(self, config: NetworkConfig, cores, head):
        self.config = config
        self.cores = cores
        self.head = head
        self.width = head.params["W"].shape[0] // 3

    @classmethod
    def fresh(cls, config: NetworkConfig, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        cores = []
        for _ in range(3):
            core, width = _build_core(config, rng)
            cores.append(core)
        return cls(config, cores, Dense(3 * width, 3, rng, scale=1.0 / np.sqrt(3 * width)))

    @property
    def layers(self):
        return [layer for c in self.cores for layer in c.layers] + [self.head]

    def forward(self, x, train=False):
        f = np.concatenate([c.forward(x, train) for c in self.cores], axis=1)
        raw = self.head.forward(f, train)
        return np.asarray(self.config.out_mean) + np.asarray(self.config.out_std) * raw

    def backward(self, g):
        """``g`` is dLoss/dOutput of shape (B, 3)."""
        gf = self.head.backward(np.asarray(self.config.out_std) * g)
        w = self.width
        return sum(c.backward(gf[:, i * w:(i + 1) * w]) for i, c in enumerate(self.cores))


def _compatible(a: NetworkConfig, b: NetworkConfig):
    return a.to_dict() == b.to_dict()


def assemble_joint(branches, config: NetworkConfig | None = None):
    """Joint model from trained (range, azimuth, inclination) branches.

    Cores are deep-copied; the new dense layer is block-diagonal with each
    block set to the corresponding branch head, so the joint output starts
    equal to the three branch outputs.
    """
    if len(branches) != 3 or [b.coord for b in branches] != [0, 1, 2]:
        raise ValueError("need the range, azimuth and inclination branches in that order")
    config = branches[0].config if config is None else config
    for b in branches:
        if not _compatible(b.config, config):
            raise ValueError("branch configurations differ")
    w = branches[0].width
    head = Dense(3 * w, 3)
    W = np.zeros((3 * w, 3))
    bias = np.zeros(3)
    for i, br in enumerate(branches):
        W[i * w:(i + 1) * w, i] = br.head.params["W"][:, 0]
        bias[i] = br.head.params["b"][0]
    head.params["W"] = W
    head.params["b"] = bias
    head.zero_grads()
    return JointModel(config, [copy.deepcopy(b.core) for b in branches], head)


def parameters(model):
    """``(layer, key)`` pairs in declaration order."""
    return [(layer, k) for layer in model.layers for k in layer.params]


def count_parameters(model, include_head=True):
    layers = model.layers if include_head else model.layers[:-1]
    return int(sum(v.size for layer in layers for v in layer.params.values()))


def set_dropout(model, rng=None, masks=None):
    """Attach a PRNG (or fixed masks, in layer order) to every dropout layer."""
    drops = [layer for layer in model.layers if isinstance(layer, Dropout)]
    for i, d in enumerate(drops):
        d.rng = rng
        d.mask = None if masks is None else masks[i]
    return drops


def with_normalization(config: NetworkConfig, sos, labels_sph):
    """Config with input scale and output affine fitted to training data."""
    scale = float(np.std(sos)) or 1.0
    mean = np.mean(labels_sph, axis=0)
    std = np.std(labels_sph, axis=0)
    std = np.where(std > 0, std, 1.0)
    return replace(config, input_scale=scale, out_mean=tuple(map(float, mean)),
                   out_std=tuple(map(float, std)))
