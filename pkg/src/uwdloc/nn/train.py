"""Progressive training: per-coordinate branches first, then the joint model."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..geometry import cart_to_sph, sph_to_cart
from . import losses
from .model import Branch, NetworkConfig, assemble_joint, parameters, set_dropout, sos_to_input


@dataclass(frozen=True)
class TrainOptions:
    epochs: int = 8
    joint_epochs: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 64


class Adam:
    def __init__(self, model, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = parameters(model)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(layer.params[k]) for layer, k in self.params]
        self.v = [np.zeros_like(layer.params[k]) for layer, k in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (layer, k) in enumerate(self.params):
            g = layer.grads[k]
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            layer.params[k] = layer.params[k] - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def branch_loss(coord, config: NetworkConfig):
    """(loss, grad) callables on (prediction, target) for one coordinate."""
    if coord == 0:
        return losses.loss_range, losses.loss_range_grad
    if coord == 1:
        return losses.loss_emce, losses.loss_emce_grad
    mode = config.inclination_loss
    return (lambda a, b: losses.loss_emce_inclination(a, b, mode),
            lambda a, b: losses.loss_emce_inclination_grad(a, b, mode))


def _fit(model, X, Y, loss, grad, epochs, opts: TrainOptions, rng, label):
    if len(X) == 0:
        raise ValueError("empty training set")
    opt = Adam(model, opts.lr, opts.beta1, opts.beta2, opts.eps)
    set_dropout(model, rng)
    trace = []
    n = len(X)
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, opts.batch):
            idx = order[s:s + opts.batch]
            pred = model.forward(X[idx], train=True)
            value = float(np.mean(loss(pred, Y[idx])))
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"{label}: non-finite loss at step {len(trace)} (lr={opts.lr}, batch={len(idx)})")
            model.backward(grad(pred, Y[idx]) / len(idx))
            opt.step()
            trace.append(value)
    set_dropout(model, None)
    return trace


def train_branch(X, Y_sph, coord, config: NetworkConfig, opts: TrainOptions, rng):
    """Phase 1 for one coordinate.  ``X`` is network input, ``Y_sph`` (n, 3)."""
    branch = Branch(config, coord, rng)
    loss, grad = branch_loss(coord, config)
    trace = _fit(branch, X, Y_sph[:, coord], loss, grad, opts.epochs, opts, rng,
                 f"branch {coord}")
    return branch, trace


def train_joint(joint, X, Y_sph, opts: TrainOptions, rng):
    """Phase 2: fine-tune the assembled model under the spherical loss."""
    return _fit(joint, X, Y_sph, losses.loss_spherical, losses.loss_spherical_grad,
                opts.joint_epochs, opts, rng, "joint")


def progressive_train(sos, labels_xyz, config: NetworkConfig, opts: TrainOptions, seed=0):
    """Both phases from SOS tensors and Cartesian labels.

    Returns ``(joint, branches, traces)`` where ``traces`` maps phase names to
    per-step losses.
    """
    rng = np.random.default_rng(seed)
    X = sos_to_input(sos, config.input_scale)
    Y = cart_to_sph(labels_xyz)
    branches, traces = [], {}
    for coord in range(3):
        br, tr = train_branch(X, Y, coord, config, opts, rng)
        branches.append(br)
        traces[f"phase1_{coord}"] = tr
    joint = assemble_joint(branches)
    traces["phase2"] = train_joint(joint, X, Y, opts, rng)
    return joint, branches, traces


def predict_xyz(model, sos):
    out = model.forward(sos_to_input(sos, model.config.input_scale))
    return sph_to_cart(out)


def write_trace(path, trace):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss"])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])
