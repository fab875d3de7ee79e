"""Three-ray multipath propagation and received-signal synthesis.

Frequency-domain model per receiver ``l`` and DFT bin ``k``::

    xbar_l[k] = sbar[k] * hbar_l[k] + vbar_l[k]
    hbar_l[k] = sum_r b_rl exp(-j omega_k tau_rl)

Steering matrices carry ``exp(-j omega_k tau)`` so that ``hbar_l = D_l @ b_l``
is the physical channel.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Environment, ReceiverArray, Scene

N_RAYS = 3


def dft(x, axis=-1):
    """Unitary DFT (1/sqrt(N) scaling)."""
    return np.fft.fft(x, axis=axis, norm="ortho")


def idft(X, axis=-1):
    """Inverse of :func:`dft`."""
    return np.fft.ifft(X, axis=axis, norm="ortho")


def image_sources(p, h):
    """Return ``(..., 3, 3)``: LOS position, surface image, bottom image."""
    p = np.asarray(p, dtype=float)
    surf = p * np.array([1.0, 1.0, -1.0])
    bott = surf + np.array([0.0, 0.0, 2.0 * h])
    return np.stack([p, surf, bott], axis=-2)


def three_ray_delays(p, arr: ReceiverArray, env: Environment, check=True):
    """Propagation delays of the LOS, surface and bottom rays.

    Parameters
    ----------
    p : array_like, shape (..., 3)
        Source position(s).
    arr : ReceiverArray
    env : Environment

    Returns
    -------
    tau : ndarray, shape (..., 3, L)
        Delays in seconds, rows ordered (LOS, surface, bottom).
    """
    p = np.asarray(p, dtype=float)
    if check and not env.contains(p):
        raise ValueError(f"source depth must lie in (0, {env.h}) m")
    imgs = image_sources(p, env.h)
    q = arr.positions
    dist = np.linalg.norm(imgs[..., :, None, :] - q, axis=-1)
    return dist / env.c


def steering_matrix(tau, env: Environment):
    """Steering matrix ``D`` with entries ``exp(-j omega_k tau_r)``.

    ``tau`` has shape ``(..., R)``; the result has shape ``(..., N, R)``.
    """
    tau = np.asarray(tau, dtype=float)
    return np.exp(-1j * env.omega[:, None] * tau[..., None, :])


def channel_spectrum(tau, B, env: Environment):
    """Per-receiver channel ``hbar`` of shape ``(L, N)`` from ``tau``/``B`` of shape (R, L)."""
    tau = np.asarray(tau, dtype=float)
    D = steering_matrix(tau.T, env)  # (L, N, R)
    return np.einsum("lnr,rl->ln", D, B)


def sample_attenuations(R, L, rng):
    """Random complex attenuations with E|b|^2 = 1 and fluctuation variance 0.01.

    Each coefficient is a random-phase mean of modulus sqrt(0.99) plus a
    circular complex normal fluctuation of variance 0.01.
    """
    psi = rng.uniform(-np.pi, np.pi, size=(R, L))
    g = rng.standard_normal((R, L, 2)) @ np.array([1.0, 1j]) * np.sqrt(0.01 / 2)
    return np.sqrt(0.99) * np.exp(1j * psi) + g


def complex_normal(shape, rng, var=1.0):
    """Circularly-symmetric complex normal samples with variance ``var``."""
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(var / 2)


def perturb_surface_delays(tau, p, arr: ReceiverArray, env: Environment, rng, rel_std=0.01,
                           clamp_to_los=False):
    """Jitter the surface-ray delays to model a randomly shifted sea surface.

    The standard deviation is ``rel_std`` times the mean source-receiver
    distance divided by ``c``.  Perturbed delays are kept positive; with
    ``clamp_to_los`` they are also clamped below by the LOS delay.  In shallow
    scenes the surface and LOS arrivals are often closer than one standard
    deviation, so clamping visibly skews the jitter and is off by default.
    """
    tau = np.array(tau, dtype=float)
    mean_dist = np.mean(np.linalg.norm(arr.positions - np.asarray(p, dtype=float), axis=-1))
    sigma = rel_std * mean_dist / env.c
    eps = rng.standard_normal(tau.shape[-1]) * sigma
    floor = tau[0] if clamp_to_los else np.finfo(float).tiny
    tau[1] = np.maximum(tau[1] + eps, floor)
    return tau


def noise_variance(snr_db):
    snr_db = float(snr_db)
    if np.isnan(snr_db):
        raise ValueError("SNR must not be NaN")
    return 10.0 ** (-snr_db / 10.0)


class NoiseFile:
    """Sequential reader of recorded noise.

    The file holds raw little-endian float64 pairs (real, imag).  Samples are
    consumed in order and rescaled so that the file's mean power maps to the
    requested variance.
    """

    def __init__(self, path):
        self.path = Path(path)
        raw = np.fromfile(self.path, dtype="<f8")
        if raw.size % 2:
            raise ValueError(f"{self.path}: odd number of float64 values")
        self.samples = raw[0::2] + 1j * raw[1::2]
        power = np.mean(np.abs(self.samples) ** 2) if self.samples.size else 0.0
        if not power > 0:
            raise ValueError(f"{self.path}: noise file has zero power")
        self._unit = self.samples / np.sqrt(power)
        self.offset = 0

    def take(self, shape, var):
        n = int(np.prod(shape))
        if self.offset + n > self._unit.size:
            raise ValueError(
                f"{self.path}: noise file exhausted ({self._unit.size} samples, "
                f"needed {self.offset + n})"
            )
        out = self._unit[self.offset:self.offset + n].reshape(shape) * np.sqrt(var)
        self.offset += n
        return out

    def view(self, offset):
        """Independent reader over the same samples starting at ``offset``."""
        other = copy.copy(self)
        other.offset = int(offset)
        return other


def write_noise_file(path, samples):
    samples = np.asarray(samples, dtype=complex).ravel()
    inter = np.empty(2 * samples.size, dtype="<f8")
    inter[0::2] = samples.real
    inter[1::2] = samples.imag
    inter.tofile(path)


@dataclass
class Truth:
    B: np.ndarray  # (R, L) attenuations
    tau: np.ndarray  # (R, L) delays actually used
    sbar: np.ndarray  # (N,) source spectrum
    noise_var: float


@dataclass
class SignalRecord:
    x: np.ndarray  # (L, N) complex time-domain samples
    label: np.ndarray  # (3,) source position
    snr_db: float = np.inf
    truth: Optional[Truth] = None

    @property
    def spectrum(self):
        return dft(self.x)

    @property
    def L(self):
        return self.x.shape[0]

    @property
    def N(self):
        return self.x.shape[1]


def received_spectrum(sbar, hbar, var, rng, noise: Optional[NoiseFile] = None):
    """``sbar * hbar`` plus white (or file-sourced) noise of variance ``var``."""
    xbar = np.asarray(sbar) * np.asarray(hbar)
    if var > 0:
        if noise is None:
            xbar = xbar + complex_normal(xbar.shape, rng, var)
        else:
            xbar = xbar + dft(noise.take(xbar.shape, var))
    return xbar


def synthesize(p, scene: Scene, B, snr_db, rng, dynamic=False, noise: Optional[NoiseFile] = None,
               rel_std=0.01):
    """Simulate one noisy multipath observation of a random source waveform.

    Random draws happen in a fixed order (waveform, noise, surface jitter) so a
    seeded generator reproduces the record bit for bit, and the static and
    dynamic variants of one seed share waveform and noise.
    """
    arr, env = scene.array, scene.env
    p = np.asarray(p, dtype=float)
    var = noise_variance(snr_db)
    tau = three_ray_delays(p, arr, env)
    B = np.asarray(B, dtype=complex)
    tau = tau[: B.shape[0]]
    sbar = complex_normal(env.N, rng)
    shape = (len(arr), env.N)
    if var > 0:
        v = complex_normal(shape, rng, var) if noise is None else dft(noise.take(shape, var))
    else:
        v = np.zeros(shape, dtype=complex)
    if dynamic:
        tau = perturb_surface_delays(tau, p, arr, env, rng, rel_std)
    hbar = channel_spectrum(tau, B, env)
    x = idft(sbar * hbar + v)
    return SignalRecord(x=x, label=p.copy(), snr_db=float(snr_db),
                        truth=Truth(B=B, tau=tau, sbar=sbar, noise_var=var))


def draw_source(box, rng):
    box = np.asarray(box, dtype=float)
    return rng.uniform(box[:, 0], box[:, 1])
