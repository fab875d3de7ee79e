"""Second-order-statistics (SOS) tensor of all receiver auto/cross-correlations.

Row ``c`` of the tensor holds the correlation of the canonical receiver pair
``(l1, l2)``, ``l1 <= l2``, enumerated row-major over the upper triangle.  The
lag axis runs from ``-(N-1)`` to ``N-1``; the last axis is (real, imag).
"""

from __future__ import annotations

import struct

import numpy as np

SOS_MAGIC = b"SOS1"
_HEADER = struct.Struct("<4sIII")  # magic, L, N, reserved


def n_pairs(L):
    return (L + 1) * L // 2


def pair_index(l1, l2, L):
    """1-based row of the canonical pair ``(l1, l2)`` with ``1 <= l1 <= l2 <= L``."""
    if not (1 <= l1 <= l2 <= L):
        raise IndexError(f"pair ({l1}, {l2}) out of range for L={L}")
    return (l1 - 1) * L - (l1 - 1) * l1 // 2 + l2


def pairs(L):
    """Canonical pairs (1-based) in row order."""
    return [(a, b) for a in range(1, L + 1) for b in range(a, L + 1)]


def correlation(x1, x2):
    """Zero-padded ``(1/N) sum_n x1[n+m] conj(x2[n])`` for ``m = -(N-1)..N-1``.

    Works along the last axis and broadcasts over leading axes.
    """
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    N = x1.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * N - 1)))
    c = np.fft.ifft(np.fft.fft(x1, nfft) * np.conj(np.fft.fft(x2, nfft)))
    c = np.concatenate([c[..., nfft - (N - 1):], c[..., :N]], axis=-1)
    return c / N


def build_sos(x):
    """SOS tensor of shape ``(L(L+1)/2, 2N-1, 2)`` from ``(L, N)`` signals.

    ``x`` may also be a record object with an ``x`` attribute.
    """
    x = np.asarray(getattr(x, "x", x))
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError(f"expected (L, N) signals with L, N >= 2, got {x.shape}")
    L = x.shape[0]
    a, b = np.triu_indices(L)
    c = correlation(x[a], x[b])
    return np.stack([c.real, c.imag], axis=-1)


def lags(N):
    return np.arange(-(N - 1), N)


def write_sos(path, tensor, L, N):
    tensor = np.asarray(tensor)
    if tensor.shape != (n_pairs(L), 2 * N - 1, 2):
        raise ValueError(f"tensor shape {tensor.shape} inconsistent with L={L}, N={N}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(SOS_MAGIC, L, N, 0))
        f.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def read_sos(path):
    with open(path, "rb") as f:
        magic, L, N, _ = _HEADER.unpack(f.read(_HEADER.size))
        if magic != SOS_MAGIC:
            raise ValueError(f"{path}: not an SOS tensor file")
        data = np.frombuffer(f.read(), dtype="<f4")
    shape = (n_pairs(L), 2 * N - 1, 2)
    if data.size != np.prod(shape):
        raise ValueError(f"{path}: truncated tensor")
    return data.reshape(shape).astype(np.float32)
