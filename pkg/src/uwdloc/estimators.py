"""Model-based localization: matched field processing, semi-blind localization
via the top eigenvalue of a data-dependent matrix, and a GCC-PHAT/TDOA baseline.

All position objectives are maximized over a :class:`SearchVolume` with a
coarse-to-fine grid search.  Objectives passed to :func:`grid_search` are
vectorized: they take an ``(M, 3)`` array of candidate positions and return
``(M,)`` values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .geometry import DEFAULT_SOURCE_BOX, Scene
from .propagation import steering_matrix, three_ray_delays

RIDGE = 1e-10


class ConvergenceError(RuntimeError):
    pass


class MissingTruthError(ValueError):
    pass


# --------------------------------------------------------------------------
# grid search

@dataclass(frozen=True)
class SearchVolume:
    """Axis-aligned search box with a coarse-to-fine refinement schedule.

    ``n_points`` is the number of grid points per axis at every level (forced
    odd so the incumbent sits at the centre of each refined grid).
    """

    box: tuple = tuple(map(tuple, DEFAULT_SOURCE_BOX))
    n_points: int = 21
    levels: int = 3
    shrink: float = 0.25

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        if box.shape != (3, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError(f"invalid search box {self.box}")
        if self.n_points < 2 or self.levels < 0 or not (0 < self.shrink < 1):
            raise ValueError("need n_points >= 2, levels >= 0 and 0 < shrink < 1")
        object.__setattr__(self, "box", tuple(map(tuple, box)))
        object.__setattr__(self, "n_points", int(self.n_points) | 1)

    @classmethod
    def from_step(cls, box, step, **kw):
        box = np.asarray(box, dtype=float)
        n = int(np.floor(np.max(box[:, 1] - box[:, 0]) / step + 1e-9)) + 1
        return cls(box=box, n_points=n, **kw)

    @property
    def lo(self):
        return np.asarray(self.box)[:, 0]

    @property
    def hi(self):
        return np.asarray(self.box)[:, 1]

    @property
    def step(self):
        return (self.hi - self.lo) / (self.n_points - 1)

    def coarse_axes(self):
        return [np.linspace(a, b, self.n_points) for a, b in self.box]

    def final_step(self):
        return self.step * self.shrink ** self.levels


class SearchResult(NamedTuple):
    x: np.ndarray
    fun: float
    nfev: int


def _grid(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _evaluate(objective, pts, chunk):
    out = np.empty(len(pts))
    for i in range(0, len(pts), chunk):
        out[i:i + chunk] = objective(pts[i:i + chunk])
    return out


def grid_search(objective, vol: SearchVolume, chunk=2048):
    """Maximize ``objective`` over ``vol`` by coarse-to-fine gridding.

    Each refinement level re-grids a box ``shrink`` times the previous size
    around the incumbent at ``shrink`` times the previous step; points outside
    the volume are dropped.  Ties go to the lowest linear grid index.
    """
    pts = _grid(vol.coarse_axes())
    vals = _evaluate(objective, pts, chunk)
    if not np.all(np.isfinite(vals)):
        raise ValueError("objective returned non-finite values")
    best = int(np.argmax(vals))
    x, fun, nfev = pts[best], vals[best], len(pts)
    step = vol.step
    half = vol.n_points // 2
    offsets = np.arange(-half, half + 1)
    for _ in range(vol.levels):
        step = step * vol.shrink
        axes = []
        for d in range(3):
            ax = x[d] + step[d] * offsets
            ax[half] = x[d]
            keep = (ax >= vol.lo[d] - 1e-12) & (ax <= vol.hi[d] + 1e-12)
            axes.append(ax[keep])
        pts = _grid(axes)
        vals = _evaluate(objective, pts, chunk)
        nfev += len(pts)
        best = int(np.argmax(vals))
        if vals[best] > fun:
            x, fun = pts[best], vals[best]
    return SearchResult(np.array(x), float(fun), nfev)


# --------------------------------------------------------------------------
# matched field processing

def mfp_objective(xbar, hbar):
    """Matched-field objective ``sum_k |xbar[k]^H hbar_k|^2 / ||hbar_k||^2``.

    Parameters
    ----------
    xbar : ndarray, shape (L, N)
        Observed spectra.
    hbar : ndarray, shape (..., L, N)
        Hypothesized channel spectra.  Bins where ``hbar_k`` vanishes add 0.
    """
    num = np.abs(np.einsum("ln,...ln->...n", np.conj(xbar), hbar)) ** 2
    den = np.sum(np.abs(hbar) ** 2, axis=-2)
    ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return ratio.sum(axis=-1)


def model_channels(P, B, scene: Scene):
    """Channel spectra ``(M, L, N)`` at candidate positions ``P`` for fixed ``B``."""
    tau = three_ray_delays(P, scene.array, scene.env, check=False)[..., : B.shape[0], :]
    D = steering_matrix(np.swapaxes(tau, -1, -2), scene.env)  # (M, L, N, R)
    return np.einsum("mlnr,rl->mln", D, B)


def oracle_mfp(rec, scene: Scene, vol: SearchVolume):
    """MFP localization with the record's true attenuations (oracle)."""
    if rec.truth is None:
        raise MissingTruthError("oracle MFP needs the record's true attenuations")
    xconj = np.ascontiguousarray(np.conj(rec.spectrum))
    B = np.ascontiguousarray(rec.truth.B, dtype=complex)
    dw = scene.env.omega[1]

    def objective(P):
        tau = three_ray_delays(P, scene.array, scene.env, check=False)[:, : B.shape[0]]
        return _kernels.mfp_grid(np.ascontiguousarray(tau), B, xconj, dw)

    return grid_search(objective, vol)


# --------------------------------------------------------------------------
# semi-blind localization

def _gram(D):
    """Ridge-regularized ``D^T D*`` and the ridge used, for ``D`` of shape (..., N, R)."""
    G = np.swapaxes(D, -1, -2) @ np.conj(D)
    R = D.shape[-1]
    eps = RIDGE * np.real(np.trace(G, axis1=-2, axis2=-1)) / R
    return G + eps[..., None, None] * np.eye(R), eps


def build_q(xbar, D):
    """Data-dependent ``N x N`` matrix whose top eigenvalue is the SBL objective.

    ``Q = sum_l Xbar_l D*_l (D_l^T D*_l + eps I)^{-1} (Xbar_l D*_l)^H``

    Parameters
    ----------
    xbar : ndarray, shape (L, N)
    D : ndarray, shape (L, N, R)
        Per-receiver steering matrices at the hypothesized position.
    """
    xbar = np.asarray(xbar)
    D = np.asarray(D)
    Greg, eps = _gram(D)
    G = Greg - eps[..., None, None] * np.eye(D.shape[-1])
    if np.any(np.linalg.eigvalsh(G)[..., 0] < eps):
        warnings.warn("steering matrix is rank deficient beyond the ridge tolerance",
                      RuntimeWarning, stacklevel=2)
    Y = xbar[..., :, :, None] * np.conj(D)  # (L, N, R)
    Q = np.einsum("lnr,lrs,lms->nm", Y, np.linalg.inv(Greg), np.conj(Y))
    return 0.5 * (Q + Q.conj().T)


def lambda_max(Q, tol=1e-10, max_iter=None, restarts=3, rng=None):
    """Largest (algebraic) eigenvalue of a Hermitian matrix by power iteration.

    Convergence is declared when the eigen-residual ``||Qv - lam v||`` falls
    below ``tol`` times the spectral scale.  A dominant negative eigenvalue,
    or a ``+-`` pair that never settles, triggers a second pass on the
    matrix shifted by the spectral radius so the result is the largest
    algebraic eigenvalue.
    """
    Q = np.asarray(Q)
    n = Q.shape[0]
    if max_iter is None:
        max_iter = max(10 * n, 500)
    rng = np.random.default_rng(0) if rng is None else rng
    if not np.any(Q):
        return 0.0
    mu, rho = _power(Q, tol, max_iter, restarts, rng, strict=False)
    if mu is not None and mu >= 0:
        return mu
    shift = rho if mu is None else -mu
    lam, _ = _power(Q + shift * np.eye(n), tol, max_iter, restarts, rng, strict=True)
    return lam - shift


def _power(A, tol, max_iter, restarts, rng, strict):
    n = A.shape[0]
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(restarts + 1):
        for _ in range(max_iter):
            w = A @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0, 0.0
            rho = max(rho, nw)
            lam = np.real(np.vdot(v, w))
            if np.linalg.norm(w - lam * v) <= tol * rho:
                return float(lam), rho
            v = w / nw
        # stagnated: perturb the iterate but keep its dominant component
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = v + tol * u / np.linalg.norm(u)
        v /= np.linalg.norm(v)
    if strict:
        raise ConvergenceError(f"power iteration did not converge after {restarts} restarts")
    return None, rho


def sbl_objective(xbar, D):
    """``lambda_max(build_q(xbar, D))``."""
    return lambda_max(build_q(xbar, D))


def sbl_gram(xbar, D):
    """Whitened ``(LR x LR)`` Gram matrix with the same nonzero spectrum as ``Q``.

    ``D`` has shape ``(..., L, N, R)``; the result ``(..., LR, LR)``.
    """
    Greg, _ = _gram(D)
    C = np.linalg.cholesky(Greg)
    Cinv = np.linalg.inv(C)
    Y = xbar[..., :, :, None] * np.conj(D)  # (..., L, N, R)
    W = Y @ np.conj(np.swapaxes(Cinv, -1, -2))  # Y C^{-H}
    L, N, R = W.shape[-3:]
    At = np.moveaxis(W, -3, -2).reshape(W.shape[:-3] + (N, L * R))
    return np.conj(np.swapaxes(At, -1, -2)) @ At


def sbl_objective_batch(xbar, D):
    """Batched SBL objective through the Gram form; ``D`` is ``(M, L, N, R)``."""
    return np.linalg.eigvalsh(sbl_gram(xbar, D))[..., -1]


def sbl_localize(rec, scene: Scene, vol: SearchVolume, R=3):
    """Semi-blind localization: maximize the top eigenvalue over positions."""
    xbar = np.ascontiguousarray(rec.spectrum)
    dw = scene.env.omega[1]

    def objective(P):
        tau = three_ray_delays(P, scene.array, scene.env, check=False)[:, :R]
        return _kernels.sbl_grid(np.ascontiguousarray(tau), xbar, dw, RIDGE)

    return grid_search(objective, vol)


# --------------------------------------------------------------------------
# GCC-PHAT + TDOA

def gcc_phat(rec, Ts=None, floor=1e-12):
    """TDOAs of receivers 2..L relative to receiver 1 by GCC-PHAT.

    The peak of the PHAT-weighted cross-correlation magnitude is refined with
    a 3-point parabola.  Returns seconds if ``Ts`` is given, otherwise samples.
    """
    xbar = np.asarray(getattr(rec, "spectrum", rec))
    if xbar.ndim != 2 or xbar.shape[0] < 2:
        raise ValueError("need spectra of at least two receivers")
    if not np.any(np.abs(xbar) > 0):
        raise ValueError("all-zero signal has no TDOA")
    N = xbar.shape[1]
    cross = xbar[1:] * np.conj(xbar[:1])
    mag = np.abs(cross)
    phat = np.divide(cross, mag, out=np.zeros_like(cross), where=mag >= floor)
    cc = np.abs(np.fft.ifft(phat, axis=-1))
    out = np.empty(len(cc))
    for i, row in enumerate(cc):
        k = int(np.argmax(row))
        ym, y0, yp = row[(k - 1) % N], row[k], row[(k + 1) % N]
        den = ym - 2 * y0 + yp
        delta = 0.5 * (ym - yp) / den if den < 0 else 0.0
        lag = k if k <= N // 2 else k - N
        out[i] = lag + delta
    return out if Ts is None else out * Ts


def tdoa_residual(P, tdoa, scene: Scene):
    """Sum of squared TDOA misfits at candidate positions ``P`` (M, 3)."""
    q = scene.array.positions
    d = np.linalg.norm(np.asarray(P)[..., None, :] - q, axis=-1)
    model = (d[..., 1:] - d[..., :1]) / scene.env.c
    return np.sum((np.asarray(tdoa) - model) ** 2, axis=-1)


def tdoa_localize(tdoa, scene: Scene, vol: SearchVolume):
    """Least-squares TDOA multilateration by grid search."""
    res = grid_search(lambda P: -tdoa_residual(P, tdoa, scene), vol)
    return SearchResult(res.x, -res.fun, res.nfev)


def gcc_phat_localize(rec, scene: Scene, vol: SearchVolume):
    return tdoa_localize(gcc_phat(rec, scene.env.Ts), scene, vol)
