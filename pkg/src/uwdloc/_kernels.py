"""Compiled per-candidate objective kernels for the grid search.

Steering phasors ``exp(-j omega_k tau)`` are advanced bin by bin with a
complex multiply instead of being materialized as ``(M, L, N, R)`` arrays.
The pure-numpy routes in :mod:`uwdloc.estimators` are the reference these
kernels are tested against.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def mfp_grid(tau, B, xconj, dw):
    """MFP objective for delays ``tau`` of shape (M, R, L)."""
    M, R, L = tau.shape
    N = xconj.shape[1]
    out = np.zeros(M)
    z = np.empty((R, L), np.complex128)
    zp = np.empty((R, L), np.complex128)
    for m in range(M):
        for r in range(R):
            for l in range(L):
                z[r, l] = np.exp(-1j * dw * tau[m, r, l])
                zp[r, l] = B[r, l]
        acc = 0.0
        for k in range(N):
            num = 0j
            den = 0.0
            for l in range(L):
                h = 0j
                for r in range(R):
                    h += zp[r, l]
                    zp[r, l] *= z[r, l]
                num += h * xconj[l, k]
                den += h.real * h.real + h.imag * h.imag
            if den > 0.0:
                acc += (num.real * num.real + num.imag * num.imag) / den
        out[m] = acc
    return out


@njit(cache=True)
def sbl_grid(tau, xbar, dw, ridge):
    """Top eigenvalue of the whitened SBL Gram matrix for delays (M, R, L)."""
    M, R, L = tau.shape
    N = xbar.shape[1]
    LR = L * R
    out = np.zeros(M)
    z = np.empty(LR, np.complex128)
    zp = np.empty(LR, np.complex128)
    y = np.empty(LR, np.complex128)
    S = np.empty((LR, LR), np.complex128)
    T = np.zeros((LR, LR), np.complex128)
    G = np.empty((R, R), np.complex128)
    for m in range(M):
        for l in range(L):
            for r in range(R):
                z[l * R + r] = np.exp(1j * dw * tau[m, r, l])
                zp[l * R + r] = 1.0
        S[:, :] = 0.0
        for k in range(N):
            for l in range(L):
                for r in range(R):
                    i = l * R + r
                    y[i] = xbar[l, k] * zp[i]
                    zp[i] *= z[i]
            for i in range(LR):
                yi = np.conj(y[i])
                for j in range(i, LR):
                    S[i, j] += yi * y[j]
        for i in range(LR):
            for j in range(i):
                S[i, j] = np.conj(S[j, i])
        # block-diagonal whitening T = blkdiag(C_l^{-1}), C_l C_l^H = D^T D* + eps I
        T[:, :] = 0.0
        for l in range(L):
            tr = 0.0
            for a in range(R):
                for b in range(R):
                    d = tau[m, b, l] - tau[m, a, l]
                    # sum_k exp(j dw k d): geometric series evaluated directly
                    acc = 0j
                    w = np.exp(1j * dw * d)
                    wp = 1.0 + 0j
                    for k in range(N):
                        acc += wp
                        wp *= w
                    G[a, b] = acc
                tr += G[a, a].real
            eps = ridge * tr / R
            for a in range(R):
                G[a, a] += eps
            C = np.linalg.cholesky(G)
            Ci = np.linalg.inv(C)
            for a in range(R):
                for b in range(R):
                    T[l * R + a, l * R + b] = Ci[a, b]
        K = T @ S @ np.conj(T.T)
        K = 0.5 * (K + np.conj(K.T))
        out[m] = np.linalg.eigvalsh(K)[-1]
    return out
