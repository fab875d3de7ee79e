"""Per-sample losses and their analytic gradients w.r.t. the prediction.

Each ``loss_*`` accepts broadcastable arrays and returns per-sample values;
the matching ``*_grad`` returns the derivative w.r.t. the prediction.
"""

import numpy as np


def loss_range(r_hat, r):
    return (np.asarray(r) - np.asarray(r_hat)) ** 2


def loss_range_grad(r_hat, r):
    return -2.0 * (np.asarray(r) - np.asarray(r_hat))


def loss_emce(theta_hat, theta):
    """Cyclic error ``2 - 2 cos(theta_hat - theta)``, period ``2 pi``."""
    return 2.0 - 2.0 * np.cos(np.asarray(theta_hat) - np.asarray(theta))


def loss_emce_grad(theta_hat, theta):
    return 2.0 * np.sin(np.asarray(theta_hat) - np.asarray(theta))


def loss_emce_inclination(phi_hat, phi, mode="period"):
    """Cyclic inclination error.

    ``mode="period"`` doubles the angular argument (period ``pi``);
    ``mode="scale"`` doubles the loss value instead.
    """
    d = np.asarray(phi_hat) - np.asarray(phi)
    if mode == "period":
        return 2.0 - 2.0 * np.cos(2.0 * d)
    if mode == "scale":
        return 4.0 - 4.0 * np.cos(d)
    raise ValueError(f"unknown inclination loss mode {mode!r}")


def loss_emce_inclination_grad(phi_hat, phi, mode="period"):
    d = np.asarray(phi_hat) - np.asarray(phi)
    if mode == "period":
        return 4.0 * np.sin(2.0 * d)
    if mode == "scale":
        return 4.0 * np.sin(d)
    raise ValueError(f"unknown inclination loss mode {mode!r}")


def _cos_angle(th_hat, ph_hat, th, ph):
    return np.sin(ph_hat) * np.sin(ph) * np.cos(th_hat - th) + np.cos(ph_hat) * np.cos(ph)


def loss_spherical(p_hat, p):
    """Squared Euclidean distance between two points given as ``(..., 3)`` arrays
    of ``(r, theta, phi)``, via the law of cosines."""
    p_hat = np.asarray(p_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    rh, thh, phh = p_hat[..., 0], p_hat[..., 1], p_hat[..., 2]
    r, th, ph = p[..., 0], p[..., 1], p[..., 2]
    return rh * rh + r * r - 2.0 * rh * r * _cos_angle(thh, phh, th, ph)


def loss_spherical_grad(p_hat, p):
    """Gradient of :func:`loss_spherical` w.r.t. ``p_hat``, shape ``(..., 3)``."""
    p_hat = np.asarray(p_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    rh, thh, phh = p_hat[..., 0], p_hat[..., 1], p_hat[..., 2]
    r, th, ph = p[..., 0], p[..., 1], p[..., 2]
    cos_a = _cos_angle(thh, phh, th, ph)
    d_r = 2.0 * rh - 2.0 * r * cos_a
    d_th = 2.0 * rh * r * np.sin(phh) * np.sin(ph) * np.sin(thh - th)
    d_ph = -2.0 * rh * r * (np.cos(phh) * np.sin(ph) * np.cos(thh - th) - np.sin(phh) * np.cos(ph))
    return np.stack([d_r, d_th, d_ph], axis=-1)
