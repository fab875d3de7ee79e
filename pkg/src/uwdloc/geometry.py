"""Coordinates, receiver geometry and the isovelocity environment.

Depth ``z`` points down from the sea surface (``z = 0``) to the bottom
(``z = h``).  Spherical coordinates follow the physics convention with the
inclination measured from the +z (downward) axis::

    x = r sin(phi) cos(theta)
    y = r sin(phi) sin(theta)
    z = r cos(phi)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml


class SphericalPosition(NamedTuple):
    r: float
    theta: float
    phi: float


def cart_to_sph(p):
    """Cartesian ``(..., 3)`` array to spherical ``(..., 3)`` as (r, theta, phi).

    The origin maps to ``(0, 0, 0)``.  ``theta`` is returned in ``(-pi, pi]``.
    """
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(r > 0, np.arccos(np.clip(z / np.where(r > 0, r, 1.0), -1.0, 1.0)), 0.0)
    theta = np.arctan2(y, x)
    theta = np.where(theta <= -np.pi, np.pi, theta)
    theta = np.where(r > 0, theta, 0.0)
    return np.stack([r, theta, phi], axis=-1)


def sph_to_cart(s):
    """Spherical ``(..., 3)`` array (r, theta, phi) to Cartesian ``(..., 3)``."""
    s = np.asarray(s, dtype=float)
    r, theta, phi = s[..., 0], s[..., 1], s[..., 2]
    sin_phi = np.sin(phi)
    return np.stack(
        [r * sin_phi * np.cos(theta), r * sin_phi * np.sin(theta), r * np.cos(phi)],
        axis=-1,
    )


@dataclass(frozen=True)
class Environment:
    """Isovelocity water column.

    Attributes
    ----------
    c : float
        Sound speed [m/s].
    h : float
        Bottom depth [m].
    Ts : float
        Sampling period [s].
    N : int
        Samples per observation.
    """

    c: float = 1500.0
    h: float = 50.0
    Ts: float = 1e-2
    N: int = 100

    def __post_init__(self):
        if not (self.c > 0 and self.h > 0 and self.Ts > 0):
            raise ValueError(f"c, h and Ts must be positive, got {self}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def omega(self):
        """DFT angular frequencies 2*pi*k/(N*Ts), k = 0..N-1."""
        return 2.0 * np.pi * np.arange(self.N) / (self.N * self.Ts)

    def contains(self, p):
        p = np.asarray(p, dtype=float)
        return bool(np.all((p[..., 2] > 0) & (p[..., 2] < self.h)))


@dataclass(frozen=True, eq=False)
class ReceiverArray:
    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"receiver positions must be (L, 3), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("need at least two receivers")
        diff = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        if np.any(diff[np.triu_indices(len(pos), 1)] == 0):
            raise ValueError("receiver positions must be pairwise distinct")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.positions.shape[0]

    def __eq__(self, other):
        return isinstance(other, ReceiverArray) and np.array_equal(self.positions, other.positions)

    __hash__ = None


# Receiver layout of the reference scenario (x, y, z) in meters.
DEFAULT_RECEIVERS = np.array(
    [
        [150.0, -250.0, 10.0],
        [50.0, -250.0, 15.0],
        [-50.0, -250.0, 20.0],
        [-150.0, -250.0, 25.0],
    ]
)

# Source prior box: (min, max) per axis in meters.
DEFAULT_SOURCE_BOX = np.array([[-150.0, 150.0], [-100.0, 0.0], [5.0, 45.0]])


@dataclass(frozen=True, eq=False)
class Scene:
    array: ReceiverArray
    env: Environment

    def validate(self):
        if not self.env.contains(self.array.positions):
            raise ValueError("receivers must lie strictly inside the water column")
        return self


def default_scene():
    return Scene(ReceiverArray(DEFAULT_RECEIVERS), Environment()).validate()


def scene_from_dict(d):
    """Build a scene from a mapping with ``receivers`` and ``environment`` keys.

    Missing keys fall back to the reference scenario.
    """
    d = d or {}
    receivers = d.get("receivers", DEFAULT_RECEIVERS)
    env = Environment(**(d.get("environment") or {}))
    return Scene(ReceiverArray(receivers), env).validate()


def scene_to_dict(scene):
    return {
        "receivers": scene.array.positions.tolist(),
        "environment": {
            "c": scene.env.c,
            "h": scene.env.h,
            "Ts": scene.env.Ts,
            "N": scene.env.N,
        },
    }


def load_scene(path):
    """Read a scene from a YAML file; the scene may be nested under ``scene:``."""
    with open(Path(path)) as f:
        d = yaml.safe_load(f) or {}
    if "scene" in d:
        d = d["scene"]
    return scene_from_dict(d)
