"""4x4 homogeneous transforms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def euler_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """3x3 rotation ``Rz @ Ry @ Rx`` for angles in radians."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def euler_matrices(angles) -> np.ndarray:
    """Batched :func:`euler_matrix` for an ``(n, 3)`` array of radians."""
    a = np.asarray(angles, dtype=float).reshape(-1, 3)
    cx, cy, cz = np.cos(a).T
    sx, sy, sz = np.sin(a).T
    R = np.empty((len(a), 3, 3))
    R[:, 0, 0] = cz * cy
    R[:, 0, 1] = cz * sy * sx - sz * cx
    R[:, 0, 2] = cz * sy * cx + sz * sx
    R[:, 1, 0] = sz * cy
    R[:, 1, 1] = sz * sy * sx + cz * cx
    R[:, 1, 2] = sz * sy * cx - cz * sx
    R[:, 2, 0] = -sy
    R[:, 2, 1] = cy * sx
    R[:, 2, 2] = cy * cx
    return R


def trs_matrix(translation, rotation_rad, scale) -> np.ndarray:
    """Scale, then rotate, then translate."""
    M = np.eye(4)
    M[:3, :3] = euler_matrix(*rotation_rad) * np.asarray(scale, dtype=float)[None, :]
    M[:3, 3] = translation
    return M


def translation_matrix(t) -> np.ndarray:
    M = np.eye(4)
    M[:3, 3] = t
    return M


def apply(M: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return points @ M[:3, :3].T + M[:3, 3]


@dataclass(frozen=True)
class AffineParams:
    """Global placement: translation (scene units), per-axis scale, Euler degrees."""

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    NAMES = ("tx", "ty", "tz", "sx", "sy", "sz", "rx", "ry", "rz")

    @classmethod
    def from_vector(cls, v) -> "AffineParams":
        v = [float(x) for x in v]
        return cls(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]))

    def to_vector(self) -> np.ndarray:
        return np.array([*self.translation, *self.scale, *self.rotation], dtype=float)

    def to_matrix(self) -> np.ndarray:
        return trs_matrix(self.translation, np.deg2rad(self.rotation), self.scale)
