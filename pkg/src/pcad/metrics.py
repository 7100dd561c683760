"""Reconstruction metrics: shift-invariant depth error, normal error, keypoint error."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import TriangleMesh, compute_normals
from .render import project


class NoOverlapError(ValueError):
    pass


def z_mae(depth_a: np.ndarray, depth_b: np.ndarray, mask: np.ndarray | None = None,
          far: float | None = None, squared: bool = False) -> float:
    """Shift-invariant depth error over ``mask``.

    Default: ``min_c mean|a - b - c|`` with ``c`` the lower median of ``a - b``.
    ``squared=True`` gives the mean-shift mean-squared variant.
    """
    a = np.asarray(depth_a, dtype=float)
    b = np.asarray(depth_b, dtype=float)
    if mask is None:
        if far is None:
            raise ValueError("need a mask or a far value")
        mask = (a < far) & (b < far)
    d = (a - b)[np.asarray(mask, dtype=bool)]
    if d.size == 0:
        raise NoOverlapError("depth buffers share no covered pixels")
    if squared:
        return float(np.mean((d - d.mean()) ** 2))
    c = np.sort(d)[(d.size - 1) // 2]
    return float(np.mean(np.abs(d - c)))


def nearest_vertex_correspondence(mesh_a: TriangleMesh, mesh_b: TriangleMesh) -> np.ndarray:
    """Pair each vertex of ``a`` with its nearest vertex of ``b`` after centroid alignment."""
    shift = mesh_a.vertices.mean(axis=0) - mesh_b.vertices.mean(axis=0)
    _, j = cKDTree(mesh_b.vertices + shift).query(mesh_a.vertices)
    return np.stack([np.arange(len(mesh_a.vertices)), j], axis=1)


def n_mse(mesh_a: TriangleMesh, mesh_b: TriangleMesh, correspondence=None) -> float:
    """Mean squared distance between corresponding unit normals, in [0, 4]."""
    if mesh_a.vertex_normals is None:
        compute_normals(mesh_a)
    if mesh_b.vertex_normals is None:
        compute_normals(mesh_b)
    if correspondence is None:
        correspondence = nearest_vertex_correspondence(mesh_a, mesh_b)
    pairs = np.asarray(correspondence, dtype=int).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("empty correspondence")
    diff = mesh_a.vertex_normals[pairs[:, 0]] - mesh_b.vertex_normals[pairs[:, 1]]
    return float(np.mean(np.sum(diff * diff, axis=1)))


def keypoint_error(trace, ground_truth, program, cfg) -> tuple[float, int]:
    """Mean pixel distance between projected joint heads; joints behind the
    camera in either trace are excluded.  Returns ``(error, n_missing)``."""
    ua, za = project(program.keypoints(trace), cfg)
    ub, zb = project(program.keypoints(ground_truth), cfg)
    ok = (za > 1e-9) & (zb > 1e-9)
    missing = int(np.sum(~ok))
    if not ok.any():
        return math.nan, missing
    return float(np.mean(np.linalg.norm(ua[ok] - ub[ok], axis=1))), missing


def depth_extent(depth: np.ndarray, far: float) -> float:
    d = depth[depth < far]
    return float(d.max() - d.min()) if d.size else 0.0


@dataclass
class EvalReport:
    program: str
    z_mae: float | None = None
    n_mse: float | None = None
    keypoint_err: float | None = None
    keypoints_missing: int = 0
    chamfer: float | None = None
    depth_extent: float | None = None
    chains: list = field(default_factory=list)

    def validate(self) -> None:
        for name in ("z_mae", "n_mse", "keypoint_err", "chamfer"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name}={v} is not a finite non-negative error")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def write_csv(reports: list[EvalReport], path) -> None:
    cols = ["program", "z_mae", "n_mse", "keypoint_err", "keypoints_missing", "chamfer",
            "depth_extent"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in reports:
            w.writerow([getattr(r, c) for c in cols])
