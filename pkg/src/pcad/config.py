"""Model and render configuration with YAML persistence."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml


@dataclass(frozen=True)
class JointDef:
    name: str
    parent: int  # -1 for the root
    head: tuple[float, float, float]
    tail: tuple[float, float, float]
    radius: float


def default_joints() -> tuple[JointDef, ...]:
    # A-pose figure, y up, roughly 2.8 units tall
    j = [
        JointDef("pelvis", -1, (0.0, -0.05, 0.0), (0.0, 0.3, 0.0), 0.2),
        JointDef("spine", 0, (0.0, 0.3, 0.0), (0.0, 0.9, 0.0), 0.22),
        JointDef("head", 1, (0.0, 1.0, 0.0), (0.0, 1.3, 0.0), 0.15),
    ]
    for side, sx in (("l", 1.0), ("r", -1.0)):
        n = len(j)
        j += [
            JointDef(f"{side}_shoulder", 1, (0.28 * sx, 0.85, 0.0), (0.62 * sx, 0.55, 0.0), 0.1),
            JointDef(f"{side}_elbow", n, (0.62 * sx, 0.55, 0.0), (0.92 * sx, 0.25, 0.0), 0.09),
            JointDef(f"{side}_wrist", n + 1, (0.92 * sx, 0.25, 0.0), (1.05 * sx, 0.12, 0.0), 0.08),
        ]
    for side, sx in (("l", 1.0), ("r", -1.0)):
        n = len(j)
        j += [
            JointDef(f"{side}_hip", 0, (0.13 * sx, -0.1, 0.0), (0.16 * sx, -0.75, 0.0), 0.12),
            JointDef(f"{side}_knee", n, (0.16 * sx, -0.75, 0.0), (0.17 * sx, -1.4, 0.0), 0.1),
        ]
    return tuple(j)


@dataclass(frozen=True)
class ModelConfig:
    # object program
    a0: float = 2.0            # H ~ Uniform(a0, b0), station grid starts at a0
    b0: float = 10.0
    a1: float = 1.0            # L ~ a1 + b1 Beta(2, 5)
    b1: float = 5.0
    cut_beta: tuple[float, float] = (2.0, 2.0)
    station_spacing: float = 0.3
    r_base: float = 0.5
    s: float = 0.2
    r_min: float = 0.1
    jitter: float = 1e-8
    segments: int = 24
    # global affine
    translation: tuple[float, float] = (-1.0, 1.0)
    scale: tuple[float, float] = (0.5, 1.5)
    rotation_deg: tuple[float, float] = (-30.0, 30.0)
    # body program
    joints: tuple[JointDef, ...] = field(default_factory=default_joints)
    mu0: float = 1.0
    scale_halfwidth: float = 0.1
    mu_r: float = 0.0
    rot_sigma: float = 0.1
    a_t: tuple[float, float, float] = (-0.03, -0.03, -0.03)
    b_t: tuple[float, float, float] = (0.03, 0.03, 0.03)
    capsule_segments: int = 10
    capsule_rings: int = 3

    @property
    def max_stations(self) -> int:
        return int(round(self.b0)) - int(round(self.a0)) + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["joints"] = [asdict(j) for j in self.joints]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "joints" in d:
            d["joints"] = tuple(
                JointDef(j["name"], int(j["parent"]), tuple(j["head"]), tuple(j["tail"]),
                         float(j["radius"]))
                for j in d["joints"])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model-config keys: {sorted(unknown)}")
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


@dataclass(frozen=True)
class RenderConfig:
    width: int = 128
    height: int = 128
    focal: float = 200.0
    camera_distance: float = 10.0
    near: float = 5.0
    far: float = 15.0
    contour_threshold: float | None = None   # None -> 2% of far - near
    view: tuple | None = None                # explicit 4x4 world->camera matrix

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("render size must be positive")
        if not self.near < self.far:
            raise ValueError("near must be < far")

    @property
    def threshold(self) -> float:
        if self.contour_threshold is not None:
            return self.contour_threshold
        return 0.02 * (self.far - self.near)

    def view_matrix(self) -> np.ndarray:
        """World -> camera (x right, y down, z forward)."""
        if self.view is not None:
            return np.asarray(self.view, dtype=float).reshape(4, 4)
        # camera on +z looking at the origin with world y up
        return np.array([[1.0, 0.0, 0.0, 0.0],
                         [0.0, -1.0, 0.0, 0.0],
                         [0.0, 0.0, -1.0, self.camera_distance],
                         [0.0, 0.0, 0.0, 1.0]])

    def with_size(self, width: int, height: int) -> "RenderConfig":
        # keep the field of view fixed
        f = self.focal * width / self.width
        return RenderConfig(width, height, f, self.camera_distance, self.near, self.far,
                            self.contour_threshold, self.view)

    def to_dict(self) -> dict:
        return asdict(self)


def load_model_config(path: str | Path) -> ModelConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ModelConfig.from_dict(data)


def save_model_config(cfg: ModelConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
