"""The lathed-object and articulated-body scene programs.

Both programs declare a :class:`LatentSpace`, sample traces from the prior
and turn a trace into a :class:`TriangleMesh`.
"""
from __future__ import annotations

import math

import numpy as np

from . import gp, transforms
from .armature import ArmatureTree, apply_armature, rest_body_mesh, vertex_bindings
from .config import ModelConfig
from .geometry import TriangleMesh, compute_normals, lathe
from .priors import Gaussian, RescaledBeta, Uniform
from .trace import LatentSpace, SceneTrace

AFFINE_NAMES = transforms.AffineParams.NAMES


def affine_priors(cfg: ModelConfig):
    t = Uniform(*cfg.translation)
    s = Uniform(*cfg.scale)
    r = Uniform(*cfg.rotation_deg)
    return [t, t, t, s, s, s, r, r, r]


class Program:
    """Base: a named latent space with prior sampling.  Subclasses add geometry."""

    name = "latent"

    def __init__(self, space: LatentSpace):
        self.space = space

    def sample_prior(self, rng: np.random.Generator) -> SceneTrace:
        return SceneTrace(self.space, self.space.sample(rng), self.name)

    def trace(self, values) -> SceneTrace:
        return SceneTrace(self.space, values, self.name)

    def mean_trace(self) -> SceneTrace:
        return self.trace([p.mean for p in self.space.priors])

    def build_mesh(self, trace: SceneTrace, normals: bool = False) -> TriangleMesh:
        raise NotImplementedError(f"program {self.name!r} has no geometry")

    def affine(self, trace: SceneTrace) -> transforms.AffineParams:
        return transforms.AffineParams.from_vector(trace.get(AFFINE_NAMES))

    def default_hmc_latents(self) -> list[str]:
        return [n for n, c in zip(self.space.names, self.space.continuous) if c]

    def default_block_coupling(self) -> dict[str, tuple[str, ...]]:
        return {}

    def default_data_latents(self) -> list[str] | None:
        """Latents the data-driven kernel proposes; ``None`` means every indexed one."""
        return None


class ObjectProgram(Program):
    """Two-part lathed object with GP profiles and a global affine placement.

    The GP draws are held as whitened standard-normal latents ``z0..z{m-1}``
    over the largest possible station grid; the active profile is
    ``chol(K(x_p, L_p)) @ z`` for each part, which has exactly the GP prior.
    """

    name = "object"

    def __init__(self, cfg: ModelConfig | None = None):
        self.cfg = cfg = cfg or ModelConfig()
        if cfg.b0 < cfg.a0 + 1:
            raise ValueError("object height range must span at least two stations")
        m = cfg.max_stations
        names = ["H", "cut", "L1", "L2"] + [f"z{i}" for i in range(m)] + list(AFFINE_NAMES)
        priors = [Uniform(cfg.a0, cfg.b0),
                  RescaledBeta(*cfg.cut_beta, 0.0, 1.0),
                  RescaledBeta(2.0, 5.0, cfg.a1, cfg.a1 + cfg.b1),
                  RescaledBeta(2.0, 5.0, cfg.a1, cfg.a1 + cfg.b1)]
        priors += [Gaussian(0.0, 1.0)] * m + affine_priors(cfg)
        groups = [None] * (4 + m) + ["global"] * 9
        super().__init__(LatentSpace(names, priors, groups))
        self._z = self.space.indices([f"z{i}" for i in range(m)])

    def stations(self, H: float) -> np.ndarray:
        a0 = int(math.floor(self.cfg.a0 + 0.5))
        top = max(int(math.floor(H + 0.5)), a0 + 1)
        return np.arange(a0, top + 1, dtype=float)

    def cut_position(self, trace: SceneTrace) -> float:
        """C = a0 + (H - a0) * cut, the cut along the medial axis in station units."""
        return self.cfg.a0 + (trace["H"] - self.cfg.a0) * trace["cut"]

    def split(self, trace: SceneTrace) -> tuple[np.ndarray, np.ndarray]:
        x = self.stations(trace["H"])
        C = self.cut_position(trace)
        n1 = int(np.clip(math.floor(C) - x[0] + 1, 1, len(x) - 1))
        return x[:n1], x[n1:]

    def gp_values(self, trace: SceneTrace) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = self.split(trace)
        z = trace.values[self._z]
        f1 = gp.whitened_to_profile(x1, trace["L1"], z[:len(x1)], self.cfg.jitter)
        f2 = gp.whitened_to_profile(x2, trace["L2"], z[len(x1):len(x1) + len(x2)],
                                    self.cfg.jitter)
        return f1, f2

    def profiles(self, trace: SceneTrace) -> tuple[np.ndarray, np.ndarray]:
        c = self.cfg
        f1, f2 = self.gp_values(trace)
        return (gp.radii_from_gp(f1, c.r_base, c.s, c.r_min),
                gp.radii_from_gp(f2, c.r_base, c.s, c.r_min))

    def build_mesh(self, trace: SceneTrace, normals: bool = False) -> TriangleMesh:
        r1, r2 = self.profiles(trace)
        return lathe(r1, r2, self.cfg.segments, self.affine(trace),
                     spacing=self.cfg.station_spacing, r_min=self.cfg.r_min, normals=normals)

    def default_hmc_latents(self) -> list[str]:
        return list(AFFINE_NAMES) + ["L1", "L2"]


class BodyProgram(Program):
    """Capsule body driven by a 13-joint armature plus a global placement."""

    name = "body"

    def __init__(self, cfg: ModelConfig | None = None):
        self.cfg = cfg = cfg or ModelConfig()
        names, priors, groups = list(AFFINE_NAMES), affine_priors(cfg), ["global"] * 9
        sc = Uniform(cfg.mu0 - cfg.scale_halfwidth, cfg.mu0 + cfg.scale_halfwidth)
        rot = Gaussian(cfg.mu_r, cfg.rot_sigma)
        for j in cfg.joints:
            names += [f"{j.name}.{k}" for k in
                      ("sx", "sy", "sz", "rx", "ry", "rz", "tx", "ty", "tz")]
            priors += [sc, sc, sc, rot, rot, rot] + [
                Uniform(cfg.a_t[k], cfg.b_t[k]) for k in range(3)]
            groups += [f"joint:{j.name}"] * 9
        super().__init__(LatentSpace(names, priors, groups))
        self.joints = tuple(cfg.joints)
        self.rest_mesh = rest_body_mesh(self.joints, cfg.capsule_segments, cfg.capsule_rings)
        self.bindings = vertex_bindings(self.rest_mesh, len(self.joints))
        self._joint_idx = 9 + np.arange(9 * len(self.joints)).reshape(-1, 9)

    def armature(self, trace: SceneTrace) -> ArmatureTree:
        v = trace.values[self._joint_idx]
        return ArmatureTree(self.joints, scale=v[:, 0:3], rotation=v[:, 3:6],
                            location=v[:, 6:9])

    def build_mesh(self, trace: SceneTrace, normals: bool = False) -> TriangleMesh:
        posed = apply_armature(self.rest_mesh, self.armature(trace), self.bindings)
        posed.vertices = transforms.apply(self.affine(trace).to_matrix(), posed.vertices)
        return compute_normals(posed) if normals else posed

    def keypoints(self, trace: SceneTrace) -> np.ndarray:
        """World positions of the joint heads, shape (J, 3)."""
        heads = self.armature(trace).posed_heads()
        return transforms.apply(self.affine(trace).to_matrix(), heads)

    def default_hmc_latents(self) -> list[str]:
        return list(AFFINE_NAMES)

    def default_data_latents(self) -> list[str]:
        # a KDE over ten neighbours in all 126 dimensions almost never beats
        # the current pose; the features mostly pin down global placement
        return list(AFFINE_NAMES)


def make_program(name: str, cfg: ModelConfig | None = None) -> Program:
    if name == "object":
        return ObjectProgram(cfg)
    if name == "body":
        return BodyProgram(cfg)
    raise ValueError(f"unknown program {name!r}")


def sample_object_prior(rng: np.random.Generator, cfg: ModelConfig | None = None) -> SceneTrace:
    return ObjectProgram(cfg).sample_prior(rng)


def sample_body_prior(rng: np.random.Generator, cfg: ModelConfig | None = None) -> SceneTrace:
    return BodyProgram(cfg).sample_prior(rng)
