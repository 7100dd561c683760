"""Armature trees and forward kinematics over a part-wise body mesh."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transforms
from .config import JointDef
from .geometry import GeometryError, TriangleMesh, capsule, merge_meshes


class InvalidBindingError(GeometryError):
    pass


@dataclass
class ArmatureTree:
    joints: tuple[JointDef, ...]
    scale: np.ndarray = None       # (J, 3)
    rotation: np.ndarray = None    # (J, 3) radians
    location: np.ndarray = None    # (J, 3) scene units
    stop_nodes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        J = len(self.joints)
        if self.scale is None:
            self.scale = np.ones((J, 3))
        if self.rotation is None:
            self.rotation = np.zeros((J, 3))
        if self.location is None:
            self.location = np.zeros((J, 3))
        self.scale = np.asarray(self.scale, dtype=float).reshape(J, 3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(J, 3)
        self.location = np.asarray(self.location, dtype=float).reshape(J, 3)

    def validate(self) -> None:
        roots = [i for i, j in enumerate(self.joints) if j.parent < 0]
        if len(roots) != 1:
            raise GeometryError(f"armature needs exactly one root, found {len(roots)}")
        for i, j in enumerate(self.joints):
            if j.parent >= i:
                raise GeometryError(f"joint {j.name!r} stored before its parent")

    @property
    def heads(self) -> np.ndarray:
        if getattr(self, "_heads", None) is None:
            self._heads = np.array([j.head for j in self.joints], dtype=float)
        return self._heads

    def local_transforms(self) -> np.ndarray:
        """Per-joint scale -> rotate -> translate about the joint head."""
        heads = self.heads
        RS = transforms.euler_matrices(self.rotation) * self.scale[:, None, :]
        out = np.zeros((len(self.joints), 4, 4))
        out[:, :3, :3] = RS
        out[:, :3, 3] = heads + self.location - np.einsum("jab,jb->ja", RS, heads)
        out[:, 3, 3] = 1.0
        return out

    def world_transforms(self) -> np.ndarray:
        """Compose local transforms down the tree; stop nodes restart the chain."""
        local = self.local_transforms()
        world = np.empty_like(local)
        for i, j in enumerate(self.joints):
            if j.parent < 0 or i in self.stop_nodes:
                world[i] = local[i]
            else:
                world[i] = world[j.parent] @ local[i]
        return world

    def posed_heads(self) -> np.ndarray:
        W = self.world_transforms()
        h = self.heads
        return np.einsum("jab,jb->ja", W[:, :3, :3], h) + W[:, :3, 3]


def rest_body_mesh(joints, segments: int = 10, rings: int = 3) -> TriangleMesh:
    """One capsule per bone; vertex group ``i`` is bone ``i``'s capsule."""
    parts = [capsule(j.head, j.tail, j.radius, segments, rings) for j in joints]
    return merge_meshes(parts, list(range(len(joints))))


def vertex_bindings(mesh: TriangleMesh, n_joints: int) -> np.ndarray:
    """Joint index per vertex; raises if any vertex is unbound."""
    owner = np.full(len(mesh.vertices), -1, dtype=np.int64)
    for g, idx in mesh.vertex_groups.items():
        if not 0 <= g < n_joints:
            raise InvalidBindingError(f"vertex group {g} has no joint")
        free = owner[idx] < 0
        owner[np.asarray(idx)[free]] = g
    if np.any(owner < 0):
        raise InvalidBindingError(f"{int(np.sum(owner < 0))} vertices outside all groups")
    return owner


def apply_armature(mesh: TriangleMesh, tree: ArmatureTree,
                   bindings: np.ndarray | None = None) -> TriangleMesh:
    """Deform each vertex group rigidly by its joint's world transform."""
    if bindings is None:
        bindings = vertex_bindings(mesh, len(tree.joints))
    W = tree.world_transforms()
    A = W[bindings]
    v = np.einsum("nab,nb->na", A[:, :3, :3], mesh.vertices) + A[:, :3, 3]
    return TriangleMesh(v, mesh.faces, vertex_groups=mesh.vertex_groups)
