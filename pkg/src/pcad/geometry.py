"""Triangle meshes, surfaces of revolution and vertex normals."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import transforms


class GeometryError(ValueError):
    pass


class InvalidProfileError(GeometryError):
    pass


class DegenerateGeometryError(GeometryError):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray                       # (N, 3)
    faces: np.ndarray                          # (F, 3) int
    vertex_normals: np.ndarray | None = None   # (N, 3)
    vertex_groups: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def validate(self) -> None:
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise GeometryError("face index out of range")
        if len(self.faces) and np.any(self.face_areas() <= 1e-15):
            raise DegenerateGeometryError("zero-area face")
        if self.vertex_normals is not None:
            lengths = np.linalg.norm(self.vertex_normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise GeometryError("vertex normals are not unit length")

    def transformed(self, M: np.ndarray) -> "TriangleMesh":
        """Copy with vertices mapped by the 4x4 matrix ``M`` (normals recomputed)."""
        out = TriangleMesh(transforms.apply(M, self.vertices), self.faces.copy(),
                           vertex_groups=dict(self.vertex_groups))
        if self.vertex_normals is not None:
            out = compute_normals(out)
        return out

    def edge_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for a, b, c in self.faces:
            for u, v in ((a, b), (b, c), (c, a)):
                key = (min(u, v), max(u, v))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_watertight(self) -> bool:
        return all(n == 2 for n in self.edge_counts().values())


def merge_meshes(meshes: list[TriangleMesh], group_ids: list[int] | None = None) -> TriangleMesh:
    verts, faces, groups = [], [], {}
    offset = 0
    for k, m in enumerate(meshes):
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if group_ids is not None:
            groups[group_ids[k]] = np.arange(offset, offset + len(m.vertices))
        offset += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces), vertex_groups=groups)


def revolve(radii, heights, segments: int) -> TriangleMesh:
    """Sweep a profile ``(radius, height)`` around the y axis.

    Heights must be strictly increasing.  A zero radius at either end becomes
    a pole vertex; a positive end radius is closed with a fan cap.  The result
    is watertight with outward-facing triangles.
    """
    r = np.asarray(radii, dtype=float)
    y = np.asarray(heights, dtype=float)
    if segments < 3:
        raise GeometryError("need at least 3 segments")
    if r.shape != y.shape or r.size < 2:
        raise InvalidProfileError("profile needs >= 2 points with matching heights")
    if np.any(np.diff(y) <= 0):
        raise InvalidProfileError("profile heights must be strictly increasing")
    if np.any(r[1:-1] <= 0) or np.any(r < 0):
        raise InvalidProfileError("interior radii must be positive")
    pole0, pole1 = bool(r[0] == 0), bool(r[-1] == 0)
    c, s = _ring(segments)
    rings = r[int(pole0):r.size - int(pole1)]
    ring_y = y[int(pole0):r.size - int(pole1)]
    parts = [np.stack([(rings[:, None] * c).ravel(),
                       np.repeat(ring_y, segments),
                       (rings[:, None] * s).ravel()], axis=1)]
    # poles first/last, then cap centres, matching _revolve_faces
    extra = []
    if pole0:
        extra.append((0.0, y[0], 0.0))
    if pole1:
        extra.append((0.0, y[-1], 0.0))
    if not pole0:
        extra.append((0.0, y[0], 0.0))
    if not pole1:
        extra.append((0.0, y[-1], 0.0))
    parts.append(np.array(extra))
    faces = _revolve_faces(rings.size, segments, pole0, pole1)
    return TriangleMesh(np.concatenate(parts), faces.copy())


@lru_cache(maxsize=None)
def _ring(n: int):
    theta = 2 * np.pi * np.arange(n) / n
    return np.cos(theta), np.sin(theta)


@lru_cache(maxsize=256)
def _revolve_faces(n_rings: int, n: int, pole0: bool, pole1: bool) -> np.ndarray:
    j = np.arange(n)
    jn = (j + 1) % n
    faces = []
    for k in range(n_rings - 1):
        a0, b0 = k * n, (k + 1) * n
        faces.append(np.stack([a0 + j, b0 + j, b0 + jn], axis=1))
        faces.append(np.stack([a0 + j, b0 + jn, a0 + jn], axis=1))
    nxt = n_rings * n
    top = (n_rings - 1) * n
    if pole0:
        faces.append(np.stack([np.full(n, nxt), j, jn], axis=1))
        nxt += 1
    if pole1:
        faces.append(np.stack([top + j, np.full(n, nxt), top + jn], axis=1))
        nxt += 1
    if not pole0:
        faces.append(np.stack([np.full(n, nxt), j, jn], axis=1))
        nxt += 1
    if not pole1:
        faces.append(np.stack([np.full(n, nxt), top + jn, top + j], axis=1))
    out = np.concatenate(faces).astype(np.int64)
    out.setflags(write=False)
    return out


def station_heights(n: int, spacing: float) -> np.ndarray:
    """Heights of ``n`` equally spaced stations, centred on y = 0."""
    return (np.arange(n) - 0.5 * (n - 1)) * spacing


def lathe(profile1, profile2, segments: int, affine: transforms.AffineParams | None = None,
          spacing: float = 1.0, r_min: float = 0.0, normals: bool = True) -> TriangleMesh:
    """Surface of revolution through the concatenated radii, one ring per station.

    ``profile1`` covers the stations up to the cut and ``profile2`` the rest;
    the placement transform is applied last.
    """
    radii = np.concatenate([np.atleast_1d(profile1), np.atleast_1d(profile2)]).astype(float)
    if r_min > 0 and np.any(radii < r_min):
        raise InvalidProfileError(f"radius below r_min={r_min}")
    if np.any(radii <= 0):
        raise InvalidProfileError("radii must be positive")
    mesh = revolve(radii, station_heights(radii.size, spacing), segments)
    if affine is not None:
        mesh.vertices = transforms.apply(affine.to_matrix(), mesh.vertices)
    if normals:
        mesh = compute_normals(mesh)
    return mesh


def capsule(head, tail, radius: float, segments: int = 10, rings: int = 3) -> TriangleMesh:
    """Cylinder with hemispherical caps spanning ``head`` -> ``tail``."""
    head = np.asarray(head, dtype=float)
    tail = np.asarray(tail, dtype=float)
    axis = tail - head
    length = float(np.linalg.norm(axis))
    if length <= 0:
        raise GeometryError("capsule needs distinct head and tail")
    phi = np.linspace(0, np.pi / 2, rings + 1)
    # bottom hemisphere (pole first), cylinder body, top hemisphere (pole last)
    r_bot, y_bot = radius * np.sin(phi), -radius * np.cos(phi)
    r_top, y_top = r_bot[::-1], length + radius * np.cos(phi[::-1])
    radii = np.concatenate([r_bot, r_top])
    heights = np.concatenate([y_bot, y_top])
    mesh = revolve(radii, heights, segments)
    # rotate +y onto the bone axis
    R = _rotation_between(np.array([0.0, 1.0, 0.0]), axis / length)
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = head
    mesh.vertices = transforms.apply(M, mesh.vertices)
    return mesh


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    if np.linalg.norm(v) < 1e-12:
        if c > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0]) if abs(a[0]) < 0.9 else np.diag([-1.0, -1.0, 1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def uv_sphere(radius: float = 1.0, segments: int = 32, rings: int = 16,
              centre=(0.0, 0.0, 0.0)) -> TriangleMesh:
    phi = np.linspace(0, np.pi, rings + 1)
    r = radius * np.sin(phi)
    r[[0, -1]] = 0.0
    mesh = revolve(r, -radius * np.cos(phi), segments)
    mesh.vertices += np.asarray(centre, dtype=float)
    return mesh


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    t = (1 + 5 ** 0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(verts) * radius, np.array(faces))


def compute_normals(mesh: TriangleMesh) -> TriangleMesh:
    """Area-weighted unit vertex normals."""
    v = mesh.vertices
    tri = v[mesh.faces]
    # cross product length is twice the face area: area weighting for free
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
    norms = np.linalg.norm(acc, axis=1)
    if np.any(norms <= 1e-300):
        raise DegenerateGeometryError("vertex with zero accumulated normal")
    mesh.vertex_normals = acc / norms[:, None]
    return mesh


def write_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        if mesh.vertex_normals is not None:
            for x, y, z in mesh.vertex_normals:
                fh.write(f"vn {float(x)!r} {float(y)!r} {float(z)!r}\n")
            for a, b, c in mesh.faces + 1:
                fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
        else:
            for a, b, c in mesh.faces + 1:
                fh.write(f"f {a} {b} {c}\n")


def read_obj(path) -> TriangleMesh:
    verts, normals, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    mesh = TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))
    if normals:
        mesh.vertex_normals = np.array(normals)
    return mesh
