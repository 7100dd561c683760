"""Approximate renderer: pinhole z-buffer rasterisation and contour extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import RenderConfig
from .geometry import TriangleMesh
from .transforms import apply


@dataclass
class RenderedView:
    depth: np.ndarray      # (H, W) float, ``far`` where empty
    contour: np.ndarray    # (H, W) bool
    on_count: int

    @classmethod
    def from_depth(cls, depth: np.ndarray, cfg: RenderConfig) -> "RenderedView":
        contour = extract_contours(depth, cfg.threshold, cfg.far)
        return cls(depth, contour, int(contour.sum()))

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.depth).tobytes())
        h.update(np.packbits(self.contour).tobytes())
        return h.hexdigest()


@njit(cache=True)
def _draw_triangle(depth, x0, y0, z0, x1, y1, z1, x2, y2, z2, f, cx, cy, far):
    H, W = depth.shape
    sx0 = cx + f * x0 / z0
    sy0 = cy + f * y0 / z0
    sx1 = cx + f * x1 / z1
    sy1 = cy + f * y1 / z1
    sx2 = cx + f * x2 / z2
    sy2 = cy + f * y2 / z2
    area = (sx1 - sx0) * (sy2 - sy0) - (sx2 - sx0) * (sy1 - sy0)
    if abs(area) < 1e-12:
        return
    inv_area = 1.0 / area
    xmin = max(int(np.floor(min(sx0, sx1, sx2) - 0.5)), 0)
    xmax = min(int(np.ceil(max(sx0, sx1, sx2) - 0.5)), W - 1)
    ymin = max(int(np.floor(min(sy0, sy1, sy2) - 0.5)), 0)
    ymax = min(int(np.ceil(max(sy0, sy1, sy2) - 0.5)), H - 1)
    iz0 = 1.0 / z0
    iz1 = 1.0 / z1
    iz2 = 1.0 / z2
    for py in range(ymin, ymax + 1):
        qy = py + 0.5
        for px in range(xmin, xmax + 1):
            qx = px + 0.5
            w0 = ((sx1 - qx) * (sy2 - qy) - (sx2 - qx) * (sy1 - qy)) * inv_area
            w1 = ((sx2 - qx) * (sy0 - qy) - (sx0 - qx) * (sy2 - qy)) * inv_area
            w2 = 1.0 - w0 - w1
            if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                continue
            # 1/z is affine in screen space: perspective-correct depth
            z = 1.0 / (w0 * iz0 + w1 * iz1 + w2 * iz2)
            if z < depth[py, px] and z <= far:
                depth[py, px] = z


@njit(cache=True)
def _rasterize(cam, faces, f, cx, cy, near, far, depth):
    px = np.empty(4)
    py = np.empty(4)
    pz = np.empty(4)
    for t in range(faces.shape[0]):
        a = faces[t, 0]
        b = faces[t, 1]
        c = faces[t, 2]
        za = cam[a, 2]
        zb = cam[b, 2]
        zc = cam[c, 2]
        if za >= near and zb >= near and zc >= near:
            _draw_triangle(depth, cam[a, 0], cam[a, 1], za, cam[b, 0], cam[b, 1], zb,
                           cam[c, 0], cam[c, 1], zc, f, cx, cy, far)
            continue
        if za < near and zb < near and zc < near:
            continue
        # clip the polygon against z = near (Sutherland-Hodgman, one plane)
        n = 0
        idx = (a, b, c)
        for k in range(3):
            i = idx[k]
            j = idx[(k + 1) % 3]
            zi = cam[i, 2]
            zj = cam[j, 2]
            if zi >= near:
                px[n] = cam[i, 0]
                py[n] = cam[i, 1]
                pz[n] = zi
                n += 1
            if (zi >= near) != (zj >= near):
                s = (near - zi) / (zj - zi)
                px[n] = cam[i, 0] + s * (cam[j, 0] - cam[i, 0])
                py[n] = cam[i, 1] + s * (cam[j, 1] - cam[i, 1])
                pz[n] = near
                n += 1
        for k in range(1, n - 1):
            _draw_triangle(depth, px[0], py[0], pz[0], px[k], py[k], pz[k],
                           px[k + 1], py[k + 1], pz[k + 1], f, cx, cy, far)


def rasterize(mesh: TriangleMesh, cfg: RenderConfig) -> np.ndarray:
    """Z-buffer of the mesh seen through the configured pinhole camera."""
    depth = np.full((cfg.height, cfg.width), float(cfg.far))
    if len(mesh.faces) == 0:
        return depth
    cam = np.ascontiguousarray(apply(cfg.view_matrix(), mesh.vertices))
    faces = np.ascontiguousarray(mesh.faces, dtype=np.int64)
    _rasterize(cam, faces, float(cfg.focal), cfg.width / 2.0, cfg.height / 2.0,
               float(cfg.near), float(cfg.far), depth)
    return depth


@njit(cache=True)
def _contours(depth, threshold, far, out):
    H, W = depth.shape
    for i in range(H):
        for j in range(W):
            d = depth[i, j]
            if d >= far:
                continue
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ni = i + di
                nj = j + dj
                if ni < 0 or nj < 0 or ni >= H or nj >= W:
                    continue
                dn = depth[ni, nj]
                if dn >= far or abs(dn - d) > threshold:
                    out[i, j] = True
                    break


def extract_contours(depth: np.ndarray, threshold: float, far: float | None = None) -> np.ndarray:
    """Covered pixels that touch the background or a depth jump above ``threshold``.

    Neighbours outside the frame are ignored, so the image border is not a
    silhouette.  ``far`` defaults to the buffer maximum.
    """
    depth = np.ascontiguousarray(depth, dtype=float)
    if far is None:
        far = float(depth.max()) if depth.size else 0.0
    out = np.zeros(depth.shape, dtype=np.bool_)
    _contours(depth, float(threshold), float(far), out)
    return out


def render_mesh(mesh: TriangleMesh, cfg: RenderConfig) -> RenderedView:
    return RenderedView.from_depth(rasterize(mesh, cfg), cfg)


def render_trace(trace, program, cfg: RenderConfig) -> RenderedView:
    """Mesh the trace with its program, rasterise, extract contours; caches on the trace."""
    if trace.cached_render is not None:
        return trace.cached_render
    view = render_mesh(program.build_mesh(trace), cfg)
    trace.cached_render = view
    return view


def covered(depth: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    return depth < cfg.far


def project(points: np.ndarray, cfg: RenderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (x, y) of world points and their camera depth."""
    cam = apply(cfg.view_matrix(), np.asarray(points, dtype=float).reshape(-1, 3))
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([cfg.width / 2.0 + cfg.focal * cam[:, 0] / z,
                       cfg.height / 2.0 + cfg.focal * cam[:, 1] / z], axis=1)
    return uv, z


# -- portable any-map IO ---------------------------------------------------

def write_pbm(path, bitmap: np.ndarray) -> None:
    bitmap = np.asarray(bitmap, dtype=bool)
    h, w = bitmap.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode())
        fh.write(np.packbits(bitmap, axis=1).tobytes())


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    image = np.asarray(image)
    h, w = image.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        fh.write(np.clip(image, 0, maxval).astype(dtype).tobytes())


def _read_header(data: bytes, n_fields: int) -> tuple[list[int], int, str]:
    tokens, pos = [], 0
    while len(tokens) < n_fields:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode())
    return [int(t) for t in tokens[1:]], pos + 1, tokens[0]


def read_pnm(path) -> np.ndarray:
    """Read binary P4 (returns bool) or P5 (returns integers) images."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic == b"P4":
        (w, h), pos, _ = _read_header(data, 3)
        rowbytes = (w + 7) // 8
        raw = np.frombuffer(data, dtype=np.uint8, count=rowbytes * h, offset=pos)
        return np.unpackbits(raw.reshape(h, rowbytes), axis=1)[:, :w].astype(bool)
    if magic == b"P5":
        (w, h, maxval), pos, _ = _read_header(data, 4)
        dtype = ">u2" if maxval > 255 else "u1"
        return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(int)
    raise ValueError(f"unsupported image format {magic!r}")


def depth_to_pgm(depth: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    """Quantise depth to 16 bits over [near, far]."""
    scaled = (np.clip(depth, cfg.near, cfg.far) - cfg.near) / (cfg.far - cfg.near)
    return np.round(scaled * 65535).astype(np.int64)


def pgm_to_depth(image: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    return cfg.near + image.astype(float) / 65535 * (cfg.far - cfg.near)
