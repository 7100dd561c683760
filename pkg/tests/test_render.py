"""Rasteriser, contours, projection and image IO."""
import math

import numpy as np
import pytest

from pcad.config import RenderConfig
from pcad.geometry import TriangleMesh, icosphere, uv_sphere
from pcad.transforms import AffineParams, apply
from pcad.render import (depth_to_pgm, extract_contours, pgm_to_depth, project, rasterize,
                         read_pnm, render_mesh, render_trace, write_pbm, write_pgm)


def sphere_at(centre, radius=1.0, k=4):
    m = icosphere(k, radius)
    m.vertices = m.vertices + np.asarray(centre, dtype=float)
    return m


def ray_sphere_depth(cfg, px, py, radius):
    """Camera-z of the first hit of the ray through a pixel centre with a sphere at the origin."""
    d = np.array([(px + 0.5 - cfg.width / 2) / cfg.focal, (py + 0.5 - cfg.height / 2) / cfg.focal, 1.0])
    c = np.array([0.0, 0.0, cfg.camera_distance])       # sphere centre in camera frame
    # |t d - c|^2 = r^2 with t the camera-z (d has unit z component)
    a, b, cc = d @ d, -2 * d @ c, c @ c - radius ** 2
    return (-b - math.sqrt(b * b - 4 * a * cc)) / (2 * a)


class TestRasterize:
    def test_sphere_centre_depth(self, render_cfg):
        d = render_cfg.camera_distance
        depth = rasterize(sphere_at((0, 0, 0), k=5), render_cfg)
        cy, cx = render_cfg.height // 2, render_cfg.width // 2
        assert abs(depth[cy, cx] - (d - 1)) <= 1e-3 * d
        assert abs(depth[cy, cx] - ray_sphere_depth(render_cfg, cx, cy, 1.0)) <= 1e-3 * d

    def test_depth_matches_ray_casting_everywhere(self, render_cfg):
        depth = rasterize(sphere_at((0, 0, 0), k=5), render_cfg)
        ys, xs = np.nonzero(depth < render_cfg.far)
        inner = [(y, x) for y, x in zip(ys, xs)
                 if math.hypot(x + 0.5 - 64, y + 0.5 - 64) < 0.9 * 200 / math.sqrt(99)]
        err = max(abs(depth[y, x] - ray_sphere_depth(render_cfg, x, y, 1.0)) for y, x in inner)
        assert err < 5e-3

    def test_empty_mesh(self, render_cfg):
        assert np.all(rasterize(TriangleMesh.empty(), render_cfg) == render_cfg.far)

    def test_behind_camera(self, render_cfg):
        assert np.all(rasterize(sphere_at((0, 0, 20)), render_cfg) == render_cfg.far)

    def test_near_plane_clipping(self, render_cfg):
        # a sphere straddling the near plane is cut, not dropped
        depth = rasterize(sphere_at((0, 0, 10 - render_cfg.near), radius=0.5, k=3), render_cfg)
        covered = depth < render_cfg.far
        assert covered.any()
        assert depth[covered].min() >= render_cfg.near - 1e-9

    def test_moving_away_never_decreases_depth(self, render_cfg):
        # holds for bodies without self-occlusion; with occluders a nearer part's
        # image shrinks toward the centre and can newly cover a pixel
        rng = np.random.default_rng(0)
        for _ in range(100):
            m = icosphere(3)
            A = AffineParams(tuple(rng.uniform(-1.5, 1.5, 3)), tuple(rng.uniform(0.3, 1.5, 3)),
                             tuple(rng.uniform(-60, 60, 3))).to_matrix()
            m.vertices = apply(A, m.vertices)
            a = rasterize(m, render_cfg)
            m.vertices = m.vertices + np.array([0.0, 0.0, -rng.uniform(0.05, 1.0)])
            b = rasterize(m, render_cfg)
            both = (a < render_cfg.far) & (b < render_cfg.far)
            assert np.all(b[both] >= a[both])

    def test_scale_halves_silhouette(self, object_program, render_cfg):
        def width(s):
            t = object_program.mean_trace()
            for k in ("sx", "sy", "sz"):
                t.set(k, s)
            for k in ("rx", "ry", "rz", "tx", "ty", "tz"):
                t.set(k, 0.0)
            cols = np.nonzero((render_trace(t, object_program, render_cfg).depth
                               < render_cfg.far).any(axis=0))[0]
            return cols.max() - cols.min() + 1
        assert abs(width(0.5) - 0.5 * width(1.0)) <= 2


class TestContours:
    def test_full_frame_plane_has_no_contour(self):
        cfg = RenderConfig(width=32, height=32)
        plane = TriangleMesh([[-50, -50, 0], [50, -50, 0], [50, 50, 0], [-50, 50, 0]],
                             [[0, 1, 2], [0, 2, 3]])
        view = render_mesh(plane, cfg)
        assert np.all(view.depth < cfg.far)
        assert view.on_count == 0

    def test_sphere_contour_annulus(self, render_cfg):
        d = render_cfg.camera_distance
        R = render_cfg.focal / math.sqrt(d * d - 1)       # projected silhouette radius
        depth = rasterize(sphere_at((0, 0, 0), k=5), render_cfg)

        def radii(contour):
            ys, xs = np.nonzero(contour)
            return np.hypot(xs + 0.5 - render_cfg.width / 2, ys + 0.5 - render_cfg.height / 2)

        sil = radii(extract_contours(depth, math.inf, render_cfg.far))
        assert np.all(np.abs(sil - R) <= 1.0)
        ys, xs = np.nonzero(extract_contours(depth, math.inf, render_cfg.far))
        ang = np.arctan2(ys + 0.5 - render_cfg.height / 2, xs + 0.5 - render_cfg.width / 2)
        assert len(np.unique(np.floor((ang + np.pi) / (2 * np.pi) * 72))) == 72   # closed ring
        # the default threshold also flags the steep rim just inside the silhouette
        band = radii(extract_contours(depth, render_cfg.threshold, render_cfg.far))
        assert np.all(band <= R) and np.all(band >= R - 1.5)

    def test_infinite_threshold_is_silhouette(self, render_cfg):
        m = uv_sphere(1.0, 24, 12)
        front = sphere_at((0.8, 0, 2), radius=0.5, k=3)
        both = TriangleMesh(np.concatenate([m.vertices, front.vertices]),
                            np.concatenate([m.faces, front.faces + len(m.vertices)]))
        depth = rasterize(both, render_cfg)
        sil = extract_contours(depth, math.inf, render_cfg.far)
        edges = extract_contours(depth, render_cfg.threshold, render_cfg.far)
        covered = depth < render_cfg.far
        bg = ~covered
        touches = np.zeros_like(bg)
        touches[1:] |= bg[:-1]
        touches[:-1] |= bg[1:]
        touches[:, 1:] |= bg[:, :-1]
        touches[:, :-1] |= bg[:, 1:]
        assert np.array_equal(sil, covered & touches)
        assert edges.sum() > sil.sum()       # the nearer sphere adds an internal edge

    def test_contours_subset_of_covered(self, body_program, render_cfg, rng):
        view = render_trace(body_program.sample_prior(rng), body_program, render_cfg)
        assert not np.any(view.contour & (view.depth >= render_cfg.far))


class TestRenderTrace:
    def test_deterministic(self, body_program, render_cfg, rng):
        t = body_program.sample_prior(rng)
        a = render_trace(t, body_program, render_cfg)
        t.invalidate()
        b = render_trace(t, body_program, render_cfg)
        assert a is not b and a.digest() == b.digest()

    def test_body_rest_pose_visible(self, body_program, render_cfg):
        assert render_trace(body_program.mean_trace(), body_program, render_cfg).on_count > 0

    @pytest.mark.parametrize("name", ["object", "body"])
    def test_prior_samples_visible(self, name, object_program, body_program, render_cfg):
        prog = object_program if name == "object" else body_program
        rng = np.random.default_rng(11)
        for _ in range(1000):
            assert render_trace(prog.sample_prior(rng), prog, render_cfg).on_count > 0

    def test_projection_of_origin_is_image_centre(self, render_cfg):
        uv, z = project(np.zeros((1, 3)), render_cfg)
        assert np.allclose(uv, [[64, 64]]) and z[0] == render_cfg.camera_distance

    def test_with_size_keeps_field_of_view(self, render_cfg):
        big = render_cfg.with_size(256, 256)
        uv, _ = project([[1.0, 0.5, 0.0]], render_cfg)
        uv2, _ = project([[1.0, 0.5, 0.0]], big)
        assert np.allclose(uv2, 2 * uv)


class TestImageIO:
    def test_pbm_round_trip(self, tmp_path, rng):
        bits = rng.random((13, 21)) < 0.3
        write_pbm(tmp_path / "a.pbm", bits)
        assert np.array_equal(read_pnm(tmp_path / "a.pbm"), bits)

    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 65536, (9, 7))
        write_pgm(tmp_path / "a.pgm", img, 65535)
        assert np.array_equal(read_pnm(tmp_path / "a.pgm"), img)
        small = rng.integers(0, 256, (4, 5))
        write_pgm(tmp_path / "b.pgm", small)
        assert np.array_equal(read_pnm(tmp_path / "b.pgm"), small)

    def test_depth_quantisation(self, render_cfg):
        depth = np.linspace(render_cfg.near, render_cfg.far, 50).reshape(5, 10)
        back = pgm_to_depth(depth_to_pgm(depth, render_cfg), render_cfg)
        assert np.abs(back - depth).max() <= (render_cfg.far - render_cfg.near) / 65535
        q = depth_to_pgm(back, render_cfg)
        assert np.array_equal(q, depth_to_pgm(depth, render_cfg))
