"""Stochastic comparator: exact distance transform, chamfer distance, Gaussian likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .render import RenderedView, render_trace

EMPTY_RENDER_LOGLIK = -1e9
_BIG = 1e20


class EmptyObservationError(ValueError):
    pass


class EmptyRenderError(ValueError):
    pass


@njit(cache=True)
def _edt_1d(f, out, v, z):
    # lower envelope of parabolas (Felzenszwalb & Huttenlocher)
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        if f[q] >= _BIG:
            continue
        if f[v[0]] >= _BIG:
            v[0] = q
            continue
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if f[v[0]] >= _BIG:
        for q in range(n):
            out[q] = _BIG
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d = q - v[k]
        out[q] = d * d + f[v[k]]


@njit(cache=True)
def _edt_squared(on):
    H, W = on.shape
    g = np.empty((H, W))
    for i in range(H):
        for j in range(W):
            g[i, j] = 0.0 if on[i, j] else _BIG
    n = max(H, W)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    col = np.empty(H)
    tmp = np.empty(n)
    for j in range(W):
        for i in range(H):
            col[i] = g[i, j]
        _edt_1d(col, tmp[:H], v, z)
        for i in range(H):
            g[i, j] = tmp[i]
    row = np.empty(W)
    for i in range(H):
        for j in range(W):
            row[j] = g[i, j]
        _edt_1d(row, tmp[:W], v, z)
        for j in range(W):
            g[i, j] = tmp[j]
    return g


def distance_transform(contour: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (pixels) from every pixel to the nearest on-pixel.

    Separable two-pass algorithm on squared distances; the squared values are
    integers held exactly in float64, so the result equals brute force.
    """
    on = np.ascontiguousarray(contour, dtype=np.bool_)
    if not on.any():
        raise EmptyObservationError("contour map has no on-pixels")
    return np.sqrt(_edt_squared(on))


@dataclass(frozen=True)
class ObservationImage:
    contour: np.ndarray
    dt: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        c = np.asarray(self.contour, dtype=bool)
        object.__setattr__(self, "contour", c)
        if self.dt is None:
            object.__setattr__(self, "dt", distance_transform(c))
        c.setflags(write=False)
        self.dt.setflags(write=False)

    @property
    def shape(self):
        return self.contour.shape


def chamfer(obs: ObservationImage, rendered: RenderedView | np.ndarray) -> float:
    """Mean observation distance-transform value over rendered contour pixels."""
    contour = rendered.contour if isinstance(rendered, RenderedView) else np.asarray(rendered, bool)
    if contour.shape != obs.shape:
        raise ValueError("observation and rendering differ in size")
    vals = obs.dt[contour]
    if vals.size == 0:
        raise EmptyRenderError("rendered contour is empty")
    return float(vals.mean())


def gaussian_log_density(rho: float, sigma0: float) -> float:
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    return -rho * rho / (2.0 * sigma0 * sigma0) - 0.5 * math.log(2.0 * math.pi * sigma0 * sigma0)


def log_likelihood(obs: ObservationImage, rendered: RenderedView, sigma0: float) -> float:
    return gaussian_log_density(chamfer(obs, rendered), sigma0)


def default_sigma0(width: int) -> float:
    """Half a pixel at 128 px, scaled with the image width."""
    return 0.5 * width / 128.0


class ImageLikelihood:
    """Render-and-compare likelihood of a trace given one observation.

    Empty renders score ``EMPTY_RENDER_LOGLIK`` instead of raising, so the
    sampler rejects them.
    """

    def __init__(self, obs: ObservationImage, program, render_cfg, sigma0: float | None = None):
        self.obs = obs
        self.program = program
        self.render_cfg = render_cfg
        self.sigma0 = default_sigma0(render_cfg.width) if sigma0 is None else sigma0

    def render(self, trace) -> RenderedView:
        return render_trace(trace, self.program, self.render_cfg)

    def chamfer(self, trace) -> float:
        return chamfer(self.obs, self.render(trace))

    def __call__(self, trace) -> float:
        if trace.cached_log_likelihood is not None:
            return trace.cached_log_likelihood
        view = self.render(trace)
        if view.on_count == 0:
            ll = EMPTY_RENDER_LOGLIK
        else:
            ll = log_likelihood(self.obs, view, self.sigma0)
        trace.cached_log_likelihood = ll
        return ll


def observation_from_image(image: np.ndarray, level: float | None = None) -> ObservationImage:
    """Binary maps pass through; graymaps are thresholded at ``level``."""
    image = np.asarray(image)
    if image.dtype == bool:
        return ObservationImage(image)
    if level is None:
        raise ValueError("graymap observations need a threshold level")
    return ObservationImage(image >= level)


def gradient_edges(gray: np.ndarray, level: float) -> np.ndarray:
    """Crude edge map: pixels whose central-difference gradient magnitude exceeds ``level``."""
    gy, gx = np.gradient(np.asarray(gray, dtype=float))
    return np.hypot(gx, gy) > level
