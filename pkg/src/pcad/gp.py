"""Squared-exponential Gaussian-process profile priors."""
from __future__ import annotations

import numpy as np

MAX_JITTER = 1e-4


def gp_kernel(xi, xj, L: float):
    """exp(-(xi - xj)^2 / (2 L^2)); broadcasts over array inputs."""
    if not L > 0:
        raise ValueError(f"bandwidth must be positive, got {L}")
    d = np.subtract(xi, xj, dtype=float)
    return np.exp(-(d * d) / (2.0 * L * L))


def gram(stations, L: float) -> np.ndarray:
    x = np.asarray(stations, dtype=float)
    return gp_kernel(x[:, None], x[None, :], L)


def cholesky_jitter(K: np.ndarray, jitter: float = 1e-8) -> np.ndarray:
    """Lower Cholesky factor of ``K + jitter*I``, escalating jitter x10 up to 1e-4."""
    n = K.shape[0]
    eye = np.eye(n)
    j = jitter
    while True:
        try:
            return np.linalg.cholesky(K + j * eye)
        except np.linalg.LinAlgError:
            j *= 10.0
            if j > MAX_JITTER * (1 + 1e-9):
                raise np.linalg.LinAlgError(
                    f"GP Gram matrix not positive definite even with jitter {MAX_JITTER}")


def gp_factor(stations, L: float, jitter: float = 1e-8) -> np.ndarray:
    return cholesky_jitter(gram(stations, L), jitter)


def whitened_to_profile(stations, L: float, z, jitter: float = 1e-8) -> np.ndarray:
    """Map standard-normal noise ``z`` onto a zero-mean GP draw over ``stations``."""
    z = np.asarray(z, dtype=float)
    if len(stations) == 0:
        return np.zeros(0)
    return gp_factor(stations, L, jitter) @ z


def radii_from_gp(f, r_base: float, s: float, r_min: float) -> np.ndarray:
    """Positive radius mapping ``max(r_min, r_base + s f)``."""
    return np.maximum(r_min, r_base + s * np.asarray(f, dtype=float))


def sample_gp_profile(stations, L: float, rng: np.random.Generator,
                      jitter: float = 1e-8, r_base: float | None = None,
                      s: float = 1.0, r_min: float = 0.0,
                      return_raw: bool = False):
    """Draw one GP sample over ``stations``.

    Without ``r_base`` the raw zero-mean draw is returned; otherwise it is
    mapped to radii.  ``return_raw`` returns ``(radii, raw)``.
    """
    stations = np.atleast_1d(np.asarray(stations, dtype=float))
    if stations.size < 1:
        raise ValueError("need at least one station")
    f = whitened_to_profile(stations, L, rng.standard_normal(stations.size), jitter)
    if r_base is None:
        return f
    r = radii_from_gp(f, r_base, s, r_min)
    return (r, f) if return_raw else r
