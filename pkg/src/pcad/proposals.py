"""Data-driven proposals: prior-sample index, contour features, K-NN + KDE."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .likelihood import EmptyObservationError, distance_transform
from .render import render_trace

log = logging.getLogger(__name__)

MAGIC = b"PCADIDX\x00"
VERSION = 1


def features(contour: np.ndarray, grid: int = 8) -> np.ndarray:
    """Distance transform average-pooled to ``grid x grid``, divided by the image diagonal."""
    contour = np.asarray(contour, dtype=bool)
    if not contour.any():
        raise EmptyObservationError("cannot featurise an empty contour map")
    dt = distance_transform(contour)
    H, W = dt.shape
    rows = np.array_split(np.arange(H), grid)
    cols = np.array_split(np.arange(W), grid)
    pooled = np.array([[dt[np.ix_(r, c)].mean() for c in cols] for r in rows])
    return (pooled / np.hypot(H, W)).ravel()


@dataclass
class ProposalIndex:
    features: np.ndarray        # (N, M)
    latents: np.ndarray         # (N, D)
    latent_names: tuple[str, ...]
    program: str
    grid: int = 8

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.latents = np.atleast_2d(np.asarray(self.latents, dtype=float))
        if len(self.features) != len(self.latents):
            raise ValueError("feature and latent tables differ in length")
        self.latent_names = tuple(self.latent_names)
        if self.latents.shape[1] != len(self.latent_names):
            raise ValueError("latent width does not match the name list")

    def __len__(self):
        return len(self.features)

    def nearest(self, query: np.ndarray, K: int) -> np.ndarray:
        """Indices of the K stored entries closest in feature space (exact scan)."""
        if not 1 <= K <= len(self):
            raise ValueError(f"K={K} outside 1..{len(self)}")
        d2 = np.sum((self.features - np.asarray(query, dtype=float)) ** 2, axis=1)
        idx = np.argpartition(d2, K - 1)[:K] if K < len(self) else np.arange(len(self))
        # stable tie-break by index keeps retrieval deterministic
        return idx[np.lexsort((idx, d2[idx]))]

    def save(self, path) -> None:
        path = Path(path)
        N, M = self.features.shape
        D = self.latents.shape[1]
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIII", VERSION, M, D, N))
            fh.write(self.features.astype("<f8").tobytes())
            fh.write(self.latents.astype("<f8").tobytes())
        sidecar = path.with_suffix(path.suffix + ".txt")
        with open(sidecar, "w") as fh:
            fh.write(f"program {self.program}\ngrid {self.grid}\n")
            fh.write("feature pooled-distance-transform / image-diagonal\n")
            for name in self.latent_names:
                fh.write(f"latent {name}\n")

    @classmethod
    def load(cls, path) -> "ProposalIndex":
        path = Path(path)
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path} is not a proposal index")
            version, M, D, N = struct.unpack("<IIII", fh.read(16))
            if version != VERSION:
                raise ValueError(f"unsupported index version {version}")
            feats = np.frombuffer(fh.read(8 * N * M), dtype="<f8").reshape(N, M)
            lats = np.frombuffer(fh.read(8 * N * D), dtype="<f8").reshape(N, D)
        program, grid, names = None, 8, []
        with open(path.with_suffix(path.suffix + ".txt")) as fh:
            for line in fh:
                key, _, val = line.strip().partition(" ")
                if key == "program":
                    program = val
                elif key == "grid":
                    grid = int(val)
                elif key == "latent":
                    names.append(val)
        return cls(feats.copy(), lats.copy(), tuple(names), program, grid)


def continuous_names(space) -> list[str]:
    return [n for n, c in zip(space.names, space.continuous) if c]


def generate_dataset(n: int, program, render_cfg, rng: np.random.Generator,
                     grid: int = 8) -> ProposalIndex:
    """Sample ``n`` prior traces, render them and store (features, latents) pairs."""
    if n < 1:
        raise ValueError("need n >= 1")
    names = continuous_names(program.space)
    cols = program.space.indices(names)
    feats, lats = [], []
    dropped = 0
    for _ in range(n):
        trace = program.sample_prior(rng)
        view = render_trace(trace, program, render_cfg)
        if view.on_count == 0:
            dropped += 1
            continue
        feats.append(features(view.contour, grid))
        lats.append(trace.values[cols])
    if dropped:
        log.warning("dropped %d empty renders while building the index", dropped)
    return ProposalIndex(np.array(feats), np.array(lats), tuple(names), program.name, grid)


def silverman_bandwidth(samples: np.ndarray) -> np.ndarray:
    """Per-dimension Silverman rule for a product Gaussian kernel."""
    n, d = samples.shape
    sd = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    return sd * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))


class KDE:
    """Equal-weight mixture of diagonal Gaussians."""

    def __init__(self, centres: np.ndarray, bandwidth: np.ndarray):
        self.centres = np.atleast_2d(np.asarray(centres, dtype=float))
        self.bandwidth = np.asarray(bandwidth, dtype=float)
        if np.any(self.bandwidth < 0):
            raise ValueError("negative bandwidth")

    @classmethod
    def fit(cls, samples: np.ndarray, floor) -> "KDE":
        samples = np.atleast_2d(samples)
        return cls(samples, np.maximum(silverman_bandwidth(samples), floor))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = rng.integers(len(self.centres))
        return self.centres[k] + self.bandwidth * rng.standard_normal(self.centres.shape[1])

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        h = self.bandwidth
        if np.any(h == 0):
            zero = h == 0
            hit = np.all(self.centres[:, zero] == x[zero], axis=1)
            if not hit.any():
                return -np.inf
            return np.inf
        z = (x - self.centres) / h
        per = -0.5 * np.sum(z * z, axis=1)
        const = -np.sum(np.log(h)) - 0.5 * len(h) * np.log(2 * np.pi)
        return float(logsumexp(per) - np.log(len(self.centres)) + const)


class DataProposal:
    """Observation-conditioned independence proposal over a subset of latents.

    ``prior_weight`` mixes in the prior of those latents so the reverse
    density of a far-away current state is never vanishingly small.
    """

    def __init__(self, index: ProposalIndex, contour: np.ndarray, space, K: int = 10,
                 bandwidth_floor: float = 1e-6, latents: list[str] | None = None,
                 prior_weight: float = 0.0):
        if len(index) == 0:
            raise ValueError("empty proposal index")
        self.index = index
        self.query = features(contour, index.grid)
        self.neighbours = index.nearest(self.query, K)
        names = list(index.latent_names) if latents is None else list(latents)
        col = {n: i for i, n in enumerate(index.latent_names)}
        self.names = names
        self.cols = space.indices(names)
        self.priors = [space.priors[i] for i in self.cols]
        ranges = np.array([p.scale for p in self.priors])
        stored = index.latents[self.neighbours][:, [col[n] for n in names]]
        self.kde = KDE.fit(stored, bandwidth_floor * ranges)
        self.prior_weight = prior_weight

    def _log_prior(self, x) -> float:
        return float(sum(p.logpdf(float(v)) for p, v in zip(self.priors, x)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.prior_weight > 0 and rng.random() < self.prior_weight:
            return np.array([p.sample(rng) for p in self.priors])
        return self.kde.sample(rng)

    def logpdf(self, x) -> float:
        lk = self.kde.logpdf(x)
        if self.prior_weight <= 0:
            return lk
        lp = self._log_prior(x)
        return float(np.logaddexp(np.log(self.prior_weight) + lp,
                                  np.log1p(-self.prior_weight) + lk))


def propose(contour: np.ndarray, index: ProposalIndex, K: int, rng: np.random.Generator,
            space, bandwidth_floor: float = 1e-6) -> tuple[np.ndarray, float]:
    """One KDE sample over all indexed latents plus its log density."""
    q = DataProposal(index, contour, space, K, bandwidth_floor)
    x = q.sample(rng)
    return x, q.logpdf(x)
