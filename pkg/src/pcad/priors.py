"""Prior distribution families for scene latents.

Each prior knows its log density, a sampler, the gradient of its log
density (used by the Hamiltonian kernel), and a characteristic scale used to
normalise latents with very different units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -math.inf


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    discrete = False

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty uniform support [{self.lo}, {self.hi}]")

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def logpdf(self, x: float) -> float:
        if not self.contains(x):
            return NEG_INF
        return -math.log(self.hi - self.lo)

    def grad_logpdf(self, x: float) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def bounds(self) -> tuple[float, float]:
        return self.lo, self.hi

    @property
    def scale(self) -> float:
        return self.hi - self.lo

    def to_scipy(self):
        from scipy import stats
        return stats.uniform(self.lo, self.hi - self.lo)

    def describe(self) -> str:
        return f"uniform({self.lo!r},{self.hi!r})"


@dataclass(frozen=True)
class RescaledBeta:
    """``lo + (hi - lo) * Beta(a, b)``."""

    a: float
    b: float
    lo: float
    hi: float

    discrete = False

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or not self.hi > self.lo:
            raise ValueError("invalid rescaled-beta parameters")

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def logpdf(self, x: float) -> float:
        if not self.contains(x):
            return NEG_INF
        w = self.hi - self.lo
        u = (x - self.lo) / w
        if (u <= 0.0 and self.a > 1) or (u >= 1.0 and self.b > 1):
            return NEG_INF
        log_norm = math.lgamma(self.a + self.b) - math.lgamma(self.a) - math.lgamma(self.b)
        out = log_norm - math.log(w)
        if self.a != 1:
            out += (self.a - 1) * math.log(u)
        if self.b != 1:
            out += (self.b - 1) * math.log1p(-u)
        return out

    def grad_logpdf(self, x: float) -> float:
        w = self.hi - self.lo
        u = (x - self.lo) / w
        if u <= 0.0 or u >= 1.0:
            return 0.0
        return ((self.a - 1) / u - (self.b - 1) / (1 - u)) / w

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.lo + (self.hi - self.lo) * rng.beta(self.a, self.b))

    @property
    def mean(self) -> float:
        return self.lo + (self.hi - self.lo) * self.a / (self.a + self.b)

    @property
    def bounds(self) -> tuple[float, float]:
        return self.lo, self.hi

    @property
    def scale(self) -> float:
        return self.hi - self.lo

    def to_scipy(self):
        from scipy import stats
        return stats.beta(self.a, self.b, loc=self.lo, scale=self.hi - self.lo)

    def describe(self) -> str:
        return f"rescaled-beta({self.a!r},{self.b!r},{self.lo!r},{self.hi!r})"


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    discrete = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("gaussian sigma must be positive")

    def contains(self, x: float) -> bool:
        return math.isfinite(x)

    def logpdf(self, x: float) -> float:
        if not math.isfinite(x):
            return NEG_INF
        z = (x - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)

    def grad_logpdf(self, x: float) -> float:
        return -(x - self.mu) / (self.sigma * self.sigma)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(self.mu, self.sigma))

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def bounds(self) -> tuple[float, float]:
        return -math.inf, math.inf

    @property
    def scale(self) -> float:
        # +-3 sigma plays the role of a support width
        return 6.0 * self.sigma

    def to_scipy(self):
        from scipy import stats
        return stats.norm(self.mu, self.sigma)

    def describe(self) -> str:
        return f"gaussian({self.mu!r},{self.sigma!r})"


@dataclass(frozen=True)
class DiscreteUniform:
    """Uniform over the integers ``lo..hi`` inclusive."""

    lo: int
    hi: int

    discrete = True

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError("empty discrete support")

    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi and float(x).is_integer()

    def logpdf(self, x: float) -> float:
        if not self.contains(x):
            return NEG_INF
        return -math.log(self.hi - self.lo + 1)

    def grad_logpdf(self, x: float) -> float:
        raise TypeError("discrete prior has no gradient")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.integers(self.lo, self.hi + 1))

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.lo), float(self.hi)

    @property
    def scale(self) -> float:
        return float(self.hi - self.lo + 1)

    def to_scipy(self):
        from scipy import stats
        return stats.randint(self.lo, self.hi + 1)

    def describe(self) -> str:
        return f"discrete-uniform({self.lo!r},{self.hi!r})"


Prior = Uniform | RescaledBeta | Gaussian | DiscreteUniform


def parse_prior(text: str) -> Prior:
    """Inverse of ``prior.describe()``."""
    name, _, rest = text.partition("(")
    args = [float(a) for a in rest.rstrip(")").split(",")]
    if name == "uniform":
        return Uniform(*args)
    if name == "rescaled-beta":
        return RescaledBeta(*args)
    if name == "gaussian":
        return Gaussian(*args)
    if name == "discrete-uniform":
        return DiscreteUniform(int(args[0]), int(args[1]))
    raise ValueError(f"unknown prior tag {name!r}")
