"""Latent variables and scene traces.

A :class:`LatentSpace` is the immutable description of a program's random
choices (names, priors, affine-group labels).  A :class:`SceneTrace` pairs a
space with a value vector and keeps the log prior in sync incrementally.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .priors import Prior, parse_prior


@dataclass(frozen=True)
class LatentVar:
    name: str
    value: float
    prior: Prior
    group: str | None = None

    @property
    def kind(self) -> str:
        return "discrete" if self.prior.discrete else "continuous"


class LatentSpace:
    """Ordered, immutable collection of latent declarations."""

    def __init__(self, names: Sequence[str], priors: Sequence[Prior],
                 groups: Sequence[str | None]):
        if not (len(names) == len(priors) == len(groups)):
            raise ValueError("names, priors and groups must align")
        if len(set(names)) != len(names):
            raise ValueError("duplicate latent names")
        self.names = tuple(names)
        self.priors = tuple(priors)
        self.groups = tuple(groups)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.continuous = np.array([not p.discrete for p in self.priors])
        self.scales = np.array([p.scale for p in self.priors], dtype=float)

    def __len__(self):
        return len(self.names)

    def indices(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self.index[n] for n in names], dtype=int)

    def group_names(self) -> list[str]:
        seen = []
        for g in self.groups:
            if g is not None and g not in seen:
                seen.append(g)
        return seen

    def group_indices(self, group: str) -> np.ndarray:
        return np.array([i for i, g in enumerate(self.groups) if g == group], dtype=int)

    def log_prior_terms(self, values: np.ndarray) -> np.ndarray:
        return np.array([p.logpdf(float(v)) for p, v in zip(self.priors, values)])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([p.sample(rng) for p in self.priors], dtype=float)


class SceneTrace:
    """Values for every latent in a space plus cached derived quantities.

    ``log_prior`` is maintained incrementally by :meth:`set`;
    ``trace_log_prior`` recomputes it from scratch.
    """

    def __init__(self, space: LatentSpace, values, program: str,
                 log_prior: float | None = None):
        self.space = space
        self.values = np.array(values, dtype=float)
        if self.values.shape != (len(space),):
            raise ValueError("value vector does not match latent space")
        self.program = program
        self.log_prior = (float(np.sum(space.log_prior_terms(self.values)))
                          if log_prior is None else log_prior)
        self.cached_render = None
        self.cached_log_likelihood: float | None = None

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.space.index[name]])

    def get(self, names: Iterable[str]) -> np.ndarray:
        return self.values[self.space.indices(names)]

    @property
    def latents(self) -> list[LatentVar]:
        sp = self.space
        return [LatentVar(n, float(v), p, g)
                for n, v, p, g in zip(sp.names, self.values, sp.priors, sp.groups)]

    def invalidate(self):
        self.cached_render = None
        self.cached_log_likelihood = None

    def set(self, name_or_index, value: float):
        """In-place single latent update with incremental log prior."""
        i = (self.space.index[name_or_index] if isinstance(name_or_index, str)
             else int(name_or_index))
        prior = self.space.priors[i]
        old = prior.logpdf(float(self.values[i]))
        new = prior.logpdf(float(value))
        self.values[i] = value
        if math.isinf(old) or math.isinf(new):
            self.log_prior = trace_log_prior(self)
        else:
            self.log_prior += new - old
        self.invalidate()

    def replace(self, idx, new_values) -> "SceneTrace":
        """Copy with the latents at ``idx`` set to ``new_values``."""
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        new_values = np.atleast_1d(np.asarray(new_values, dtype=float))
        priors = self.space.priors
        delta = 0.0
        finite = math.isfinite(self.log_prior)
        for i, v in zip(idx, new_values):
            old = priors[i].logpdf(float(self.values[i]))
            new = priors[i].logpdf(float(v))
            if math.isinf(old) or math.isinf(new):
                finite = False
                break
            delta += new - old
        values = self.values.copy()
        values[idx] = new_values
        if finite:
            return SceneTrace(self.space, values, self.program, self.log_prior + delta)
        return SceneTrace(self.space, values, self.program)

    def copy(self) -> "SceneTrace":
        out = SceneTrace(self.space, self.values.copy(), self.program, self.log_prior)
        out.cached_render = self.cached_render
        out.cached_log_likelihood = self.cached_log_likelihood
        return out

    def in_support(self) -> bool:
        return all(p.contains(float(v)) for p, v in zip(self.space.priors, self.values))

    def to_record(self) -> dict:
        return {
            "program": self.program,
            "latents": [
                {"name": n, "value": float(v), "prior": p.describe(), "group": g}
                for n, v, p, g in zip(self.space.names, self.values,
                                      self.space.priors, self.space.groups)
            ],
        }


def trace_log_prior(trace: SceneTrace) -> float:
    """Sum of per-latent prior log densities (``-inf`` if any is out of support)."""
    return float(np.sum(trace.space.log_prior_terms(trace.values)))


def _fmt(x: float) -> str:
    return format(x, ".17g")


def dumps_trace(trace: SceneTrace) -> str:
    """One JSON object per line: a header then one record per latent."""
    lines = [json.dumps({"program": trace.program, "n": len(trace.space)})]
    for n, v, p, g in zip(trace.space.names, trace.values,
                          trace.space.priors, trace.space.groups):
        # value kept as a 17-significant-digit decimal string for exact round trip
        lines.append(json.dumps({"name": n, "value": _fmt(float(v)),
                                 "prior": p.describe(), "group": g}))
    return "\n".join(lines) + "\n"


def loads_trace(text: str, space: LatentSpace | None = None) -> SceneTrace:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    header, rows = rows[0], rows[1:]
    if len(rows) != header["n"]:
        raise ValueError("truncated trace file")
    if space is None:
        space = LatentSpace([r["name"] for r in rows],
                            [parse_prior(r["prior"]) for r in rows],
                            [r["group"] for r in rows])
    elif list(space.names) != [r["name"] for r in rows]:
        raise ValueError("trace latents do not match the given space")
    values = [float(r["value"]) for r in rows]
    return SceneTrace(space, values, header["program"])


def save_trace(trace: SceneTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_trace(trace))


def load_trace(path, space: LatentSpace | None = None) -> SceneTrace:
    with open(path) as fh:
        return loads_trace(fh.read(), space)
