"""Mixture-of-kernels Metropolis-Hastings over scene traces.

Four kernels are mixed by per-iteration ancestral choice: single-site prior
resimulation (Gibbs enumeration for discrete latents), blocked resimulation
of one affine group, a data-driven KDE independence proposal, and
Hamiltonian Monte Carlo with finite-difference likelihood gradients.  Each
kernel is individually MH-corrected, so the mixture leaves the posterior
``P(S) P(I_D | render(S))`` invariant.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .geometry import GeometryError
from .likelihood import EMPTY_RENDER_LOGLIK, EmptyRenderError
from .trace import SceneTrace

log = logging.getLogger(__name__)

KERNELS = ("single", "block", "data", "hmc")
RECOVERABLE = (GeometryError, EmptyRenderError, np.linalg.LinAlgError, FloatingPointError)


@dataclass
class KernelMixture:
    single: float = 0.5
    block: float = 0.2
    data: float = 0.1
    hmc: float = 0.2
    hmc_step: float = 0.01          # leapfrog step in prior-range units
    hmc_steps: int = 3
    hmc_latents: tuple[str, ...] | None = None
    fd_step: float = 1e-3           # central-difference step, fraction of prior range
    data_k: int = 10
    bandwidth_floor: float = 1e-6
    data_latents: tuple[str, ...] | None = None
    data_prior_weight: float = 0.1
    block_coupling: dict[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        w = self.weights_raw()
        if np.any(w < 0):
            raise ValueError("kernel weights must be non-negative")
        if w.sum() <= 0:
            raise ValueError("at least one kernel weight must be positive")

    def weights_raw(self) -> np.ndarray:
        return np.array([self.single, self.block, self.data, self.hmc], dtype=float)

    def weights(self, data_available: bool = True) -> np.ndarray:
        """Normalised weights; the data kernel is disabled without an index."""
        w = self.weights_raw()
        if not data_available and w[2] > 0:
            log.info("no proposal index: data-driven kernel disabled")
            w[2] = 0.0
        return w / w.sum()

    @classmethod
    def from_alphas(cls, text: str, **kw) -> "KernelMixture":
        a = [float(x) for x in text.split(",")]
        if len(a) != 4:
            raise ValueError("expected four comma-separated weights")
        return cls(single=a[0], block=a[1], hmc=a[2], data=a[3], **kw)


class Target:
    """Unnormalised posterior: trace log prior plus a pluggable log likelihood."""

    def __init__(self, program, loglik: Callable[[SceneTrace], float]):
        self.program = program
        self.loglik = loglik

    @property
    def space(self):
        return self.program.space

    def log_likelihood(self, trace: SceneTrace) -> float:
        return float(self.loglik(trace))

    def log_posterior(self, trace: SceneTrace) -> float:
        return trace.log_prior + self.log_likelihood(trace)


class FlatLikelihood:
    def __call__(self, trace) -> float:
        return 0.0


@dataclass
class ChainState:
    trace: SceneTrace
    log_likelihood: float
    iteration: int = 0
    proposed: dict = field(default_factory=lambda: dict.fromkeys(KERNELS, 0))
    accepted: dict = field(default_factory=lambda: dict.fromkeys(KERNELS, 0))
    errors: int = 0
    scores: list = field(default_factory=list)

    @classmethod
    def initial(cls, target: Target, trace: SceneTrace) -> "ChainState":
        return cls(trace, target.log_likelihood(trace))

    @property
    def log_posterior(self) -> float:
        return self.trace.log_prior + self.log_likelihood


def log_acceptance(cur_lp, cur_ll, new_lp, new_ll, log_q_forward, log_q_reverse) -> float:
    """log min(1, [L' P' q(S'->S)] / [L P q(S->S')])."""
    if new_lp == -math.inf:
        return -math.inf
    a = (new_ll + new_lp + log_q_reverse) - (cur_ll + cur_lp + log_q_forward)
    if math.isnan(a):
        return -math.inf
    return min(0.0, a)


def accept(state: ChainState, proposed: SceneTrace, proposed_ll: float,
           log_q_forward: float, log_q_reverse: float, rng: np.random.Generator,
           kernel: str = "single") -> bool:
    """MH accept/reject; on acceptance the state's trace is replaced."""
    state.proposed[kernel] += 1
    a = log_acceptance(state.trace.log_prior, state.log_likelihood, proposed.log_prior,
                       proposed_ll, log_q_forward, log_q_reverse)
    if a == 0.0 or math.log(rng.random()) < a:
        state.trace = proposed
        state.log_likelihood = proposed_ll
        state.accepted[kernel] += 1
        return True
    return False


def _propose_values(state, target, rng, idx, new_values, log_qf, log_qr, kernel):
    proposed = state.trace.replace(idx, new_values)
    if proposed.log_prior == -math.inf:
        state.proposed[kernel] += 1
        return False
    return accept(state, proposed, target.log_likelihood(proposed), log_qf, log_qr, rng, kernel)


def step_single(state: ChainState, target: Target, rng: np.random.Generator,
                mix: KernelMixture | None = None) -> ChainState:
    """Resimulate one uniformly chosen latent from its prior (Gibbs if discrete)."""
    space = target.space
    i = int(rng.integers(len(space)))
    prior = space.priors[i]
    if prior.discrete:
        return _gibbs(state, target, rng, i)
    old = float(state.trace.values[i])
    new = prior.sample(rng)
    _propose_values(state, target, rng, i, new, prior.logpdf(new), prior.logpdf(old), "single")
    return state


def _gibbs(state, target, rng, i) -> ChainState:
    prior = target.space.priors[i]
    support = prior.support()
    cands = [state.trace.replace(i, v) for v in support]
    lls = np.array([target.log_likelihood(c) for c in cands])
    lps = np.array([c.log_prior for c in cands])
    logp = lls + lps
    probs = np.exp(logp - logsumexp(logp))
    k = int(rng.choice(len(support), p=probs))
    state.proposed["single"] += 1
    state.accepted["single"] += 1
    state.trace, state.log_likelihood = cands[k], float(lls[k])
    return state


def block_indices(space, group: str, coupling: dict | None) -> np.ndarray:
    idx = list(space.group_indices(group))
    if coupling and group in coupling:
        idx += [space.index[n] for n in coupling[group] if space.index[n] not in idx]
    return np.array(idx, dtype=int)


def step_block(state: ChainState, target: Target, rng: np.random.Generator,
               mix: KernelMixture | None = None) -> ChainState:
    """Jointly resimulate one affine group (plus coupled latents) from the prior."""
    space = target.space
    groups = space.group_names()
    if not groups:
        raise ValueError("trace has no affine groups")
    coupling = None if mix is None else mix.block_coupling
    if coupling is None:
        coupling = target.program.default_block_coupling()
    group = groups[int(rng.integers(len(groups)))]
    idx = block_indices(space, group, coupling)
    return step_block_indices(state, target, rng, idx)


def step_block_indices(state, target, rng, idx) -> ChainState:
    priors = [target.space.priors[i] for i in idx]
    old = state.trace.values[idx]
    new = np.array([p.sample(rng) for p in priors])
    lqf = sum(p.logpdf(float(v)) for p, v in zip(priors, new))
    lqr = sum(p.logpdf(float(v)) for p, v in zip(priors, old))
    _propose_values(state, target, rng, idx, new, lqf, lqr, "block")
    return state


def step_data(state: ChainState, target: Target, proposal, rng: np.random.Generator,
              mix: KernelMixture | None = None) -> ChainState:
    """Independence move from an observation-conditioned KDE (see ``DataProposal``)."""
    new = proposal.sample(rng)
    old = state.trace.values[proposal.cols]
    _propose_values(state, target, rng, proposal.cols, new,
                    proposal.logpdf(new), proposal.logpdf(old), "data")
    return state


# -- Hamiltonian kernel ---------------------------------------------------

class HMC:
    """Leapfrog in prior-range-normalised coordinates with reflection at bounds.

    Working in ``q = x / scale`` is equivalent to a diagonal mass matrix in
    the raw units; the mass is the identity in ``q``.
    """

    def __init__(self, target: Target, names, step: float, n_steps: int,
                 fd_step: float = 1e-3):
        space = target.space
        self.target = target
        self.idx = space.indices(names)
        if not np.all(space.continuous[self.idx]):
            raise ValueError("HMC latents must be continuous")
        self.priors = [space.priors[i] for i in self.idx]
        self.scale = space.scales[self.idx]
        self.lo = np.array([p.bounds[0] for p in self.priors]) / self.scale
        self.hi = np.array([p.bounds[1] for p in self.priors]) / self.scale
        self.step = step
        self.n_steps = n_steps
        self.fd_step = fd_step

    def trace_at(self, base: SceneTrace, q: np.ndarray) -> SceneTrace:
        return base.replace(self.idx, q * self.scale)

    def _probe(self, base: SceneTrace, q: np.ndarray) -> SceneTrace:
        # likelihood-only evaluation point; the prior is not needed, so leave it nan
        values = base.values.copy()
        values[self.idx] = q * self.scale
        return SceneTrace(base.space, values, base.program, log_prior=math.nan)

    def grad_log_likelihood(self, trace: SceneTrace) -> np.ndarray:
        """Central differences in normalised coordinates (step ``fd_step``)."""
        h = self.fd_step
        q = trace.values[self.idx] / self.scale
        g = np.empty(len(self.idx))
        for k in range(len(self.idx)):
            qp = q.copy()
            qm = q.copy()
            qp[k] += h
            qm[k] -= h
            lp = self.target.log_likelihood(self._probe(trace, qp))
            lm = self.target.log_likelihood(self._probe(trace, qm))
            g[k] = (lp - lm) / (2 * h)
        return g

    def grad_log_prior(self, trace: SceneTrace) -> np.ndarray:
        x = trace.values[self.idx]
        return np.array([p.grad_logpdf(float(v)) for p, v in zip(self.priors, x)]) * self.scale

    def grad_log_posterior(self, trace: SceneTrace) -> np.ndarray:
        return self.grad_log_prior(trace) + self.grad_log_likelihood(trace)

    def reflect(self, q: np.ndarray, p: np.ndarray) -> None:
        for k in range(len(q)):
            lo, hi = self.lo[k], self.hi[k]
            while q[k] < lo or q[k] > hi:
                if q[k] < lo:
                    q[k] = 2 * lo - q[k]
                else:
                    q[k] = 2 * hi - q[k]
                p[k] = -p[k]

    def trajectory(self, trace: SceneTrace, p0: np.ndarray, step: float | None = None,
                   n_steps: int | None = None):
        """Leapfrog from ``(trace, p0)``; returns ``(trace', p')``."""
        eps = self.step if step is None else step
        L = self.n_steps if n_steps is None else n_steps
        q = trace.values[self.idx] / self.scale
        p = p0.copy()
        cur = trace
        if L == 0:
            return cur, p
        g = self.grad_log_posterior(cur)
        for _ in range(L):
            p += 0.5 * eps * g
            q = q + eps * p
            self.reflect(q, p)
            cur = self.trace_at(trace, q)
            if cur.log_prior == -math.inf:
                raise FloatingPointError("trajectory left the prior support")
            g = self.grad_log_posterior(cur)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
            p += 0.5 * eps * g
        return cur, p

    def delta_h(self, trace: SceneTrace, p0: np.ndarray, step=None, n_steps=None) -> float:
        """Energy error H(end) - H(start) of one trajectory."""
        end, p1 = self.trajectory(trace, p0, step, n_steps)
        h0 = -self.target.log_posterior(trace) + 0.5 * p0 @ p0
        h1 = -self.target.log_posterior(end) + 0.5 * p1 @ p1
        return h1 - h0


def step_hmc(state: ChainState, target: Target, rng: np.random.Generator,
             mix: KernelMixture | None = None, hmc: HMC | None = None) -> ChainState:
    if hmc is None:
        mix = mix or KernelMixture()
        names = mix.hmc_latents or target.program.default_hmc_latents()
        hmc = HMC(target, names, mix.hmc_step, mix.hmc_steps, mix.fd_step)
    p0 = rng.standard_normal(len(hmc.idx))
    try:
        end, p1 = hmc.trajectory(state.trace, p0)
    except FloatingPointError:
        state.proposed["hmc"] += 1
        state.errors += 1
        return state
    accept(state, end, target.log_likelihood(end), -0.5 * p0 @ p0, -0.5 * p1 @ p1, rng, "hmc")
    return state


# -- chains ---------------------------------------------------------------

@dataclass
class ChainResult:
    records: list
    scores: np.ndarray          # (iters,) log posterior after each iteration
    map_trace: SceneTrace
    map_log_posterior: float
    state: ChainState
    samples: np.ndarray | None = None    # (iters, D) visited values when kept

    def acceptance(self) -> dict:
        s = self.state
        return {k: (s.accepted[k] / s.proposed[k] if s.proposed[k] else None) for k in KERNELS}

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.scores)

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


def run_chain(target: Target, mix: KernelMixture, iters: int, rng: np.random.Generator,
              data_proposal=None, init: SceneTrace | None = None,
              keep_samples: bool = False) -> ChainResult:
    """Run one chain from a prior draw (or ``init``); tracks the MAP-visited trace."""
    if iters <= 0:
        raise ValueError("iters must be positive")
    w = mix.weights(data_available=data_proposal is not None)
    trace = init.copy() if init is not None else target.program.sample_prior(rng)
    state = ChainState.initial(target, trace)
    hmc = None
    if w[3] > 0:
        names = mix.hmc_latents or target.program.default_hmc_latents()
        hmc = HMC(target, names, mix.hmc_step, mix.hmc_steps, mix.fd_step)
    records = []
    scores = np.empty(iters)
    samples = np.empty((iters, len(target.space))) if keep_samples else None
    best, best_lp = state.trace, state.log_posterior
    cdf = np.cumsum(w)
    for it in range(iters):
        k = min(int(np.searchsorted(cdf, rng.random(), side="right")), 3)
        kernel = KERNELS[k]
        before = state.accepted[kernel]
        try:
            if kernel == "single":
                step_single(state, target, rng, mix)
            elif kernel == "block":
                step_block(state, target, rng, mix)
            elif kernel == "data":
                step_data(state, target, data_proposal, rng, mix)
            else:
                step_hmc(state, target, rng, mix, hmc)
        except RECOVERABLE as exc:
            log.debug("kernel %s failed: %s", kernel, exc)
            state.errors += 1
        state.iteration = it + 1
        lp = state.log_posterior
        scores[it] = lp
        if samples is not None:
            samples[it] = state.trace.values
        state.scores.append((it + 1, lp))
        if lp > best_lp:
            best, best_lp = state.trace, lp
        records.append({"iteration": it + 1, "kernel": kernel,
                        "accepted": state.accepted[kernel] > before,
                        "log_prior": state.trace.log_prior,
                        "log_likelihood": state.log_likelihood})
    return ChainResult(records, scores, best, best_lp, state, samples)


def chain_seeds(master_seed: int, n: int) -> list[np.random.SeedSequence]:
    """Counter-based split: chain ``i`` always gets the same stream."""
    return [np.random.SeedSequence(master_seed, spawn_key=(i,)) for i in range(n)]


def run_chains(target: Target, mix: KernelMixture, iters: int, n_chains: int,
               master_seed: int, data_proposal=None) -> list[ChainResult]:
    return [run_chain(target, mix, iters, np.random.default_rng(s), data_proposal)
            for s in chain_seeds(master_seed, n_chains)]


def is_empty_render(ll: float) -> bool:
    return ll <= EMPTY_RENDER_LOGLIK
