"""Synthetic-recovery and proposal-comparison experiments."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .config import ModelConfig, RenderConfig
from .inference import ChainResult, KernelMixture, Target, chain_seeds, run_chain
from .likelihood import ImageLikelihood, ObservationImage, chamfer
from .programs import BodyProgram, Program, make_program
from .proposals import DataProposal, ProposalIndex
from .render import render_trace
from .trace import SceneTrace

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    program: str = "object"
    model: ModelConfig = field(default_factory=ModelConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    mix: KernelMixture = field(default_factory=KernelMixture)
    chains: int = 5
    iters: int = 2000
    seed: int = 0
    sigma0: float | None = None
    observation: str | None = None
    truth_seed: int | None = None
    out: str = "pcad_out"

    def __post_init__(self):
        if self.program not in ("object", "body"):
            raise ValueError(f"unknown program {self.program!r}")
        if (self.observation is None) == (self.truth_seed is None):
            raise ValueError("set exactly one of observation / truth_seed")
        if self.chains < 1 or self.iters < 1:
            raise ValueError("chains and iters must be positive")


def synthetic_case(program: Program, render_cfg: RenderConfig, seed) -> tuple[SceneTrace, ObservationImage]:
    """Ground truth from the prior and its rendered contour as the observation.

    Prior draws whose render is empty (fully off-screen) are redrawn.
    """
    rng = np.random.default_rng(seed)
    while True:
        gt = program.sample_prior(rng)
        view = render_trace(gt, program, render_cfg)
        if view.on_count > 0:
            return gt, ObservationImage(view.contour)


@dataclass
class InferenceRun:
    results: list[ChainResult]
    likelihood: ImageLikelihood

    @property
    def best(self) -> ChainResult:
        return max(self.results, key=lambda r: r.map_log_posterior)

    @property
    def map_trace(self) -> SceneTrace:
        return self.best.map_trace


def infer(program: Program, obs: ObservationImage, render_cfg: RenderConfig,
          mix: KernelMixture, chains: int, iters: int, seed: int,
          sigma0: float | None = None, index: ProposalIndex | None = None) -> InferenceRun:
    lik = ImageLikelihood(obs, program, render_cfg, sigma0)
    target = Target(program, lik)
    proposal = None
    if index is not None and mix.data > 0:
        latents = mix.data_latents
        if latents is None:
            latents = program.default_data_latents()
        proposal = DataProposal(index, obs.contour, program.space, K=mix.data_k,
                                bandwidth_floor=mix.bandwidth_floor,
                                latents=latents, prior_weight=mix.data_prior_weight)
    results = [run_chain(target, mix, iters, np.random.default_rng(s), proposal)
               for s in chain_seeds(seed, chains)]
    return InferenceRun(results, lik)


def evaluate(program: Program, trace: SceneTrace, truth: SceneTrace,
             render_cfg: RenderConfig, obs: ObservationImage | None = None) -> metrics.EvalReport:
    """Depth and normal errors for objects, keypoint error for bodies."""
    rep = metrics.EvalReport(program=program.name)
    a = render_trace(trace, program, render_cfg)
    b = render_trace(truth, program, render_cfg)
    if obs is not None:
        rep.chamfer = chamfer(obs, a) if a.on_count else None
    rep.depth_extent = metrics.depth_extent(b.depth, render_cfg.far)
    if isinstance(program, BodyProgram):
        rep.keypoint_err, rep.keypoints_missing = metrics.keypoint_error(trace, truth, program,
                                                                         render_cfg)
    else:
        try:
            rep.z_mae = metrics.z_mae(a.depth, b.depth, far=render_cfg.far)
        except metrics.NoOverlapError:
            rep.z_mae = None
        rep.n_mse = metrics.n_mse(program.build_mesh(trace, normals=True),
                                  program.build_mesh(truth, normals=True))
    return rep


@dataclass
class RecoveryCase:
    seed: int
    report: metrics.EvalReport
    map_log_posterior: float
    truth_log_posterior: float


def recovery(program_name: str, n_scenes: int, chains: int, iters: int, seed: int,
             mix: KernelMixture | None = None, sigma0: float | None = None,
             render_cfg: RenderConfig | None = None,
             model_cfg: ModelConfig | None = None) -> list[RecoveryCase]:
    """Fit ``n_scenes`` prior-sampled synthetic observations and score the MAP traces."""
    program = make_program(program_name, model_cfg)
    render_cfg = render_cfg or RenderConfig()
    mix = mix or KernelMixture()
    out = []
    for s in range(n_scenes):
        gt, obs = synthetic_case(program, render_cfg, (seed, s))
        run = infer(program, obs, render_cfg, mix, chains, iters, seed * 1000 + s, sigma0)
        rep = evaluate(program, run.map_trace, gt, render_cfg, obs)
        tgt = Target(program, run.likelihood)
        out.append(RecoveryCase(s, rep, run.best.map_log_posterior, tgt.log_posterior(gt)))
        log.info("scene %d: %s", s, rep)
    return out


# -- data-driven proposal comparison --------------------------------------

def first_crossing(scores: np.ndarray, threshold: float) -> int:
    """1-based iteration where ``scores`` first exceeds ``threshold``; ``len+1`` if never."""
    hit = np.nonzero(np.asarray(scores) > threshold)[0]
    return int(hit[0]) + 1 if hit.size else len(scores) + 1


@dataclass
class ProposalComparison:
    thresholds: np.ndarray                 # (cases,)
    baseline_hits: np.ndarray              # (cases, chains)
    proposal_hits: np.ndarray
    baseline_final: np.ndarray             # (cases, chains) final best-so-far
    proposal_final: np.ndarray

    @property
    def median_hit(self) -> tuple[float, float]:
        return float(np.median(self.baseline_hits)), float(np.median(self.proposal_hits))

    @property
    def median_final(self) -> tuple[float, float]:
        return float(np.median(self.baseline_final)), float(np.median(self.proposal_final))

    @property
    def faster(self) -> bool:
        b, p = self.median_hit
        return p < b

    @property
    def no_worse(self) -> bool:
        b, p = self.median_final
        return p >= b


def compare_proposals(program: Program, index: ProposalIndex, render_cfg: RenderConfig,
                      mix: KernelMixture, n_cases: int, chains: int, iters: int, seed: int,
                      sigma0: float | None = None, quantile: float = 0.9) -> ProposalComparison:
    """Chains with and without the data kernel on shared synthetic cases.

    The baseline sets the data weight to zero (other weights renormalised).
    Per case, the threshold is the ``quantile`` of the baseline chains' final
    best-so-far log posterior; both arms use the same chain seeds.
    """
    base_mix = KernelMixture(**{**mix.__dict__, "data": 0.0})
    th, bh, ph, bf, pf = [], [], [], [], []
    for c in range(n_cases):
        gt, obs = synthetic_case(program, render_cfg, (seed, c, 7))
        b = infer(program, obs, render_cfg, base_mix, chains, iters, seed * 1000 + c, sigma0)
        p = infer(program, obs, render_cfg, mix, chains, iters, seed * 1000 + c, sigma0, index)
        bcur = np.array([r.best_so_far() for r in b.results])
        pcur = np.array([r.best_so_far() for r in p.results])
        t = float(np.quantile(bcur[:, -1], quantile))
        th.append(t)
        bh.append([first_crossing(x, t) for x in bcur])
        ph.append([first_crossing(x, t) for x in pcur])
        bf.append(bcur[:, -1])
        pf.append(pcur[:, -1])
        log.info("case %d: threshold %.2f base %s prop %s", c, t, bh[-1], ph[-1])
    return ProposalComparison(np.array(th), np.array(bh), np.array(ph), np.array(bf), np.array(pf))


def write_runs(run: InferenceRun, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(run.results):
        r.write_log(out / f"chain_{i}.jsonl")
