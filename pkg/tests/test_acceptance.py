"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The long synthetic experiments (criteria 6-8) take most of the runtime, so
they are also marked ``slow``; ``pytest -m "not slow"`` skips them.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from pcad.cli import main
from pcad.experiments import compare_proposals, recovery, synthetic_case
from pcad.geometry import icosphere, lathe
from pcad.armature import ArmatureTree, apply_armature
from pcad.inference import (HMC, ChainState, FlatLikelihood, KernelMixture, Target, run_chain,
                            step_block, step_data, step_hmc, step_single)
from pcad.likelihood import ObservationImage, chamfer, distance_transform, gaussian_log_density
from pcad.priors import Gaussian
from pcad.programs import BodyProgram, ObjectProgram, Program
from pcad.proposals import DataProposal, generate_dataset
from pcad.render import rasterize
from pcad.trace import LatentSpace

SEED = 0


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def brute_edt(on):
    ys, xs = np.nonzero(on)
    gy, gx = np.mgrid[:on.shape[0], :on.shape[1]]
    return np.sqrt(((gy[..., None] - ys) ** 2 + (gx[..., None] - xs) ** 2).min(axis=-1))


def thinning_lag(x, tol=0.05):
    """Smallest lag whose sample autocorrelation drops below ``tol``."""
    x = np.asarray(x, float)
    if x.std() == 0:
        return len(x)
    x = (x - x.mean()) / x.std()
    f = np.fft.rfft(x, 2 * len(x))
    ac = np.fft.irfft(f * np.conj(f))[:len(x)] / len(x)
    below = np.nonzero(np.abs(ac) < tol)[0]
    return int(below[0]) if below.size else len(x)


class GaussianLik:
    def __init__(self, mu, sd):
        self.mu, self.sd = np.asarray(mu, float), np.asarray(sd, float)

    def __call__(self, trace):
        z = (trace.values - self.mu) / self.sd
        return float(-0.5 * z @ z)


def test_1_distance_transform_exact(report):
    distance_transform(np.ones((2, 2), bool))       # compile outside the timing
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    bad = 0
    for k in range(200):
        on = rng.random((32, 32)) < rng.uniform(0.005, 0.5)
        on[rng.integers(32), rng.integers(32)] = True
        bad += int(np.sum(distance_transform(on) != brute_edt(on)))
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    report(1, ok, f"{bad} mismatching cells over 200 maps, {dt:.2f} s")
    assert ok


def test_2_chamfer_identities(report):
    rng = np.random.default_rng(SEED)
    img = rng.random((32, 32)) < 0.1
    self_rho = chamfer(ObservationImage(img), img)
    obs = np.zeros((10, 10), bool)
    obs[0, 0] = True
    tmpl = np.zeros((10, 10), bool)
    tmpl[3, 4] = True
    rho345 = chamfer(ObservationImage(obs), tmpl)
    ll = gaussian_log_density(0.0, 1.0)
    # -0.9189385 is -log(2 pi)/2 rounded to 7 places: match it to that rounding
    # and the unrounded constant to 1e-9
    ok = (self_rho == 0 and rho345 == 5.0 and round(ll, 7) == -0.9189385
          and abs(ll + 0.5 * math.log(2 * math.pi)) <= 1e-9)
    report(2, ok, f"rho(I,I)={self_rho}, rho(3-4-5)={rho345}, loglik(0,1)={ll:.10f}")
    assert ok


def test_3_prior_recovery_per_kernel(report, render_cfg):
    prog = ObjectProgram()
    tgt = Target(prog, FlatLikelihood())
    index = generate_dataset(500, prog, render_cfg, np.random.default_rng(SEED + 1))
    _, obs = synthetic_case(prog, render_cfg, SEED + 2)
    mix = KernelMixture()
    proposal = DataProposal(index, obs.contour, prog.space, mix.data_k, mix.bandwidth_floor,
                            prior_weight=mix.data_prior_weight)
    hmc = HMC(tgt, prog.default_hmc_latents(), mix.hmc_step, mix.hmc_steps, mix.fd_step)
    moved = {"single": list(prog.space.names),
             "block": [n for n, g in zip(prog.space.names, prog.space.groups) if g],
             "hmc": prog.default_hmc_latents(),
             "data": list(index.latent_names)}
    step = {"single": lambda s, r: step_single(s, tgt, r, mix),
            "block": lambda s, r: step_block(s, tgt, r, mix),
            "hmc": lambda s, r: step_hmc(s, tgt, r, mix, hmc),
            "data": lambda s, r: step_data(s, tgt, proposal, r, mix)}
    t0 = time.perf_counter()
    lines, ok = [], True
    for k, kernel in enumerate(("single", "block", "hmc", "data")):
        rng = np.random.default_rng([SEED, k])
        st = ChainState.initial(tgt, prog.sample_prior(rng))
        cols = prog.space.indices(moved[kernel])
        X = np.empty((50000, len(cols)))
        for i in range(50000):
            step[kernel](st, rng)
            X[i] = st.trace.values[cols]
        lag = max(thinning_lag(X[:, j]) for j in range(X.shape[1]))
        pv = [stats.kstest(X[::lag, j], prog.space.priors[c].to_scipy().cdf).pvalue
              for j, c in enumerate(cols)]
        fails = sum(p <= 0.01 for p in pv)
        ok &= fails == 0
        lines.append(f"{kernel}: {len(cols)} latents, thin {lag}, n={len(X[::lag])}, "
                     f"min p={min(pv):.3g}, {fails} below 0.01")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    report(3, ok, "; ".join(lines) + f"; {dt:.0f} s")
    assert ok


def test_4_conjugate_posterior(report):
    prog = Program(LatentSpace(["mu"], [Gaussian(0.0, 1.0)], [None]))
    y, tau = 1.0, 1.0
    post_var = 1.0 / (1.0 + 1.0 / tau ** 2)
    post_mean = post_var * y / tau ** 2
    r = run_chain(Target(prog, GaussianLik([y], [tau])), KernelMixture(1, 0, 0, 0), 20000,
                  np.random.default_rng(SEED), keep_samples=True)
    x = r.samples[:, 0]
    batches = np.array_split(x, 50)
    mcse = np.std([b.mean() for b in batches], ddof=1) / math.sqrt(50)
    ok = abs(x.mean() - post_mean) <= 3 * mcse
    report(4, ok, f"mean {x.mean():.4f} vs {post_mean} (3 MCSE = {3 * mcse:.4f}), "
                  f"var {x.var():.4f} vs {post_var}")
    assert ok


def test_5_leapfrog_order(report):
    prog = Program(LatentSpace(["a", "b"], [Gaussian(0, 1), Gaussian(1, 2)], [None, None]))
    tgt = Target(prog, GaussianLik([0.4, -0.2], [0.7, 1.5]))
    hmc = HMC(tgt, ["a", "b"], 0.02, 10)
    rng = np.random.default_rng(SEED)
    starts = [(prog.sample_prior(rng), rng.standard_normal(2)) for _ in range(200)]
    err = [np.mean([abs(hmc.delta_h(t, p, step=eps)) for t, p in starts]) for eps in (0.02, 0.01)]
    ok = err[0] / err[1] >= 3
    report(5, ok, f"mean |dH| {err[0]:.3e} -> {err[1]:.3e}, ratio {err[0] / err[1]:.2f}")
    assert ok


@pytest.mark.slow
def test_6_object_recovery(report):
    t0 = time.perf_counter()
    cases = recovery("object", 10, 5, 2000, SEED)
    per = (time.perf_counter() - t0) / 10
    good = 0
    rows = []
    for c in cases:
        r = c.report
        zrel = r.z_mae / r.depth_extent if r.z_mae is not None and r.depth_extent else math.inf
        hit = r.chamfer <= 1.5 and zrel <= 0.05
        good += hit
        rows.append(f"s{c.seed}: rho={r.chamfer:.2f} zrel={zrel:.3f}"
                    f" map={c.map_log_posterior:.1f} gt={c.truth_log_posterior:.1f}")
    rho_ok = sum(c.report.chamfer <= 1.5 for c in cases)
    ok = good >= 8
    report(6, ok, f"{good}/10 scenes meet rho<=1.5 and Z-MAE<=5% (rho alone: {rho_ok}/10), "
                  f"{per:.0f} s/scene | " + "; ".join(rows))
    assert ok


@pytest.mark.slow
def test_7_body_recovery(report):
    t0 = time.perf_counter()
    cases = recovery("body", 10, 5, 2000, SEED)
    per = (time.perf_counter() - t0) / 10
    errs = [c.report.keypoint_err for c in cases]
    good = sum(e <= 5 for e in errs)
    ok = good >= 8
    report(7, ok, f"{good}/10 scenes with keypoint error <= 5 px, {per:.0f} s/scene | "
                  + "; ".join(f"s{c.seed}: {e:.2f}px rho={c.report.chamfer:.2f} "
                              f"map={c.map_log_posterior:.1f} gt={c.truth_log_posterior:.1f}"
                              for c, e in zip(cases, errs)))
    assert ok


@pytest.mark.slow
def test_8_data_driven_speedup(report, render_cfg):
    prog = BodyProgram()
    index = generate_dataset(20000, prog, render_cfg, np.random.default_rng(SEED + 8))
    # cases drawn from a seed not used while settling the kernel defaults
    cmp = compare_proposals(prog, index, render_cfg, KernelMixture(), 20, 10, 200, SEED + 1)
    (bh, ph), (bf, pf) = cmp.median_hit, cmp.median_final
    ok = cmp.faster and cmp.no_worse
    report(8, ok, f"index {len(index)}; median iteration-to-threshold {bh:.0f} (alpha_data=0) "
                  f"vs {ph:.0f} (0.1); median final MAP {bf:.2f} vs {pf:.2f}; chains crossing "
                  f"{np.mean(cmp.baseline_hits <= 200):.2f} vs {np.mean(cmp.proposal_hits <= 200):.2f}")
    assert ok


def test_9_geometry(report, render_cfg, body_program):
    m = lathe(np.ones(5), np.ones(5), 64, normals=False)
    lat = float(m.face_areas()[:2 * 64 * 9].sum())
    area_err = abs(lat - 2 * math.pi * 9) / (2 * math.pi * 9)
    rest = body_program.rest_mesh
    posed = apply_armature(rest, ArmatureTree(body_program.joints), body_program.bindings)
    fixed = float(np.abs(posed.vertices - rest.vertices).max())
    d = render_cfg.camera_distance
    depth = rasterize(icosphere(5), render_cfg)
    centre = float(depth[render_cfg.height // 2, render_cfg.width // 2])
    # camera-z of the first hit of the ray through that pixel centre
    u = np.array([0.5 / render_cfg.focal, 0.5 / render_cfg.focal, 1.0])
    b, c = -2 * u[2] * d, d * d - 1
    ray = (-b - math.sqrt(b * b - 4 * (u @ u) * c)) / (2 * (u @ u))
    ok = area_err <= 0.02 and fixed <= 1e-9 and abs(centre - ray) <= 1e-3 * d
    report(9, ok, f"cylinder area error {area_err:.4%}; identity pose max shift {fixed:.1e}; "
                  f"centre depth {centre:.6f} vs ray {ray:.6f}")
    assert ok


def test_10_determinism(report, tmp_path):
    def run(d):
        args = ["--render-size", "64x64", "--seed", "5", "--out"]
        main(["sample", "--n", "2", "--program", "body"] + args + [str(d / "s")])
        main(["infer", "--truth-seed", "4", "--iters", "20", "--chains", "2"] + args
             + [str(d / "i")])
        main(["train-proposals", "--n", "20"] + args + [str(d / "idx.bin")])
        return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*"))
                if p.is_file()}
    a, b = run(tmp_path / "a"), run(tmp_path / "b")
    traces = [k for k in a if k.endswith(".jsonl")]
    same = [k for k in a if a[k] == b.get(k)]
    ok = a.keys() == b.keys() and len(same) == len(a) and len(traces) >= 5
    report(10, ok, f"{len(same)}/{len(a)} files byte-identical across reruns "
                   f"({len(traces)} trace/log files)")
    assert ok
