"""Command-line entry point: ``pcad {sample,infer,train-proposals,evaluate}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, metrics
from .config import ModelConfig, RenderConfig, load_model_config, save_model_config
from .geometry import write_obj
from .inference import KernelMixture
from .likelihood import EmptyObservationError, observation_from_image
from .programs import make_program
from .proposals import ProposalIndex, generate_dataset
from .render import depth_to_pgm, read_pnm, render_trace, write_pbm, write_pgm
from .trace import load_trace, save_trace

OUT_ENV = "PCAD_OUT"
log = logging.getLogger("pcad")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("render size must be positive")
    return w, h


def _render_cfg(args) -> RenderConfig:
    cfg = RenderConfig()
    if args.render_size is not None:
        cfg = cfg.with_size(*args.render_size)
    return cfg


def _model_cfg(args) -> ModelConfig:
    return load_model_config(args.model_config) if args.model_config else ModelConfig()


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "pcad_out")
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _write_view(view, cfg: RenderConfig, stem: Path) -> None:
    write_pgm(stem.with_name(stem.name + "_depth.pgm"), depth_to_pgm(view.depth, cfg), 65535)
    write_pbm(stem.with_name(stem.name + "_contour.pbm"), view.contour)


def _write_run_meta(out: Path, args, render_cfg: RenderConfig, model_cfg: ModelConfig,
                    sigma0) -> None:
    save_model_config(model_cfg, out / "model.yaml")
    meta = {"program": args.program, "render": render_cfg.to_dict(), "sigma0": sigma0,
            "chains": getattr(args, "chains", None), "iters": getattr(args, "iters", None),
            "seed": args.seed}
    with open(out / "run.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def _read_run_meta(run: Path) -> tuple[dict, RenderConfig, ModelConfig]:
    try:
        with open(run / "run.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"{run} has no run.json; not an infer output directory") from None
    r = dict(meta["render"])
    if r.get("view") is not None:
        r["view"] = tuple(map(tuple, r["view"]))
    return meta, RenderConfig(**r), load_model_config(run / "model.yaml")


# -- commands --------------------------------------------------------------

def cmd_sample(args) -> int:
    out = _out_dir(args)
    cfg = _render_cfg(args)
    program = make_program(args.program, _model_cfg(args))
    rng = np.random.default_rng(args.seed)
    for i in range(args.n):
        trace = program.sample_prior(rng)
        stem = out / f"sample_{i:03d}"
        save_trace(trace, stem.with_suffix(".trace.jsonl"))
        write_obj(program.build_mesh(trace, normals=True), stem.with_suffix(".obj"))
        _write_view(render_trace(trace, program, cfg), cfg, stem)
    print(f"wrote {args.n} {args.program} samples to {out}")
    return 0


def _mixture(args) -> KernelMixture:
    kw = {}
    if args.hmc_steps is not None:
        kw["hmc_steps"] = args.hmc_steps
    if args.hmc_step is not None:
        kw["hmc_step"] = args.hmc_step
    if args.data_k is not None:
        kw["data_k"] = args.data_k
    if args.alphas:
        return KernelMixture.from_alphas(args.alphas, **kw)
    return KernelMixture(**kw)


def cmd_infer(args) -> int:
    if (args.observation is None) == (args.truth_seed is None):
        raise SystemExit("infer: give exactly one of --observation or --truth-seed")
    out = _out_dir(args)
    cfg = _render_cfg(args)
    model_cfg = _model_cfg(args)
    program = make_program(args.program, model_cfg)
    truth = None
    if args.observation is not None:
        image = read_pnm(args.observation)
        obs = observation_from_image(image, args.level)
        if obs.shape != (cfg.height, cfg.width):
            raise SystemExit(f"observation is {obs.shape[1]}x{obs.shape[0]}, render size is "
                             f"{cfg.width}x{cfg.height}")
    else:
        truth, obs = experiments.synthetic_case(program, cfg, args.truth_seed)
        save_trace(truth, out / "truth.trace.jsonl")
    write_pbm(out / "observation.pbm", obs.contour)
    index = ProposalIndex.load(args.index) if args.index else None
    if index is not None and index.program != program.name:
        raise SystemExit(f"index was built for {index.program!r}, not {program.name!r}")
    mix = _mixture(args)
    run = experiments.infer(program, obs, cfg, mix, args.chains, args.iters, args.seed,
                            args.sigma0, index)
    experiments.write_runs(run, out)
    _write_run_meta(out, args, cfg, model_cfg, run.likelihood.sigma0)
    best = run.best
    save_trace(best.map_trace, out / "map.trace.jsonl")
    _write_view(render_trace(best.map_trace, program, cfg), cfg, out / "map")
    summary = {"map_log_posterior": best.map_log_posterior,
               "chains": [{"map_log_posterior": r.map_log_posterior,
                           "proposed": r.state.proposed, "accepted": r.state.accepted,
                           "errors": r.state.errors} for r in run.results]}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    print(f"MAP log posterior {best.map_log_posterior:.6f}")
    if truth is not None:
        rep = experiments.evaluate(program, best.map_trace, truth, cfg, obs)
        rep.chains = summary["chains"]
        with open(out / "report.json", "w") as fh:
            fh.write(rep.to_json())
        print(_report_line(rep))
    return 0


def cmd_train_proposals(args) -> int:
    cfg = _render_cfg(args)
    program = make_program(args.program, _model_cfg(args))
    path = Path(args.out or Path(os.environ.get(OUT_ENV) or ".") / f"{args.program}.idx")
    path.parent.mkdir(parents=True, exist_ok=True)
    index = generate_dataset(args.n, program, cfg, np.random.default_rng(args.seed), args.grid)
    index.save(path)
    print(f"wrote {len(index)}-entry index to {path}")
    return 0


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    meta, cfg, model_cfg = _read_run_meta(run)
    program = make_program(meta["program"], model_cfg)
    truth_path = Path(args.truth) if args.truth else run / "truth.trace.jsonl"
    if not truth_path.exists():
        raise SystemExit(f"no ground truth at {truth_path}")
    trace = load_trace(run / "map.trace.jsonl", program.space)
    truth = load_trace(truth_path, program.space)
    obs = observation_from_image(read_pnm(run / "observation.pbm"))
    rep = experiments.evaluate(program, trace, truth, cfg, obs)
    rep.validate()
    out = Path(args.out) if args.out else run / "report.json"
    with open(out, "w") as fh:
        fh.write(rep.to_json())
    print(_report_line(rep))
    return 0


def _report_line(rep: metrics.EvalReport) -> str:
    parts = [f"{k}={v:.6g}" for k, v in (("z_mae", rep.z_mae), ("n_mse", rep.n_mse),
                                         ("keypoint_err", rep.keypoint_err),
                                         ("chamfer", rep.chamfer)) if v is not None]
    return " ".join(parts)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcad", description="Probabilistic CAD inverse graphics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--program", choices=("object", "body"), default="object")
        sp.add_argument("--model-config", help="YAML model configuration")
        sp.add_argument("--render-size", type=_size, help="WxH (focal length scales with width)")
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--out", help=out_help + f" (default ${OUT_ENV} or ./pcad_out)")

    s = sub.add_parser("sample", help="draw prior samples")
    common(s, "output directory")
    s.add_argument("--n", type=int, default=4)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("infer", help="fit a scene to an observation")
    common(s, "output directory")
    s.add_argument("--observation", help="contour PBM, or PGM with --level")
    s.add_argument("--level", type=float, help="threshold for graymap observations")
    s.add_argument("--truth-seed", type=int, help="synthetic mode: sample ground truth with this seed")
    s.add_argument("--chains", type=int, default=5)
    s.add_argument("--iters", type=int, default=2000)
    s.add_argument("--alphas", help="kernel weights " + ",".join(("single", "block", "hmc", "data")))
    s.add_argument("--sigma0", type=float, help="likelihood width in pixels")
    s.add_argument("--index", help="proposal index for the data kernel")
    s.add_argument("--hmc-steps", type=int)
    s.add_argument("--hmc-step", type=float)
    s.add_argument("--data-k", type=int)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("train-proposals", help="build a prior-sample proposal index")
    common(s, "index file")
    s.add_argument("--n", type=int, default=20000)
    s.add_argument("--grid", type=int, default=8)
    s.set_defaults(func=cmd_train_proposals)

    s = sub.add_parser("evaluate", help="score a run's MAP trace against ground truth")
    s.add_argument("run", help="infer output directory")
    s.add_argument("--truth", help="ground-truth trace (default: run/truth.trace.jsonl)")
    s.add_argument("--out", help="report path (default: run/report.json)")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        raise SystemExit("--n must be positive")
    try:
        return args.func(args)
    except (EmptyObservationError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"pcad: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
