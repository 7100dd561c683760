"""End-to-end command checks on small renders and short chains."""
import json

import numpy as np
import pytest

from pcad import experiments, metrics
from pcad.cli import OUT_ENV, main
from pcad.config import RenderConfig
from pcad.likelihood import ObservationImage
from pcad.programs import BodyProgram, ObjectProgram
from pcad.render import read_pnm, render_trace, write_pbm
from pcad.trace import load_trace

SMALL = ["--render-size", "64x64"]


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def infer(out, *extra, seed=1):
    return main(["infer", "--truth-seed", "3", "--iters", "15", "--chains", "2", "--seed",
                 str(seed), "--out", str(out)] + SMALL + list(extra))


class TestSample:
    def test_counts(self, tmp_path):
        assert main(["sample", "--n", "4", "--seed", "7", "--out", str(tmp_path)] + SMALL) == 0
        names = [p.name for p in tmp_path.iterdir()]
        assert sum(n.endswith(".trace.jsonl") for n in names) == 4
        assert sum(n.endswith(".obj") for n in names) == 4
        assert sum(n.endswith((".pgm", ".pbm")) for n in names) == 8
        assert len(names) == 16

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            main(["sample", "--n", "3", "--seed", "7", "--out", str(d)] + SMALL)
        assert files(a) == files(b)

    def test_body_traces_validate(self, tmp_path):
        main(["sample", "--program", "body", "--n", "2", "--out", str(tmp_path)] + SMALL)
        space = BodyProgram().space
        for p in tmp_path.glob("*.trace.jsonl"):
            t = load_trace(p, space)
            assert t.program == "body" and t.in_support()

    def test_images_round_trip(self, tmp_path):
        main(["sample", "--n", "1", "--seed", "2", "--out", str(tmp_path)] + SMALL)
        prog = ObjectProgram()
        t = load_trace(tmp_path / "sample_000.trace.jsonl", prog.space)
        view = render_trace(t, prog, RenderConfig().with_size(64, 64))
        assert np.array_equal(read_pnm(tmp_path / "sample_000_contour.pbm"), view.contour)

    def test_env_default_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
        assert main(["sample", "--n", "1"] + SMALL) == 0
        assert (tmp_path / "env" / "sample_000.obj").exists()

    def test_bad_size(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["sample", "--render-size", "0x5", "--out", str(tmp_path)])


class TestInfer:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert infer(a) == 0 and infer(b) == 0
        assert files(a) == files(b)
        s = json.loads((a / "summary.json").read_text())
        assert np.isfinite(s["map_log_posterior"])

    def test_alphas_bookkeeping(self, tmp_path):
        infer(tmp_path / "s", "--alphas", "1,0,0,0")
        infer(tmp_path / "d")
        single = json.loads((tmp_path / "s" / "summary.json").read_text())["chains"]
        mixed = json.loads((tmp_path / "d" / "summary.json").read_text())["chains"]
        for c in single:
            assert c["proposed"]["single"] == 15
            assert c["proposed"]["block"] == c["proposed"]["hmc"] == c["proposed"]["data"] == 0
        assert sum(c["proposed"]["block"] + c["proposed"]["hmc"] for c in mixed) > 0
        # without an index the data kernel is never chosen
        assert all(c["proposed"]["data"] == 0 for c in mixed)

    def test_five_chain_logs(self, tmp_path):
        main(["infer", "--truth-seed", "3", "--iters", "5", "--chains", "5",
              "--out", str(tmp_path)] + SMALL)
        logs = sorted(tmp_path.glob("chain_*.jsonl"))
        assert len(logs) == 5
        assert len({p.read_bytes() for p in logs}) == 5
        rec = json.loads(logs[0].read_text().splitlines()[0])
        assert set(rec) == {"iteration", "kernel", "accepted", "log_prior", "log_likelihood"}

    def test_observation_file(self, tmp_path):
        prog = ObjectProgram()
        cfg = RenderConfig().with_size(64, 64)
        gt, obs = experiments.synthetic_case(prog, cfg, 5)
        write_pbm(tmp_path / "obs.pbm", obs.contour)
        out = tmp_path / "run"
        assert main(["infer", "--observation", str(tmp_path / "obs.pbm"), "--iters", "5",
                     "--chains", "1", "--out", str(out)] + SMALL) == 0
        assert (out / "map.trace.jsonl").exists() and not (out / "report.json").exists()

    def test_with_index(self, tmp_path):
        idx = tmp_path / "object.idx"
        assert main(["train-proposals", "--n", "30", "--out", str(idx)] + SMALL) == 0
        out = tmp_path / "run"
        assert infer(out, "--index", str(idx), "--alphas", "0,0,0,1") == 0
        chains = json.loads((out / "summary.json").read_text())["chains"]
        assert all(c["proposed"]["data"] == 15 for c in chains)

    def test_empty_observation(self, tmp_path):
        write_pbm(tmp_path / "empty.pbm", np.zeros((64, 64), bool))
        assert main(["infer", "--observation", str(tmp_path / "empty.pbm"),
                     "--out", str(tmp_path / "o")] + SMALL) == 2

    def test_needs_exactly_one_source(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["infer", "--out", str(tmp_path)])


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert infer(out) == 0
    return out


class TestEvaluate:
    def test_matches_library_calls(self, run, tmp_path):
        assert main(["evaluate", str(run), "--out", str(tmp_path / "r.json")]) == 0
        rep = metrics.EvalReport.from_json((tmp_path / "r.json").read_text())
        prog = ObjectProgram()
        cfg = RenderConfig().with_size(64, 64)
        m = load_trace(run / "map.trace.jsonl", prog.space)
        t = load_trace(run / "truth.trace.jsonl", prog.space)
        a, b = render_trace(m, prog, cfg), render_trace(t, prog, cfg)
        assert rep.z_mae == metrics.z_mae(a.depth, b.depth, far=cfg.far)
        assert rep.n_mse == metrics.n_mse(prog.build_mesh(m, True), prog.build_mesh(t, True))
        obs = ObservationImage(read_pnm(run / "observation.pbm"))
        assert rep.chamfer == pytest.approx(float(obs.dt[a.contour].mean()), abs=1e-12)
        assert all(v >= 0 for v in (rep.z_mae, rep.n_mse, rep.chamfer))

    def test_truth_against_itself(self, run, tmp_path):
        main(["evaluate", str(run), "--truth", str(run / "map.trace.jsonl"),
              "--out", str(tmp_path / "r.json")])
        rep = metrics.EvalReport.from_json((tmp_path / "r.json").read_text())
        assert rep.z_mae == 0.0 and rep.n_mse == 0.0

    def test_body_keypoints(self, tmp_path):
        out = tmp_path / "body"
        assert infer(out, "--program", "body") == 0
        main(["evaluate", str(out), "--truth", str(out / "map.trace.jsonl"),
              "--out", str(tmp_path / "r.json")])
        rep = metrics.EvalReport.from_json((tmp_path / "r.json").read_text())
        assert rep.keypoint_err == 0.0 and rep.z_mae is None

    def test_missing_artifacts(self, tmp_path):
        assert main(["evaluate", str(tmp_path)]) == 2
