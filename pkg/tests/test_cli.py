"""End-to-end checks of the bench commands through the ``dalpr`` entry point."""

import csv
import subprocess
import sys

import numpy as np
import pytest

from dalpr import bench
from dalpr.algorithms import read_observations
from dalpr.cli import main
from dalpr.config import load_config, chessboard_config
from dalpr.field import amplitude, make_chessboard_object, phase, read_field, write_field
from dalpr.propagation import make_transfer, propagate_forward

SMALL = """\
rows = 32
cols = 32
tile = 8
num_planes = 3
sigma = 0.05
seed = 3
init_phase_std = 1.5
init_smoothing = 2.0
iterations = 6
warm_iterations = 4
dal_iterations = 3
gamma_r = 40.0
alpha_r = 0.5
xi = 1000.0
tau_a = 0.4
tau_phi = 0.4
"""


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture
def small(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    return cfg


@pytest.fixture
def simulated(small, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(small), "--out", str(out)]) == 0
    return small, out


class TestSimulate:
    def test_outputs_and_report(self, small, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(small), "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "plane 3" in text and "noise" in text
        obs = read_observations(out / "observations.ob")
        truth = read_field(out / "truth.wf")
        assert obs.planes.shape == (3, 32, 32) and truth.shape == (32, 32)
        assert (out / "truth.wf").stat().st_size == 20 + 32 * 32 * 16

    def test_bench_plane_distances(self, tmp_path):
        cfg = chessboard_config()
        paths = bench.cmd_simulate(cfg, tmp_path)
        obs = read_observations(paths["observations"])
        z1 = cfg.setup().z1
        assert [z - z1 for z in obs.distances] == pytest.approx([0, 2e-3, 4e-3, 6e-3, 8e-3])

    def test_same_seed_same_bytes(self, small, tmp_path):
        for name in ("a", "b"):
            assert main(["simulate", "--config", str(small), "--out", str(tmp_path / name)]) == 0
        for f in ("observations.ob", "truth.wf"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        assert main(["simulate", "--config", str(small), "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
        assert (tmp_path / "a/observations.ob").read_bytes() != (tmp_path / "c/observations.ob").read_bytes()

    def test_noiseless_is_squared_magnitude(self, small, tmp_path):
        small.write_text(SMALL.replace("sigma = 0.05", "sigma = 0.0"))
        assert main(["simulate", "--config", str(small), "--out", str(tmp_path)]) == 0
        obs = read_observations(tmp_path / "observations.ob")
        truth = read_field(tmp_path / "truth.wf")
        setup = chessboard_config(rows=32, cols=32, tile=8, num_planes=3).setup()
        for o, z in zip(obs.planes, obs.distances):
            np.testing.assert_array_equal(o, np.abs(propagate_forward(truth, make_transfer(setup, z)).samples) ** 2)

    def test_object_file(self, small, tmp_path):
        obj = make_chessboard_object(32, 32, 4, 6.7e-6)
        write_field(obj, tmp_path / "obj.wf")
        small.write_text(SMALL + f"object_file = {tmp_path / 'obj.wf'}\n")
        assert main(["simulate", "--config", str(small), "--out", str(tmp_path / "o")]) == 0
        assert read_field(tmp_path / "o/truth.wf").samples.tobytes() == obj.samples.tobytes()


class TestReconstruct:
    @pytest.mark.parametrize("alg,rows", [("sbmir", 6), ("al", 6), ("dal", 7)])
    def test_with_truth(self, simulated, tmp_path, alg, rows):
        cfg, sim = simulated
        out = tmp_path / "r"
        argv = ["reconstruct", str(sim / "observations.ob"), "--config", str(cfg), "--out", str(out),
                "--algorithm", alg, "--truth", str(sim / "truth.wf")]
        assert main(argv) == 0
        header, body = read_csv(out / f"{alg}_trace.csv")
        assert header == ["iteration", "phase_rmse", "amplitude_rmse", "objective"]
        assert [int(r[0]) for r in body] == list(range(1, rows + 1))
        assert read_field(out / f"{alg}_estimate.wf").shape == (32, 32)
        for kind in ("amplitude", "phase"):
            img = bench.read_pgm(out / f"{alg}_{kind}.pgm")
            assert img.shape == (32, 32) and img.dtype == np.uint8
            assert (out / f"{alg}_{kind}.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")

    def test_without_truth(self, simulated, tmp_path):
        cfg, sim = simulated
        assert main(["reconstruct", str(sim / "observations.ob"), "--config", str(cfg), "--out", str(tmp_path)]) == 0
        header, body = read_csv(tmp_path / "dal_trace.csv")
        assert header == ["iteration", "objective"]
        assert len(body) == 7

    def test_zero_iterations_returns_init(self, simulated, tmp_path):
        cfg, sim = simulated
        cfg.write_text(SMALL.replace("iterations = 6", "iterations = 0"))
        assert main(["reconstruct", str(sim / "observations.ob"), "--config", str(cfg), "--out", str(tmp_path),
                     "--algorithm", "al"]) == 0
        est = read_field(tmp_path / "al_estimate.wf")
        init = bench.initial_guess(load_config(cfg))
        assert est.samples.tobytes() == init.samples.tobytes()
        assert read_csv(tmp_path / "al_trace.csv")[1] == []

    def test_chessboard_dal_trace_has_100_rows(self, tmp_path):
        cfg = chessboard_config()
        sim = bench.cmd_simulate(cfg, tmp_path / "sim")
        paths = bench.cmd_reconstruct(cfg, sim["observations"], sim["truth"], tmp_path / "r")
        _, body = read_csv(paths["trace"])
        assert len(body) == 100
        assert int(body[-1][0]) == 100


class TestCompare:
    def test_report_and_cross_sections(self, simulated, tmp_path, capsys):
        cfg, sim = simulated
        argv = ["compare", str(sim / "observations.ob"), "--config", str(cfg), "--out", str(tmp_path),
                "--truth", str(sim / "truth.wf")]
        assert main(argv) == 0
        header, body = read_csv(tmp_path / "comparison.csv")
        assert header[:4] == ["algorithm", "iterations", "phase_rmse", "amplitude_rmse"]
        assert [r[0] for r in body] == ["sbmir", "al", "dal"]
        assert all(int(r[1]) == 7 for r in body)
        for kind in ("phase", "amplitude"):
            header, rows = read_csv(tmp_path / f"cross_section_{kind}.csv")
            assert header == ["col", "truth", "sbmir", "al", "dal"]
            assert len(rows) == 32
        assert "dal" in capsys.readouterr().out

    def test_noiseless_true_init_gives_zero_error(self, small, tmp_path):
        small.write_text(SMALL.replace("sigma = 0.05", "sigma = 0.0").replace("tau_a = 0.4\ntau_phi = 0.4", "tau_a = 0.0\ntau_phi = 0.0"))
        assert main(["simulate", "--config", str(small), "--out", str(tmp_path)]) == 0
        small.write_text(small.read_text() + f"init_file = {tmp_path / 'truth.wf'}\n")
        rows, _ = bench.cmd_compare(
            load_config(small),
            tmp_path / "observations.ob", tmp_path / "truth.wf", tmp_path / "c",
        )
        for r in rows:
            assert r.phase_rmse < 1e-8 and r.amplitude_rmse < 1e-8


class TestRender:
    def test_truth_phase_has_two_levels(self, tmp_path):
        truth = make_chessboard_object(128, 128, 16, 6.7e-6)
        write_field(truth, tmp_path / "truth.wf")
        assert main(["render", str(tmp_path / "truth.wf"), "--out", str(tmp_path / "img")]) == 0
        ph = bench.read_pgm(tmp_path / "img/truth_phase.pgm")
        assert len(np.unique(ph)) == 2
        amp = bench.read_pgm(tmp_path / "img/truth_amplitude.pgm")
        assert np.all(amp == 255)
        header, rows = read_csv(tmp_path / "img/truth_cross_section.csv")
        assert header == ["col", "amplitude", "phase"] and len(rows) == 128

    def test_gray_maps(self):
        assert list(bench.phase_gray(np.array([-np.pi + 1e-12, 0.0, np.pi]))) == [0, 128, 255]
        assert list(bench.amplitude_gray(np.array([0.0, 1.0, 2.0]))) == [0, 128, 255]
        assert list(bench.amplitude_gray(np.zeros(3))) == [0, 0, 0]

    def test_render_values(self, tmp_path):
        u = make_chessboard_object(8, 8, 4, 1e-6)
        paths = bench.render_field(u, tmp_path, "u")
        np.testing.assert_array_equal(bench.read_pgm(paths["phase_image"]), bench.phase_gray(phase(u)))
        np.testing.assert_array_equal(bench.read_pgm(paths["amplitude_image"]), bench.amplitude_gray(amplitude(u)))


class TestFailures:
    def run(self, argv, capsys):
        code = main(argv)
        return code, capsys.readouterr().err

    def test_missing_observations(self, small, tmp_path, capsys):
        code, err = self.run(["reconstruct", str(tmp_path / "none.ob"), "--config", str(small)], capsys)
        assert code != 0 and "not found" in err

    def test_missing_config(self, tmp_path, capsys):
        code, err = self.run(["simulate", "--config", str(tmp_path / "none.cfg")], capsys)
        assert code != 0 and "cannot read config" in err

    def test_invalid_config_line_number(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("rows = 32\ncols = 32\nsigma = -1\n")
        code, err = self.run(["simulate", "--config", str(cfg)], capsys)
        assert code != 0 and "bad.cfg:3" in err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = red\n")
        code, err = self.run(["simulate", "--config", str(cfg)], capsys)
        assert code != 0 and "bad.cfg:1: unknown key" in err

    def test_dimension_mismatch(self, simulated, tmp_path, capsys):
        cfg, sim = simulated
        other = tmp_path / "other.cfg"
        other.write_text(SMALL.replace("rows = 32\ncols = 32", "rows = 16\ncols = 16"))
        code, err = self.run(["reconstruct", str(sim / "observations.ob"), "--config", str(other),
                              "--out", str(tmp_path)], capsys)
        assert code != 0 and "config grid" in err

    def test_truth_mismatch(self, simulated, tmp_path, capsys):
        cfg, sim = simulated
        write_field(make_chessboard_object(16, 16, 8, 6.7e-6), tmp_path / "t.wf")
        code, err = self.run(["compare", str(sim / "observations.ob"), "--config", str(cfg),
                              "--truth", str(tmp_path / "t.wf"), "--out", str(tmp_path)], capsys)
        assert code != 0 and "ground truth" in err

    def test_compare_needs_truth(self, simulated, capsys):
        cfg, sim = simulated
        code, err = self.run(["compare", str(sim / "observations.ob"), "--config", str(cfg)], capsys)
        assert code != 0 and "--truth" in err

    def test_corrupt_files(self, simulated, tmp_path, capsys):
        cfg, sim = simulated
        bad = tmp_path / "bad.wf"
        bad.write_bytes(b"NOPE" + bytes(40))
        code, err = self.run(["render", str(bad), "--out", str(tmp_path)], capsys)
        assert code != 0 and "magic" in err
        obs = tmp_path / "bad.ob"
        obs.write_bytes((sim / "observations.ob").read_bytes()[:-3])
        code, err = self.run(["reconstruct", str(obs), "--config", str(cfg)], capsys)
        assert code != 0 and "expected" in err

    def test_unwritable_output(self, simulated, tmp_path, capsys):
        cfg, _ = simulated
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, err = self.run(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")], capsys)
        assert code != 0 and "error" in err

    def test_bad_arguments(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["reconstruct", "x.ob", "--algorithm", "gs"])
        assert info.value.code != 0
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code != 0
        code, err = self.run(["simulate", "--seed", "-1", "--out", "/tmp/never"], capsys)
        assert code != 0 and "--seed" in err

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "dalpr.cli", "render", str(tmp_path / "missing.wf")],
            capture_output=True, text=True,
        )
        assert proc.returncode != 0 and "not found" in proc.stderr
