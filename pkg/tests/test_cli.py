import subprocess
import sys

import numpy as np
import pytest

from csdesign.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from csdesign.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from csdesign.experiment import read_results, run_evaluate, sparsity_ratios
from csdesign.imageio import synthetic_image, write_pgm
from csdesign.linalg import Mode, SensingMatrix, dct_dictionary, load_matrix, save_matrix
from csdesign.weights import load_weights


def write_config(path, **values):
    def fmt(v):
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    path.write_text("".join(f"{k} = {fmt(v)}\n" for k, v in values.items()))
    return path


@pytest.fixture
def small_data(tmp_path):
    train, test = tmp_path / "train", tmp_path / "test"
    train.mkdir()
    test.mkdir()
    write_pgm(train / "a.pgm", synthetic_image(24, 24, seed=1))
    write_pgm(test / "b.pgm", synthetic_image(12, 12, seed=2))
    return train, test


def tiny_config(tmp_path, small_data, **extra):
    train, test = small_data
    values = dict(patch_side=3, measurement_counts=[4], criteria=["coherence"], seeds=[0],
                  train_dir=str(train), test_dir=str(test), validation_patches=20)
    values.update(extra)
    return write_config(tmp_path / "cfg.toml", **values)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.patch_side == 8 and cfg.measurement_counts == [16, 24, 32] and cfg.sigma2 == 4.0
        assert cfg.train_dir.is_dir() and cfg.test_dir.is_dir()

    @pytest.mark.parametrize("values", [
        {"measurement_counts": [64]},
        {"seeds": []},
        {"seeds": [1, 1]},
        {"criteria": ["nope"]},
        {"criteria": []},
        {"matrix_mode": "ternary"},
        {"sigma2": -1.0},
        {"delta": 0.0},
        {"criteria": ["l1linf"]},
        {"colour": True},
    ])
    def test_invalid(self, values):
        with pytest.raises(ConfigError):
            config_from_dict(values)

    def test_relative_paths(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.toml", train_dir="tr", output_dir="out"))
        assert cfg.train_dir == tmp_path / "tr" and cfg.output_dir == tmp_path / "out"

    def test_bad_toml(self, tmp_path):
        (tmp_path / "c.toml").write_text("patch_side = = 3\n")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.toml")


class TestDesign:
    def test_file_count_and_trace(self, tmp_path, small_data):
        cfg = tiny_config(tmp_path, small_data)
        out = tmp_path / "out"
        assert main(["design", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert [p.name for p in out.glob("*.csmat")] == ["coherence_m4_s0.csmat"]
        assert [p.name for p in out.glob("*.csv")] == ["coherence_m4_s0_trace.csv"]
        lines = (out / "coherence_m4_s0_trace.csv").read_text().split()
        assert lines[0] == "epoch,loss"
        losses = [float(ln.split(",")[1]) for ln in lines[1:]]
        assert losses[-1] >= losses[0]
        assert load_matrix(out / "coherence_m4_s0.csmat").mode is Mode.BINARY

    def test_deterministic(self, tmp_path, small_data):
        cfg = tiny_config(tmp_path, small_data, criteria=["random", "coherence", "wbicoherence"])
        runs = []
        for name in ("a", "b"):
            assert main(["design", "--config", str(cfg), "--out", str(tmp_path / name)]) == EXIT_OK
            runs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
        assert runs[0] == runs[1] and len(runs[0]) == 6

    def test_seed_flag(self, tmp_path, small_data):
        cfg = tiny_config(tmp_path, small_data)
        out = tmp_path / "out"
        assert main(["design", "--config", str(cfg), "--out", str(out), "--seed", "7"]) == EXIT_OK
        assert (out / "coherence_m4_s7.csmat").exists()

    def test_config_errors(self, tmp_path, small_data):
        cfg = tiny_config(tmp_path, small_data, criteria=["bogus"])
        assert main(["design", "--config", str(cfg)]) == EXIT_CONFIG
        assert main(["design", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
        # tricoherence needs d >= 4, which p = 1 cannot give
        cfg = tiny_config(tmp_path, small_data, patch_side=1, measurement_counts=[1])
        assert main(["design", "--config", str(cfg)]) == EXIT_CONFIG
        assert main(["design", "--jobs", "0"]) == EXIT_CONFIG


class TestWeightsAndStats:
    def test_single_image(self, tmp_path, capsys):
        d = tmp_path / "imgs"
        d.mkdir()
        write_pgm(d / "x.pgm", np.full((10, 10), 77, dtype=np.uint8))
        out = tmp_path / "w.cswgt"
        assert main(["weights", "--train-dir", str(d), "--patch-side", "8", "--out", str(out)]) == EXIT_OK
        assert "source_count 1" in capsys.readouterr().out
        assert len(load_weights(out)) == 64

    def test_empty_dir(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["weights", "--train-dir", str(tmp_path / "empty")]) == EXIT_DATA
        assert main(["stats", "--train-dir", str(tmp_path / "empty")]) == EXIT_DATA

    def test_stats_ratios(self, tmp_path, capsys):
        psi = dct_dictionary(4)
        d = tmp_path / "imgs"
        d.mkdir()
        # a constant patch is 1-sparse; two equal coefficients give ratio 2
        write_pgm(d / "flat.pgm", np.full((4, 4), 100, dtype=np.uint8))
        assert main(["stats", "--train-dir", str(d), "--patch-side", "4"]) == EXIT_OK
        assert "mean l1/linf 1.0000" in capsys.readouterr().out
        theta = np.zeros(16)
        theta[0] = theta[5] = 40.0
        patch = (psi.basis @ theta).reshape(4, 4)
        assert sparsity_ratios(patch.reshape(1, -1), psi)[0] == pytest.approx(2.0)

    def test_stats_natural(self, capsys):
        cfg = ExperimentConfig()
        assert main(["stats", "--train-dir", str(cfg.train_dir)]) == EXIT_OK
        mean = float([ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("mean")][0].split()[-1])
        assert 1.5 <= mean <= 4.0


class TestEvaluate:
    def test_one_row(self, tmp_path, small_data):
        cfg_path = tiny_config(tmp_path, small_data)
        out = tmp_path / "out"
        assert main(["design", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        assert main(["evaluate", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        rows = read_results(out / "results.csv")
        assert len(rows) == 1 and rows[0][:4] == ("coherence", 4, 0, "b")
        header = (out / "results.csv").read_text().splitlines()[0]
        assert header == "criterion,m,seed,image,psnr,ssim"

    def test_polyline_per_criterion(self, tmp_path, small_data):
        cfg_path = tiny_config(tmp_path, small_data, criteria=["random", "coherence"],
                               measurement_counts=[3, 5])
        out = tmp_path / "out"
        assert main(["design", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        assert main(["evaluate", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        svg = (out / "ssim_vs_m.svg").read_text()
        assert svg.count("<polyline") == 2
        assert len(read_results(out / "results.csv")) == 4
        assert main(["plot", "--results", str(out / "results.csv"), "--out", str(tmp_path / "p")]) == EXIT_OK
        assert (tmp_path / "p" / "psnr_vs_m.svg").exists()

    def test_missing_matrices(self, tmp_path, small_data):
        cfg_path = tiny_config(tmp_path, small_data)
        assert main(["evaluate", "--config", str(cfg_path), "--out", str(tmp_path / "nothing")]) == EXIT_DATA

    def test_summary_counts(self, tmp_path, small_data):
        cfg = load_config(tiny_config(tmp_path, small_data)).with_overrides(output_dir=tmp_path / "o")
        cfg.output_dir.mkdir()
        save_matrix(cfg.output_dir / "coherence_m4_s0.csmat", SensingMatrix.random_binary(4, 9, np.random.default_rng(0)))
        summary = run_evaluate(cfg)
        assert summary.patches == 16 and summary.failure_rate <= cfg.failure_budget


class TestSenseRecover:
    def test_round_trip(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        phi = SensingMatrix.random_binary(56, 64, rng)
        save_matrix(tmp_path / "phi.csmat", phi)
        img = synthetic_image(16, 16, seed=4)
        write_pgm(tmp_path / "img.pgm", img)
        meas = tmp_path / "img.csmeas"
        assert main(["sense", "--matrix", str(tmp_path / "phi.csmat"), "--image", str(tmp_path / "img.pgm"),
                     "--sigma2", "0", "--out", str(meas)]) == EXIT_OK
        assert main(["recover", "--matrix", str(tmp_path / "phi.csmat"), "--measurements", str(meas),
                     "--epsilon", "0.001", "--reference", str(tmp_path / "img.pgm"),
                     "--out", str(tmp_path / "rec.pgm")]) == EXIT_OK
        out = capsys.readouterr().out
        psnr = float(out.split("psnr")[1].split()[0])
        assert psnr > 25

    def test_bad_image(self, tmp_path):
        save_matrix(tmp_path / "phi.csmat", SensingMatrix.random_binary(4, 9, np.random.default_rng(0)))
        (tmp_path / "x.pgm").write_bytes(b"P2 nope")
        assert main(["sense", "--matrix", str(tmp_path / "phi.csmat"), "--image", str(tmp_path / "x.pgm")]) == EXIT_DATA


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "csdesign", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "evaluate" in res.stdout
