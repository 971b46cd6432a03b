import numpy as np
import pandas as pd
import pytest

import vrd.linalg
import vrd.trainer
from vrd.core import VrdParams, helmholtz_solve
from vrd.formats import read_pgm, read_vrdt, write_vrdp, write_vrdt
from vrd.lattice import Field
from vrd.main import main

from conftest import make_params


@pytest.fixture
def identity_params(tmp_path):
    path = tmp_path / "id.vrdp"
    write_vrdp(path, VrdParams.from_spd([[1.0]], [[1.0]], [[0.0]], [[-1.0]]))
    return path


class TestInfer:
    def test_zero_input(self, tmp_path, rng):
        write_vrdp(tmp_path / "p.vrdp", make_params(rng, 2, 3))
        write_vrdt(tmp_path / "in.vrdt", Field.zeros(6, 5, 2))
        code = main(["infer", "--params", str(tmp_path / "p.vrdp"), "--input", str(tmp_path / "in.vrdt"),
                     "--output", str(tmp_path / "out.vrdt")])
        assert code == 0
        out = read_vrdt(tmp_path / "out.vrdt")
        assert out.shape == (6, 5, 3)
        assert np.all(out.data == 0.0)

    def test_identity_parameters_smooth_and_repeat(self, tmp_path, rng, identity_params):
        s_i = Field.random(7, 6, 1, rng)
        write_vrdt(tmp_path / "in.vrdt", s_i)
        outputs = []
        for k in range(2):
            out = tmp_path / f"out{k}.vrdt"
            assert main(["infer", "--params", str(identity_params), "--input", str(tmp_path / "in.vrdt"),
                         "--output", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        expected = helmholtz_solve(Field(-s_i.data), 1.0)
        np.testing.assert_allclose(read_vrdt(tmp_path / "out0.vrdt").data, expected.data, atol=1e-12)

    def test_labels(self, tmp_path, rng):
        write_vrdp(tmp_path / "p.vrdp", make_params(rng, 2, 3))
        write_vrdt(tmp_path / "in.vrdt", Field.random(4, 4, 2, rng))
        assert main(["infer", "--params", str(tmp_path / "p.vrdp"), "--input", str(tmp_path / "in.vrdt"),
                     "--output", str(tmp_path / "out.vrdt"), "--labels", str(tmp_path / "lab.vrdt")]) == 0
        scores = read_vrdt(tmp_path / "out.vrdt")
        labels = read_vrdt(tmp_path / "lab.vrdt")
        assert labels.shape == (4, 4, 1)
        np.testing.assert_array_equal(labels.channel(0), np.argmax(scores.data, axis=-1))

    def test_truncated_input(self, tmp_path, identity_params, capsys):
        path = tmp_path / "in.vrdt"
        write_vrdt(path, Field.zeros(3, 3))
        path.write_bytes(path.read_bytes()[:40])
        code = main(["infer", "--params", str(identity_params), "--input", str(path),
                     "--output", str(tmp_path / "out.vrdt")])
        assert code == 2
        assert "offset 36" in capsys.readouterr().err

    def test_channel_mismatch(self, tmp_path, identity_params):
        write_vrdt(tmp_path / "in.vrdt", Field.zeros(3, 3, 2))
        code = main(["infer", "--params", str(identity_params), "--input", str(tmp_path / "in.vrdt"),
                     "--output", str(tmp_path / "out.vrdt")])
        assert code == 3


class TestTrain:
    def test_zero_epochs(self, tmp_path):
        config = tmp_path / "train.cfg"
        config.write_text("epochs = 0\ngrid = 8x8\nn_train = 2\nn_test = 1\narch = vrd:2\n")
        assert main(["train", "--config", str(config), "--out", str(tmp_path / "m.vrdp")]) == 0
        assert (tmp_path / "m.vrdp").exists()
        assert pd.read_csv(tmp_path / "m.loss.csv").empty

    def test_repeatable_history(self, tmp_path):
        config = tmp_path / "train.cfg"
        config.write_text("epochs = 2\ngrid = 8x8\nn_train = 3\nn_test = 1\narch = mix:2,vrd:2,relu,mix:2\n")
        for name in ("a", "b"):
            assert main(["train", "--config", str(config), "--out", str(tmp_path / f"{name}.vrdp")]) == 0
        assert (tmp_path / "a.loss.csv").read_bytes() == (tmp_path / "b.loss.csv").read_bytes()

    def test_bad_config(self, tmp_path):
        config = tmp_path / "train.cfg"
        config.write_text("epochs = 1\nbatch_size = 4\n")
        assert main(["train", "--config", str(config), "--out", str(tmp_path / "m.vrdp")]) == 2

    def test_divergence_exit_code(self, tmp_path, monkeypatch):
        def nan_loss(scores, labels):
            return float("nan"), Field.zeros(*scores.shape)
        monkeypatch.setattr(vrd.trainer, "softmax_xent", nan_loss)
        config = tmp_path / "train.cfg"
        config.write_text("epochs = 1\ngrid = 4x4\nn_train = 1\nn_test = 1\narch = mix:2\n")
        assert main(["train", "--config", str(config), "--out", str(tmp_path / "m.vrdp")]) == 4

    def test_large_learning_rate_exit_code(self, tmp_path):
        config = tmp_path / "train.cfg"
        config.write_text("epochs = 3\nlr = 1000\ngrid = 6x6\nn_train = 3\nn_test = 1\narch = vrd:2\n")
        assert main(["train", "--config", str(config), "--out", str(tmp_path / "m.vrdp")]) == 4


class TestGreen:
    def test_image_and_csv(self, tmp_path):
        out = tmp_path / "g.pgm"
        assert main(["green", "--lambda", "1e-2", "--size", "255x255", "--out", str(out)]) == 0
        assert out.read_bytes().startswith(b"P5\n255 255\n255\n")
        image = read_pgm(out)
        assert image[127, 127] == 255
        values = pd.read_csv(tmp_path / "g.csv", header=None).to_numpy()
        assert values.shape == (255, 255)
        assert np.argmax(values) == 127 * 255 + 127

    def test_width_ordering(self, tmp_path):
        counts = {}
        for lam in ("1e-2", "1e-6"):
            out = tmp_path / f"g{lam}.pgm"
            assert main(["green", "--lambda", lam, "--size", "255x255", "--out", str(out)]) == 0
            counts[lam] = int(np.sum(read_pgm(out) > 64))
        assert counts["1e-6"] > counts["1e-2"]

    def test_bad_size(self, tmp_path):
        assert main(["green", "--lambda", "1", "--size", "12by12", "--out", str(tmp_path / "g.pgm")]) == 2

    def test_non_positive_lambda(self, tmp_path):
        assert main(["green", "--lambda", "0", "--size", "5x5", "--out", str(tmp_path / "g.pgm")]) == 2


class TestBench:
    def test_single_size(self, tmp_path):
        csv = tmp_path / "bench.csv"
        assert main(["bench", "--sizes", "16", "--ni", "2", "--no", "2", "--reps", "1", "--csv", str(csv)]) == 0
        df = pd.read_csv(csv)
        assert list(df.columns) == ["L", "t_fwd_ms", "t_bwd_ms"]
        assert df["L"].tolist() == [256]
        assert (df[["t_fwd_ms", "t_bwd_ms"]] > 0).all().all()

    def test_rect_grid(self, tmp_path):
        csv = tmp_path / "bench.csv"
        assert main(["bench", "--sizes", "8", "--rect", "9x5", "--ni", "1", "--no", "1", "--reps", "1",
                     "--csv", str(csv)]) == 0
        assert pd.read_csv(csv)["L"].tolist() == [64, 45]


class TestSelftest:
    def test_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_corrupted_phi_fails(self, monkeypatch, capsys):
        original = vrd.linalg.phi_matrix
        monkeypatch.setattr(vrd.linalg, "phi_matrix", lambda values: 1.1 * original(values))
        assert main(["selftest"]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out
