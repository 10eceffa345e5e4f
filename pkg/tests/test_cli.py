import json

import numpy as np
import pytest

from portraitseg.checkpoint import load_checkpoint, save_checkpoint
from portraitseg.cli import main
from portraitseg.compositor import build_kernel, gaussian_blur
from portraitseg.data import generate_synthetic_dataset, load_dataset, save_dataset
from portraitseg.model import build_default_model
from portraitseg.raster import RasterImage, decode_image, encode_image

from oracles import composite_formula


@pytest.fixture()
def dataset_dir(tmp_path):
    path = tmp_path / "data"
    save_dataset(generate_synthetic_dataset(4, 16, seed=1), path)
    return path


@pytest.fixture()
def checkpoint_path(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(build_default_model(seed=0), None, path)
    return path


def write_image(path, pixels):
    path.write_bytes(encode_image(RasterImage(pixels)))


class TestUsageErrors:
    def test_no_arguments(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["blur", "--input", "x", "--output", "y", "--bogus", "1"]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["segment", "--input", "x", "--output", "y"]) == 1
        assert "--model" in capsys.readouterr().err

    def test_portrait_requires_model_without_matte(self, tmp_path, capsys):
        img = tmp_path / "in.ppm"
        write_image(img, np.zeros((4, 4, 3), dtype=np.uint8))
        code = main(["portrait", "--input", str(img), "--output", str(tmp_path / "out.ppm")])
        assert code == 1
        assert "--model" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out


class TestRuntimeErrors:
    def test_missing_input_file(self, tmp_path, capsys):
        code = main(["blur", "--input", str(tmp_path / "nope.ppm"), "--output", str(tmp_path / "out.ppm")])
        assert code == 2
        assert capsys.readouterr().err

    def test_no_output_written_on_failure(self, tmp_path):
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n2 2\n255\n\x00")  # truncated payload
        out = tmp_path / "out.ppm"
        assert main(["blur", "--input", str(bad), "--output", str(out)]) == 2
        assert not out.exists()

    def test_corrupt_checkpoint(self, tmp_path, capsys):
        ckpt = tmp_path / "bad.ckpt"
        ckpt.write_bytes(b"NOPE")
        img = tmp_path / "in.ppm"
        write_image(img, np.zeros((16, 16, 3), dtype=np.uint8))
        code = main(["segment", "--model", str(ckpt), "--input", str(img), "--output", str(tmp_path / "m.pgm")])
        assert code == 2
        assert "magic" in capsys.readouterr().err


class TestSynth:
    def test_writes_pairs(self, tmp_path, capsys):
        out = tmp_path / "data"
        assert main(["synth", "--out", str(out), "--count", "3", "--size", "16", "--seed", "5"]) == 0
        assert len(list(out.glob("*.ppm"))) == 3
        assert len(list(out.glob("*_mask.pgm"))) == 3
        assert len(load_dataset(out)) == 3

    def test_deterministic(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["synth", "--out", str(a), "--count", "2", "--size", "16", "--seed", "9"])
        main(["synth", "--out", str(b), "--count", "2", "--size", "16", "--seed", "9"])
        for pa in sorted(a.iterdir()):
            assert pa.read_bytes() == (b / pa.name).read_bytes()


class TestTrainAndEval:
    def test_train_writes_checkpoint_and_report(self, tmp_path, dataset_dir, capsys):
        ckpt = tmp_path / "model.ckpt"
        report = tmp_path / "report"
        code = main(
            ["train", "--data", str(dataset_dir), "--out", str(ckpt),
             "--epochs", "2", "--seed", "3", "--report", str(report)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "epoch 1/2" in out and "epoch 2/2" in out
        assert ckpt.exists()
        model, state = load_checkpoint(ckpt)
        assert model.step_count == 2  # 4 samples, batch 4, 2 epochs
        assert state is not None
        assert (report / "loss_history.csv").exists()
        assert (report / "loss_curve.png").exists()

    def test_train_deterministic_checkpoints(self, tmp_path, dataset_dir):
        a = tmp_path / "a.ckpt"
        b = tmp_path / "b.ckpt"
        argv = ["train", "--data", str(dataset_dir), "--epochs", "2", "--seed", "7"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_eval_prints_metrics_and_report(self, tmp_path, dataset_dir, checkpoint_path, capsys):
        report = tmp_path / "evalreport"
        code = main(
            ["eval", "--model", str(checkpoint_path), "--data", str(dataset_dir), "--report", str(report)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "pixel_accuracy" in out and "mean_iou" in out
        assert (report / "metrics.csv").exists()
        assert (report / "per_sample_iou.csv").exists()
        assert (report / "iou_histogram.png").exists()

    def test_eval_metrics_csv_content(self, tmp_path, dataset_dir, checkpoint_path):
        report = tmp_path / "r"
        main(["eval", "--model", str(checkpoint_path), "--data", str(dataset_dir), "--report", str(report)])
        lines = (report / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "pixel_accuracy,mean_iou"
        values = [float(v) for v in lines[1].split(",")]
        assert all(0.0 <= v <= 1.0 for v in values)


class TestImageCommands:
    def test_segment_writes_mask(self, tmp_path, checkpoint_path):
        img = tmp_path / "in.ppm"
        write_image(img, np.random.default_rng(0).integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        out = tmp_path / "mask.pgm"
        code = main(["segment", "--model", str(checkpoint_path), "--input", str(img), "--output", str(out)])
        assert code == 0
        mask = decode_image(out.read_bytes())
        assert (mask.height, mask.width, mask.channels) == (16, 16, 1)

    def test_blur_constant_is_fixed_point(self, tmp_path):
        img = tmp_path / "in.ppm"
        pixels = np.full((8, 8, 3), 77, dtype=np.uint8)
        write_image(img, pixels)
        out = tmp_path / "out.ppm"
        assert main(["blur", "--input", str(img), "--output", str(out), "--sigma", "2"]) == 0
        np.testing.assert_array_equal(decode_image(out.read_bytes()).pixels, pixels)

    def test_blend_zero_mask_gives_background(self, tmp_path):
        rng = np.random.default_rng(1)
        fg = tmp_path / "fg.ppm"
        bg = tmp_path / "bg.ppm"
        mask = tmp_path / "mask.pgm"
        bg_pixels = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        write_image(fg, rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8))
        write_image(bg, bg_pixels)
        write_image(mask, np.zeros((6, 6, 1), dtype=np.uint8))
        out = tmp_path / "out.ppm"
        code = main(["blend", "--fg", str(fg), "--bg", str(bg), "--mask", str(mask), "--output", str(out)])
        assert code == 0
        np.testing.assert_array_equal(decode_image(out.read_bytes()).pixels, bg_pixels)


class TestPortrait:
    def test_forced_matte_matches_formula_oracle(self, tmp_path):
        rng = np.random.default_rng(2)
        pixels = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
        mask_pixels = (rng.uniform(size=(20, 20)) > 0.5).astype(np.uint8) * 255
        img = tmp_path / "in.ppm"
        matte = tmp_path / "matte.pgm"
        out = tmp_path / "out.ppm"
        write_image(img, pixels)
        write_image(matte, mask_pixels[:, :, None])
        code = main(
            ["portrait", "--input", str(img), "--output", str(out),
             "--matte", str(matte), "--sigma", "2", "--feather", "0"]
        )
        assert code == 0
        blurred = gaussian_blur(RasterImage(pixels), build_kernel(2.0))
        want = composite_formula(pixels, blurred.pixels, (mask_pixels == 255).astype(np.float64))
        np.testing.assert_array_equal(decode_image(out.read_bytes()).pixels, want)

    def test_full_pipeline_with_model_all_defaults(self, tmp_path, checkpoint_path):
        img = tmp_path / "in.ppm"
        write_image(img, np.random.default_rng(3).integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        out = tmp_path / "out.ppm"
        code = main(["portrait", "--model", str(checkpoint_path), "--input", str(img), "--output", str(out)])
        assert code == 0
        assert decode_image(out.read_bytes()).pixels.shape == (16, 16, 3)

    def test_config_file_and_flag_precedence(self, tmp_path):
        rng = np.random.default_rng(4)
        pixels = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
        img = tmp_path / "in.ppm"
        matte = tmp_path / "matte.pgm"
        write_image(img, pixels)
        write_image(matte, np.zeros((12, 12, 1), dtype=np.uint8))  # matte 0: output = blur

        config = tmp_path / "config.json"
        config.write_text(json.dumps({"blur_sigma": 1.0, "feather_radius": 0}))

        from_file = tmp_path / "a.ppm"
        main(["portrait", "--input", str(img), "--output", str(from_file),
              "--matte", str(matte), "--config", str(config)])
        np.testing.assert_array_equal(
            decode_image(from_file.read_bytes()).pixels,
            gaussian_blur(RasterImage(pixels), build_kernel(1.0)).pixels,
        )

        overridden = tmp_path / "b.ppm"
        main(["portrait", "--input", str(img), "--output", str(overridden),
              "--matte", str(matte), "--config", str(config), "--sigma", "3"])
        np.testing.assert_array_equal(
            decode_image(overridden.read_bytes()).pixels,
            gaussian_blur(RasterImage(pixels), build_kernel(3.0)).pixels,
        )

    def test_config_file_can_supply_model_path(self, tmp_path, checkpoint_path):
        img = tmp_path / "in.ppm"
        write_image(img, np.random.default_rng(5).integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"model_path": str(checkpoint_path), "blur_sigma": 2.0}))
        out = tmp_path / "out.ppm"
        assert main(["portrait", "--input", str(img), "--output", str(out), "--config", str(config)]) == 0
        assert out.exists()

    def test_unknown_config_key(self, tmp_path, capsys):
        img = tmp_path / "in.ppm"
        matte = tmp_path / "matte.pgm"
        write_image(img, np.zeros((8, 8, 3), dtype=np.uint8))
        write_image(matte, np.zeros((8, 8, 1), dtype=np.uint8))
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"blur": 7}))
        code = main(["portrait", "--input", str(img), "--output", str(tmp_path / "o.ppm"),
                     "--matte", str(matte), "--config", str(config)])
        assert code == 2
        assert "unknown config" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_passes_and_prints(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out
        assert "PASS" in out
