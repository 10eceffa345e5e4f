import numpy as np
import pytest

from portraitseg.data import SamplePair, generate_synthetic_dataset
from portraitseg.model import FcnModel, LayerSpec, build_default_model
from portraitseg.raster import RasterImage
from portraitseg.training import EvalMetrics, TrainConfig, evaluate, train


def threshold_model(scale=20.0):
    """1x1 conv reading channel 0: predicts foreground where pixel > 127."""
    w = np.zeros((2, 3, 1, 1), dtype=np.float32)
    w[1, 0] = scale
    b = np.array([0.0, -scale / 2.0], dtype=np.float32)
    return FcnModel([LayerSpec.conv(1, 1, 3, 2)], params=[(w, b)])


def pair_from_masks(pred_region, gt_region):
    """Image channel 0 encodes pred_region; the mask encodes gt_region."""
    h, w = pred_region.shape
    pixels = np.zeros((h, w, 3), dtype=np.uint8)
    pixels[:, :, 0] = np.where(pred_region, 255, 0)
    mask = np.where(gt_region, 255, 0).astype(np.uint8)[:, :, None]
    return SamplePair(RasterImage(pixels), RasterImage(mask))


class TestTrainConfig:
    def test_defaults_match_documented_values(self):
        config = TrainConfig()
        assert config.optimizer == "adam"
        assert config.learning_rate == pytest.approx(1e-3)
        assert (config.beta1, config.beta2) == (0.9, 0.999)
        assert config.epsilon == pytest.approx(1e-8)
        assert config.batch_size == 4

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"optimizer": "rmsprop"},
            {"beta1": 1.0},
            {"beta2": -0.1},
            {"batch_size": 0},
            {"epochs": -1},
            {"epsilon": 0.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTrain:
    def test_zero_epochs_is_identity(self):
        dataset = generate_synthetic_dataset(2, 16, seed=0)
        model = build_default_model(seed=0)
        before = [t.copy() for t in model.parameter_list()]
        model, history, state = train(model, dataset, TrainConfig(epochs=0))
        assert history == []
        for a, b in zip(before, model.parameter_list()):
            np.testing.assert_array_equal(a, b)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train(build_default_model(), [], TrainConfig())

    def test_mixed_sizes_rejected(self):
        dataset = generate_synthetic_dataset(1, 16, seed=0) + generate_synthetic_dataset(1, 24, seed=0)
        with pytest.raises(ValueError, match="dimensions"):
            train(build_default_model(), dataset, TrainConfig())

    def test_deterministic_given_seed(self):
        dataset = generate_synthetic_dataset(6, 16, seed=3)

        def run():
            model = build_default_model(seed=9)
            model, history, _ = train(model, dataset, TrainConfig(epochs=2, seed=9))
            return model.parameter_list(), history

        params_a, hist_a = run()
        params_b, hist_b = run()
        assert hist_a == hist_b
        for a, b in zip(params_a, params_b):
            assert a.tobytes() == b.tobytes()

    def test_overfits_single_sample(self):
        dataset = generate_synthetic_dataset(1, 16, seed=4)
        model = build_default_model(seed=4)
        _, history, _ = train(model, dataset, TrainConfig(epochs=20, learning_rate=1e-2))
        assert len(history) == 20
        assert all(np.isfinite(history))
        assert history[19] < history[0]

    def test_sgd_also_learns(self):
        dataset = generate_synthetic_dataset(1, 16, seed=5)
        model = build_default_model(seed=5)
        _, history, state = train(
            model, dataset, TrainConfig(epochs=10, optimizer="sgd", learning_rate=0.05)
        )
        assert state is None
        assert history[-1] < history[0]

    def test_step_counter_advances(self):
        dataset = generate_synthetic_dataset(5, 16, seed=6)
        model = build_default_model(seed=6)
        model, _, _ = train(model, dataset, TrainConfig(epochs=2, batch_size=2))
        assert model.step_count == 6  # ceil(5/2) = 3 batches per epoch

    def test_nonfinite_loss_aborts_with_diagnostic(self):
        dataset = generate_synthetic_dataset(1, 16, seed=7)
        model = build_default_model(seed=7)
        model.params[0][0][:] = np.inf
        with pytest.raises(RuntimeError, match="epoch 1"):
            train(model, dataset, TrainConfig(epochs=1))

    def test_adam_state_returned(self):
        dataset = generate_synthetic_dataset(2, 16, seed=8)
        model = build_default_model(seed=8)
        _, _, state = train(model, dataset, TrainConfig(epochs=1))
        assert state is not None
        assert len(state.m) == len(model.parameter_list())


class TestEvaluate:
    def test_perfect_prediction(self):
        region = np.zeros((8, 8), dtype=bool)
        region[:, :3] = True
        metrics = evaluate(threshold_model(), [pair_from_masks(region, region)])
        assert metrics.mean_iou == 1.0
        assert metrics.pixel_accuracy == 1.0

    def test_disjoint_prediction(self):
        pred = np.zeros((8, 8), dtype=bool)
        pred[:4] = True
        metrics = evaluate(threshold_model(), [pair_from_masks(pred, ~pred)])
        assert metrics.mean_iou == 0.0

    def test_half_overlap_thirds(self):
        # pred = top half, gt = left half: intersection is one quadrant,
        # union is three quadrants, so IoU = 1/3 at any even size.
        for n in (2, 8):
            pred = np.zeros((n, n), dtype=bool)
            pred[: n // 2] = True
            gt = np.zeros((n, n), dtype=bool)
            gt[:, : n // 2] = True
            metrics = evaluate(threshold_model(), [pair_from_masks(pred, gt)])
            assert metrics.mean_iou == pytest.approx(1 / 3)

    def test_both_empty_counts_as_one(self):
        empty = np.zeros((4, 4), dtype=bool)
        metrics = evaluate(threshold_model(), [pair_from_masks(empty, empty)])
        assert metrics.mean_iou == 1.0

    def test_iou_bounds_and_per_sample(self):
        dataset = generate_synthetic_dataset(4, 16, seed=9)
        metrics = evaluate(build_default_model(seed=9), dataset)
        assert isinstance(metrics, EvalMetrics)
        assert len(metrics.per_sample_iou) == 4
        assert all(0.0 <= iou <= 1.0 for iou in metrics.per_sample_iou)
        assert 0.0 <= metrics.pixel_accuracy <= 1.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate(build_default_model(), [])
