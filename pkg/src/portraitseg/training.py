"""The training loop and segmentation-quality evaluation.

Training is fully deterministic: the seed fixes shuffling, and all math
runs through numpy with fixed summation order, so identical (seed,
dataset, config) triples reproduce parameters bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .data import SamplePair
from .model import FcnModel
from .optim import AdamState, adam_step, sgd_step
from .raster import image_to_tensor

OPTIMIZERS = ("sgd", "adam")


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 4
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def stack_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    """Samples to batched (n, 3, h, w) inputs and (n, h, w) label maps."""
    inputs = np.concatenate([image_to_tensor(s.image) for s in samples])
    labels = np.stack([s.label_map for s in samples])
    return inputs, labels


def train(model: FcnModel, dataset: list[SamplePair], config: TrainConfig):
    """Optimize model on the dataset; returns (model, history, optimizer_state).

    history holds one mean loss per epoch. optimizer_state carries the Adam
    moments (None for SGD) so checkpoints can persist them.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    sizes = {(s.image.width, s.image.height) for s in dataset}
    if len(sizes) > 1:
        raise ValueError(f"samples must share dimensions for batching, found {sorted(sizes)}")

    inputs, labels = stack_samples(dataset)
    n = len(dataset)
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like(model.parameter_list()) if config.optimizer == "adam" else None

    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = model.forward(inputs[idx])
            loss, grad_logits = L.softmax_pixel_loss(logits, labels[idx])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at epoch {epoch + 1}, "
                    f"batch {start // config.batch_size + 1}"
                )
            grads = model.backward(grad_logits)
            flat_grads = []
            for g in grads:
                if g is not None:
                    flat_grads.extend(g)
            params = model.parameter_list()
            if config.optimizer == "adam":
                params, state = adam_step(params, flat_grads, state, model.step_count + 1, config)
            else:
                params = sgd_step(params, flat_grads, config.learning_rate)
            model.set_parameter_list(params)
            model.step_count += 1
            loss_sum += loss * len(idx)
        history.append(loss_sum / n)
    return model, history, state


@dataclass
class EvalMetrics:
    pixel_accuracy: float
    mean_iou: float
    per_sample_iou: list[float] = field(default_factory=list)


def evaluate(model: FcnModel, dataset: list[SamplePair], threshold: float = 0.5) -> EvalMetrics:
    """Foreground IoU and pixel accuracy, averaged over samples.

    Prediction: foreground-channel softmax >= threshold. IoU of an empty
    prediction against an empty ground truth counts as 1.
    """
    if not dataset:
        raise ValueError("evaluation dataset is empty")
    accuracies = []
    ious = []
    for sample in dataset:
        logits = model.forward(image_to_tensor(sample.image))
        prob = L.softmax_probabilities(logits)[0, 1]
        pred = prob >= threshold
        truth = sample.label_map.astype(bool)
        accuracies.append(float((pred == truth).mean()))
        union = np.logical_or(pred, truth).sum()
        if union == 0:
            ious.append(1.0)
        else:
            ious.append(float(np.logical_and(pred, truth).sum() / union))
    return EvalMetrics(float(np.mean(accuracies)), float(np.mean(ious)), ious)
