"""Layer specifications, the segmentation network, and a gradient-check oracle.

The network is a plain ordered layer list with per-layer parameter tensors.
Forward retains what each backward pass needs, so a model instance must be
driven by one caller at a time; distinct instances are independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L

KINDS = ("conv", "relu", "maxpool", "deconv")


@dataclass(frozen=True)
class LayerSpec:
    """One layer's kind and hyperparameters.

    conv/deconv use kernel_h, kernel_w, in_channels, out_channels, stride,
    padding; maxpool uses window and stride; relu has no fields.
    """

    kind: str
    kernel_h: int = 0
    kernel_w: int = 0
    in_channels: int = 0
    out_channels: int = 0
    stride: int = 1
    padding: int = 0
    window: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "deconv"):
            if self.kernel_h < 1 or self.kernel_w < 1:
                raise ValueError(f"{self.kind} kernel dims must be >= 1")
            if self.in_channels < 1 or self.out_channels < 1:
                raise ValueError(f"{self.kind} channel counts must be >= 1")
            if self.stride < 1 or self.padding < 0:
                raise ValueError(f"{self.kind} stride must be >= 1 and padding >= 0")
        elif self.kind == "maxpool":
            if self.window < 1 or self.stride < 1:
                raise ValueError("maxpool window and stride must be >= 1")

    @staticmethod
    def conv(kernel_h, kernel_w, in_channels, out_channels, stride=1, padding=0) -> "LayerSpec":
        return LayerSpec("conv", kernel_h, kernel_w, in_channels, out_channels, stride, padding)

    @staticmethod
    def deconv(kernel_h, kernel_w, in_channels, out_channels, stride=1, padding=0) -> "LayerSpec":
        return LayerSpec("deconv", kernel_h, kernel_w, in_channels, out_channels, stride, padding)

    @staticmethod
    def relu() -> "LayerSpec":
        return LayerSpec("relu")

    @staticmethod
    def maxpool(window, stride) -> "LayerSpec":
        return LayerSpec("maxpool", window=window, stride=stride)

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "deconv")

    def param_shapes(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if self.kind == "conv":
            return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w), (self.out_channels,)
        if self.kind == "deconv":
            return (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w), (self.out_channels,)
        raise ValueError(f"{self.kind} layer has no parameters")


def _validate_chain(specs: list[LayerSpec]) -> None:
    current = None
    last = None
    for spec in specs:
        if not spec.has_params:
            continue
        if current is not None and spec.in_channels != current:
            raise ValueError(
                f"layer chain broken: {spec.kind} expects {spec.in_channels} input "
                f"channels but receives {current}"
            )
        current = spec.out_channels
        last = spec
    if last is not None and last.out_channels != 2:
        raise ValueError(f"network must end with 2 output channels, got {last.out_channels}")


class FcnModel:
    """Ordered layer list plus parameter tensors.

    Parameters are float32 (the checkpoint dtype). ``step_count`` counts
    optimizer steps applied so far and rides along in checkpoints.
    """

    def __init__(self, specs, params=None, seed: int = 0, dtype=np.float32):
        self.specs = list(specs)
        _validate_chain(self.specs)
        if params is None:
            params = _init_params(self.specs, seed, dtype)
        else:
            params = [None if p is None else (np.asarray(p[0]), np.asarray(p[1])) for p in params]
            _validate_params(self.specs, params)
        self.params = params
        self.step_count = 0
        self._cache = None

    @property
    def in_channels(self) -> int | None:
        for spec in self.specs:
            if spec.has_params:
                return spec.in_channels
        return None

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Run all layers; returns logits and retains activations for backward."""
        cache = []
        for spec, p in zip(self.specs, self.params):
            if spec.kind == "conv":
                cache.append(x)
                x = L.conv_forward(x, p[0], p[1], spec.stride, spec.padding)
            elif spec.kind == "deconv":
                cache.append(x)
                x = L.deconv_forward(x, p[0], p[1], spec.stride, spec.padding)
            elif spec.kind == "relu":
                cache.append(x)
                x = L.relu_forward(x)
            else:  # maxpool
                x, indices = L.maxpool_forward(x, spec.window, spec.stride)
                cache.append(indices)
        self._cache = cache
        return x

    def backward(self, grad_logits: np.ndarray):
        """Backpropagate through all layers, reverse order.

        Returns per-layer (grad_weights, grad_bias) tuples, None for
        parameterless layers.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward: no cached activations")
        grads: list = [None] * len(self.specs)
        grad = grad_logits
        for i in range(len(self.specs) - 1, -1, -1):
            spec, p, cached = self.specs[i], self.params[i], self._cache[i]
            if spec.kind == "conv":
                grad, gw, gb = L.conv_backward(cached, p[0], grad, spec.stride, spec.padding)
                grads[i] = (gw, gb)
            elif spec.kind == "deconv":
                grad, gw, gb = L.deconv_backward(cached, p[0], grad, spec.stride, spec.padding)
                grads[i] = (gw, gb)
            elif spec.kind == "relu":
                grad = L.relu_backward(cached, grad)
            else:
                grad = L.maxpool_backward(cached, grad)
        return grads

    def parameter_list(self) -> list[np.ndarray]:
        """Flat parameter tensors: weights then bias per layer, layer order."""
        flat = []
        for p in self.params:
            if p is not None:
                flat.extend(p)
        return flat

    def set_parameter_list(self, flat) -> None:
        flat = list(flat)
        expected = sum(2 for p in self.params if p is not None)
        if len(flat) != expected:
            raise ValueError(f"expected {expected} parameter tensors, got {len(flat)}")
        it = iter(flat)
        params = []
        for p in self.params:
            params.append(None if p is None else (next(it), next(it)))
        _validate_params(self.specs, params)
        self.params = params

    def astype(self, dtype) -> "FcnModel":
        """Copy of this model with parameters cast to dtype (step count kept)."""
        params = [None if p is None else (p[0].astype(dtype), p[1].astype(dtype)) for p in self.params]
        clone = FcnModel(self.specs, params)
        clone.step_count = self.step_count
        return clone


def _init_params(specs, seed, dtype):
    # He initialization: weights ~ N(0, 2 / fan_in), biases zero.
    rng = np.random.default_rng(seed)
    params = []
    for spec in specs:
        if not spec.has_params:
            params.append(None)
            continue
        w_shape, b_shape = spec.param_shapes()
        fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w
        std = np.sqrt(2.0 / fan_in)
        weights = rng.normal(0.0, std, size=w_shape).astype(dtype)
        bias = np.zeros(b_shape, dtype=dtype)
        params.append((weights, bias))
    return params


def _validate_params(specs, params):
    if len(params) != len(specs):
        raise ValueError(f"expected {len(specs)} parameter entries, got {len(params)}")
    for spec, p in zip(specs, params):
        if spec.has_params != (p is not None):
            raise ValueError(f"parameter entry mismatch for {spec.kind} layer")
        if p is not None:
            w_shape, b_shape = spec.param_shapes()
            if p[0].shape != w_shape or p[1].shape != b_shape:
                raise ValueError(
                    f"parameter shapes {p[0].shape}/{p[1].shape} do not match "
                    f"{spec.kind} spec {w_shape}/{b_shape}"
                )


def default_architecture(in_channels: int = 3) -> list[LayerSpec]:
    """Small resolution-preserving segmentation net: two output channels."""
    return [
        LayerSpec.conv(3, 3, in_channels, 16, stride=1, padding=1),
        LayerSpec.relu(),
        LayerSpec.maxpool(2, 2),
        LayerSpec.conv(3, 3, 16, 32, stride=1, padding=1),
        LayerSpec.relu(),
        LayerSpec.deconv(2, 2, 32, 16, stride=2, padding=0),
        LayerSpec.relu(),
        LayerSpec.conv(1, 1, 16, 2, stride=1, padding=0),
    ]


def build_default_model(seed: int = 0, in_channels: int = 3) -> FcnModel:
    return FcnModel(default_architecture(in_channels), seed=seed)


def spatial_multiple(specs) -> int:
    """Input dims must be a multiple of this for pooling to invert cleanly."""
    multiple = 1
    for spec in specs:
        if spec.kind == "maxpool":
            multiple *= spec.stride
    return multiple


@dataclass
class GradcheckFailure:
    layer: int
    param: str  # "weights" or "bias"
    index: int  # flat index within the tensor
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    parameters_checked: int
    max_rel_error: float
    epsilon: float
    tolerance: float
    failures: list[GradcheckFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = [
            f"checked {self.parameters_checked} parameters "
            f"(epsilon={self.epsilon:g}, tolerance={self.tolerance:g})",
            f"max relative error: {self.max_rel_error:.3e}",
        ]
        for f in self.failures[:10]:
            lines.append(
                f"  FAIL layer {f.layer} {f.param}[{f.index}]: "
                f"analytic={f.analytic:.6e} numeric={f.numeric:.6e} rel={f.rel_error:.3e}"
            )
        if len(self.failures) > 10:
            lines.append(f"  ... {len(self.failures) - 10} more failures")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def smooth_gradcheck_case(seed: int = 0, size: int = 16, epsilon: float = 1e-3):
    """A default-architecture model and input certified free of kinks.

    ReLU and max-pooling are piecewise linear, so central differences at a
    random initialization routinely straddle an activation sign change or a
    pool argmax flip somewhere among thousands of units, and the (correct)
    analytic subgradient legitimately disagrees there. This builder returns
    an evaluation point where that cannot happen: weights are positive and
    sum-normalized per output unit, biases sit at 0.1, and the input is a
    raster ramp plus small noise. Every preactivation then clears zero, and
    every pool window has a unique maximum, by margins far exceeding what
    an epsilon-sized parameter perturbation can move them. The margins are
    re-certified numerically on every call.

    Returns (model, input, labels).
    """
    base = FcnModel(default_architecture(), seed=seed)
    params = []
    for spec, p in zip(base.specs, base.params):
        if p is None:
            params.append(None)
            continue
        w = np.abs(p[0]).astype(np.float64)
        axes = (1, 2, 3) if spec.kind == "conv" else (0, 2, 3)
        w = (w / w.sum(axis=axes, keepdims=True)).astype(np.float32)
        params.append((w, np.full(p[1].shape, 0.1, dtype=np.float32)))
    model = FcnModel(base.specs, params=params)

    rng = np.random.default_rng(seed)
    ramp = 0.04 * np.arange(size * size, dtype=np.float64).reshape(size, size)
    x = ramp[None, None, :, :] + 0.002 * rng.random((1, 3, size, size))
    labels = rng.integers(0, 2, size=(1, size, size))

    _certify_smooth(model, x, epsilon)
    return model, x, labels


def _certify_smooth(model: FcnModel, x: np.ndarray, epsilon: float) -> None:
    """Assert ReLU margins and pool gaps dominate any epsilon perturbation.

    ReLU margins are checked against the absolute shift bound (epsilon times
    the largest feeding activation). Pool gaps are checked against the
    differential shift bound: with positive sum-normalized weights and
    1-Lipschitz activations, two cells of one pool window move apart by at
    most epsilon times the largest input difference at window-internal
    offsets, so only that (much smaller) quantity can close a gap.
    """
    work = model.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    act = x
    bound = epsilon * float(np.abs(act).max())
    for spec, p in zip(work.specs, work.params):
        if spec.kind == "conv":
            act = L.conv_forward(act, p[0], p[1], spec.stride, spec.padding)
            if act.min() <= 4.0 * bound:
                raise AssertionError(f"preactivation margin {act.min():.4g} too small vs {bound:.4g}")
        elif spec.kind == "deconv":
            act = L.deconv_forward(act, p[0], p[1], spec.stride, spec.padding)
            if act.min() <= 4.0 * bound:
                raise AssertionError(f"preactivation margin {act.min():.4g} too small vs {bound:.4g}")
        elif spec.kind == "relu":
            act = L.relu_forward(act)
        else:
            diff = 0.0
            for di in range(spec.window):
                for dj in range(spec.window):
                    if di == 0 and dj == 0:
                        continue
                    shifted = np.abs(x[:, :, di:, dj:] - x[:, :, : x.shape[2] - di, : x.shape[3] - dj])
                    diff = max(diff, float(shifted.max()))
            windows = L._sliding_windows(act, spec.window, spec.window, spec.stride)
            flat = windows.reshape(windows.shape[:4] + (spec.window * spec.window,))
            top2 = np.sort(flat, axis=-1)[..., -2:]
            gap = float((top2[..., 1] - top2[..., 0]).min())
            if gap <= 4.0 * epsilon * diff:
                raise AssertionError(f"pool top-2 gap {gap:.4g} too small vs {epsilon * diff:.4g}")
            act, _ = L.maxpool_forward(act, spec.window, spec.stride)
        bound = max(bound, epsilon * float(np.abs(act).max()))


def gradient_check(
    model: FcnModel,
    x: np.ndarray,
    labels: np.ndarray,
    epsilon: float = 1e-3,
    tolerance: float = 1e-3,
) -> GradcheckReport:
    """Compare every analytic parameter gradient against central differences.

    Runs on a float64 copy of the model so the difference quotients are not
    dominated by rounding. Intended for small models; cost is two forward
    passes per parameter scalar.
    """
    work = model.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)

    logits = work.forward(x)
    _, grad_logits = L.softmax_pixel_loss(logits, labels)
    analytic = work.backward(grad_logits)

    def loss_at() -> float:
        loss, _ = L.softmax_pixel_loss(work.forward(x), labels)
        return loss

    checked = 0
    max_rel = 0.0
    failures = []
    for li, (p, g) in enumerate(zip(work.params, analytic)):
        if p is None:
            continue
        for name, tensor, grad in (("weights", p[0], g[0]), ("bias", p[1], g[1])):
            flat_t = tensor.reshape(-1)
            flat_g = grad.reshape(-1)
            for j in range(flat_t.size):
                original = flat_t[j]
                flat_t[j] = original + epsilon
                loss_plus = loss_at()
                flat_t[j] = original - epsilon
                loss_minus = loss_at()
                flat_t[j] = original
                numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
                a = float(flat_g[j])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                checked += 1
                max_rel = max(max_rel, rel)
                if rel > tolerance:
                    failures.append(GradcheckFailure(li, name, j, a, numeric, rel))
    return GradcheckReport(checked, max_rel, epsilon, tolerance, failures)
