"""Gaussian blur, matte feathering, and alpha compositing.

Blur is a separable two-pass correlation in float arithmetic with
replicate (clamp) borders, rounded to 8 bits exactly once at the end.
The border policy makes constant images fixed points of the blur, which
the property suite relies on. Blending follows I = alpha*F + (1-alpha)*B
per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import AlphaMatte, RasterImage, _to_uint8


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized separable blur weights; weights has length 2*radius + 1."""

    radius: int
    sigma: float
    weights: np.ndarray

    def __post_init__(self):
        if len(self.weights) != 2 * self.radius + 1:
            raise ValueError(f"expected {2 * self.radius + 1} weights, got {len(self.weights)}")
        if (self.weights <= 0).any():
            raise ValueError("kernel weights must all be positive")
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ValueError("kernel weights must sum to 1")


def build_kernel(sigma: float) -> GaussianKernel:
    """Gaussian taps exp(-i^2 / (2 sigma^2)) for |i| <= ceil(3 sigma), renormalized."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    # abs() keeps mirrored taps bit-identical, so symmetry is exact.
    weights = np.exp(-np.abs(offsets) ** 2 / (2.0 * sigma * sigma))
    weights /= weights.sum()
    return GaussianKernel(radius, float(sigma), weights)


def _correlate_rows(values: np.ndarray, weights: np.ndarray, radius: int) -> np.ndarray:
    """1-D correlation along axis 1 with replicate borders; fixed tap order."""
    pad = [(0, 0)] * values.ndim
    pad[1] = (radius, radius)
    padded = np.pad(values, pad, mode="edge")
    width = values.shape[1]
    out = np.zeros_like(values)
    for i, w in enumerate(weights):
        out += w * padded[:, i : i + width]
    return out


def _separable_correlate(values: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    horizontal = _correlate_rows(values, kernel.weights, kernel.radius)
    return _correlate_rows(horizontal.swapaxes(0, 1), kernel.weights, kernel.radius).swapaxes(0, 1)


def gaussian_blur(img: RasterImage, kernel: GaussianKernel) -> RasterImage:
    """Separable Gaussian blur; one final rounding to 8 bits."""
    blurred = _separable_correlate(img.pixels.astype(np.float64), kernel)
    return RasterImage(_to_uint8(blurred))


def feather_matte(matte: AlphaMatte, radius: int) -> AlphaMatte:
    """Soften matte boundaries by Gaussian smoothing; radius 0 is identity."""
    if radius < 0:
        raise ValueError(f"feather radius must be >= 0, got {radius}")
    if radius == 0:
        return matte
    kernel = build_kernel(max(radius / 2.0, 0.5))
    smoothed = _separable_correlate(matte.values, kernel)
    return AlphaMatte(np.clip(smoothed, 0.0, 1.0))


def alpha_blend(foreground: RasterImage, background: RasterImage, matte: AlphaMatte) -> RasterImage:
    """Per-channel I = alpha*F + (1-alpha)*B, rounded half away from zero."""
    if foreground.pixels.shape != background.pixels.shape:
        raise ValueError(
            f"foreground {foreground.pixels.shape} and background "
            f"{background.pixels.shape} must match"
        )
    if (matte.height, matte.width) != (foreground.height, foreground.width):
        raise ValueError(
            f"matte {matte.values.shape} does not match image "
            f"{(foreground.height, foreground.width)}"
        )
    alpha = matte.values[:, :, None]
    mixed = alpha * foreground.pixels.astype(np.float64) + (1.0 - alpha) * background.pixels.astype(np.float64)
    return RasterImage(_to_uint8(mixed))


def extract_foreground(img: RasterImage, matte: AlphaMatte) -> RasterImage:
    """Subject over black: the masked-region rendering of the pipeline."""
    black = RasterImage(np.zeros_like(img.pixels))
    return alpha_blend(img, black, matte)
