"""End-to-end portrait rendering: segment, blur the background, blend.

The matte from the network is thresholded to a hard subject boundary,
then feathered so the transition band blends smoothly; the sharp
foreground comes straight from the original image.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import layers as L
from .compositor import alpha_blend, build_kernel, feather_matte, gaussian_blur
from .model import FcnModel, spatial_multiple
from .raster import AlphaMatte, RasterImage, image_to_tensor


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message is prefixed with the stage name."""


@dataclass
class PipelineConfig:
    model_path: str | Path | None = None
    blur_sigma: float = 8.0
    feather_radius: int = 3
    mask_threshold: float = 0.5

    def __post_init__(self):
        if self.blur_sigma <= 0:
            raise ValueError(f"blur_sigma must be positive, got {self.blur_sigma}")
        if not (0.0 < self.mask_threshold < 1.0):
            raise ValueError(f"mask_threshold must lie in (0, 1), got {self.mask_threshold}")
        if self.feather_radius < 0:
            raise ValueError(f"feather_radius must be >= 0, got {self.feather_radius}")


def segment(model: FcnModel, img: RasterImage) -> AlphaMatte:
    """Soft foreground matte: the network's foreground softmax channel.

    Images whose dimensions aren't a multiple of the network's pooling
    factor are replicate-padded for the forward pass and the matte is
    cropped back, so output dimensions always match the input.
    """
    if model.in_channels is not None and model.in_channels != img.channels:
        raise ValueError(
            f"model expects {model.in_channels}-channel input, image has {img.channels}"
        )
    x = image_to_tensor(img)
    multiple = spatial_multiple(model.specs)
    pad_h = -img.height % multiple
    pad_w = -img.width % multiple
    if pad_h or pad_w:
        x = np.pad(x, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    probabilities = L.softmax_probabilities(model.forward(x))
    foreground = probabilities[0, 1, : img.height, : img.width]
    return AlphaMatte(np.clip(foreground, 0.0, 1.0))


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except PipelineError:
        raise
    except Exception as err:
        raise PipelineError(f"{name}: {err}") from err


def run_portrait(
    img: RasterImage,
    model: FcnModel | None,
    config: PipelineConfig,
    matte: AlphaMatte | None = None,
) -> RasterImage:
    """Render the portrait-mode composite of img.

    Stages: segment (skipped when a matte is forced), threshold + feather,
    background blur, alpha blend of the sharp original over the blur.
    """
    if matte is None:
        if model is None:
            raise PipelineError("segment: no model and no forced matte given")
        matte = _stage("segment", segment, model, img)
    elif (matte.height, matte.width) != (img.height, img.width):
        raise PipelineError(
            f"segment: forced matte {matte.values.shape} does not match "
            f"image {(img.height, img.width)}"
        )

    def postprocess():
        binary = (matte.values >= config.mask_threshold).astype(np.float64)
        return feather_matte(AlphaMatte(binary), config.feather_radius)

    feathered = _stage("matte postprocess", postprocess)
    blurred = _stage("background blur", gaussian_blur, img, build_kernel(config.blur_sigma))
    return _stage("blend", alpha_blend, img, blurred, feathered)
