"""Portrait-mode rendering toolkit.

Trains a small fully convolutional network for per-pixel foreground
segmentation, then composites a sharp subject over a Gaussian-blurred
background via alpha blending.
"""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .compositor import (
    GaussianKernel,
    alpha_blend,
    build_kernel,
    extract_foreground,
    feather_matte,
    gaussian_blur,
)
from .data import DatasetError, SamplePair, generate_synthetic_dataset, load_dataset, save_dataset
from .layers import ShapeError, softmax_pixel_loss, softmax_probabilities
from .model import (
    FcnModel,
    GradcheckReport,
    LayerSpec,
    build_default_model,
    default_architecture,
    gradient_check,
    smooth_gradcheck_case,
)
from .optim import AdamState, adam_step, sgd_step
from .pipeline import PipelineConfig, PipelineError, run_portrait, segment
from .raster import (
    AlphaMatte,
    NetpbmError,
    RasterImage,
    decode_image,
    encode_image,
    image_to_tensor,
    matte_from_gray,
    matte_to_gray,
)
from .training import EvalMetrics, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AlphaMatte",
    "CheckpointError",
    "DatasetError",
    "EvalMetrics",
    "FcnModel",
    "GaussianKernel",
    "GradcheckReport",
    "LayerSpec",
    "NetpbmError",
    "PipelineConfig",
    "PipelineError",
    "RasterImage",
    "SamplePair",
    "ShapeError",
    "TrainConfig",
    "adam_step",
    "alpha_blend",
    "build_default_model",
    "build_kernel",
    "decode_image",
    "default_architecture",
    "encode_image",
    "evaluate",
    "extract_foreground",
    "feather_matte",
    "gaussian_blur",
    "generate_synthetic_dataset",
    "gradient_check",
    "image_to_tensor",
    "load_checkpoint",
    "load_dataset",
    "matte_from_gray",
    "matte_to_gray",
    "run_portrait",
    "save_checkpoint",
    "save_dataset",
    "segment",
    "sgd_step",
    "smooth_gradcheck_case",
    "softmax_pixel_loss",
    "softmax_probabilities",
    "train",
]
