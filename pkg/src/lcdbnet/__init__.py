"""Luminance/chrominance dual-branch low-light image enhancement."""
from .colorspace import denormalize_ycc, normalize_ycc, rgb_to_ycc, ycc_to_rgb
from .config import TOY_NETWORK, NetworkConfig, TrainConfig
from .estimator import LCDBNetEnhancer, YCbCrTransformer
from .metrics import MetricReport, psnr, ssim
from .networks import LCDBNet, count_parameters
from .training import evaluate_checkpoint, train

__all__ = [
    "LCDBNet",
    "TOY_NETWORK",
    "LCDBNetEnhancer",
    "MetricReport",
    "NetworkConfig",
    "TrainConfig",
    "YCbCrTransformer",
    "count_parameters",
    "denormalize_ycc",
    "evaluate_checkpoint",
    "normalize_ycc",
    "psnr",
    "rgb_to_ycc",
    "ssim",
    "train",
    "ycc_to_rgb",
]

__version__ = "0.1.0"
