"""RGB <-> YCbCr conversion with the printed nine-coefficient matrix.

Arrays are channel-last ``(..., 3)`` for the numpy API and channel-first
``(N, 3, H, W)`` for the ``*_tensor`` variants used inside the network.
"""
from __future__ import annotations

import numpy as np
import torch

from .validation import check_finite

RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.147, -0.289, 0.436],
        [0.615, -0.515, -0.100],
    ],
    dtype=np.float64,
)
# Numeric inverse of the matrix above, not the textbook YUV inverse.
YCC_TO_RGB = np.linalg.inv(RGB_TO_YCC)

CB_RANGE = 0.872
CR_RANGE = 1.230
_UNIT_SCALE = np.array([1.0, 1.0 / CB_RANGE, 1.0 / CR_RANGE])
_UNIT_OFFSET = np.array([0.0, 0.5, 0.5])


def _apply(matrix: np.ndarray, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.shape[-1] != 3:
        raise ValueError(f"expected a trailing channel axis of size 3, got shape {img.shape}")
    check_finite(img, "image")
    dtype = img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64
    return np.einsum("ij,...j->...i", matrix.astype(dtype), img.astype(dtype, copy=False))


def rgb_to_ycc(img) -> np.ndarray:
    """Map an RGB image to (Y, Cb, Cr) planes, stacked on the last axis."""
    return _apply(RGB_TO_YCC, img)


def ycc_to_rgb(img, clip: bool = True) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycc`; clamps to [0, 1] unless ``clip=False``."""
    out = _apply(YCC_TO_RGB, img)
    return np.clip(out, 0.0, 1.0) if clip else out


def normalize_ycc(img) -> np.ndarray:
    """Remap Cb and Cr affinely onto [0, 1]; Y is left unchanged."""
    img = np.asarray(img)
    dtype = img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64
    return img * _UNIT_SCALE.astype(dtype) + _UNIT_OFFSET.astype(dtype)


def denormalize_ycc(img) -> np.ndarray:
    img = np.asarray(img)
    check_finite(img, "image")
    dtype = img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64
    return (img - _UNIT_OFFSET.astype(dtype)) / _UNIT_SCALE.astype(dtype)


def _channel_matrix(matrix: np.ndarray, x: torch.Tensor) -> torch.Tensor:
    m = torch.as_tensor(matrix, dtype=x.dtype, device=x.device)
    return torch.einsum("ij,njhw->nihw", m, x)


def _affine(x: torch.Tensor, scale: np.ndarray, offset: np.ndarray) -> torch.Tensor:
    s = torch.as_tensor(scale, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    o = torch.as_tensor(offset, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    return x * s + o


def rgb_to_unit_ycc_tensor(rgb: torch.Tensor) -> torch.Tensor:
    """``(N, 3, H, W)`` RGB batch to unit-normalized YCbCr, differentiable."""
    return _affine(_channel_matrix(RGB_TO_YCC, rgb), _UNIT_SCALE, _UNIT_OFFSET)


def unit_ycc_to_rgb_tensor(ycc: torch.Tensor, clip: bool = True) -> torch.Tensor:
    raw = _affine(ycc, 1.0 / _UNIT_SCALE, -_UNIT_OFFSET / _UNIT_SCALE)
    rgb = _channel_matrix(YCC_TO_RGB, raw)
    return rgb.clamp(0.0, 1.0) if clip else rgb


def decode_uint8(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 255.0


def encode_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
