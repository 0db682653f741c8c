"""Input validation helpers shared by the estimators and the functional API."""
from __future__ import annotations

import numpy as np
import torch


class ValidationError(ValueError):
    pass


def check_finite(x, name: str = "input") -> None:
    if isinstance(x, torch.Tensor):
        ok = bool(torch.isfinite(x).all())
    else:
        x = np.asarray(x)
        ok = bool(np.isfinite(x).all()) if np.issubdtype(x.dtype, np.number) else False
    if not ok:
        raise ValidationError(f"{name} contains non-finite values")


def check_same_shape(x, y, what: str = "inputs") -> None:
    if tuple(x.shape) != tuple(y.shape):
        raise ValidationError(f"{what} differ in shape: {tuple(x.shape)} vs {tuple(y.shape)}")


def check_rgb_image(img, name: str = "image") -> np.ndarray:
    """Return ``img`` as a float64 ``(H, W, 3)`` array in [0, 1].

    uint8 input is decoded by /255. Float input outside [0, 1] is rejected.
    """
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[-1] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    arr = arr.astype(np.float64)
    check_finite(arr, name)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError(f"{name} values must lie in [0, 1]")
    return arr


def check_image_list(X, name: str = "X") -> list[np.ndarray]:
    """Accept one image, a list of images, or an ``(N, H, W, 3)`` array."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    return [check_rgb_image(img, f"{name}[{i}]") for i, img in enumerate(X)]


def check_feature_map(x: torch.Tensor, name: str = "x") -> torch.Tensor:
    if x.ndim != 4 or min(x.shape) < 1:
        raise ValidationError(f"{name} must be a non-empty (N, C, H, W) tensor, got {tuple(x.shape)}")
    return x
