"""Small synthetic low/normal-light pairs for smoke runs and tests."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import PairedSample, write_png


def smooth_image(rng: np.random.Generator, height: int, width: int, waves: int = 4) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    img = np.empty((height, width, 3))
    for c in range(3):
        acc = np.zeros((height, width))
        for _ in range(waves):
            fy, fx = rng.uniform(0.5, 4.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            acc += np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
        img[..., c] = acc / waves
    img = (img - img.min()) / (np.ptp(img) + 1e-12)
    return 0.1 + 0.8 * img


def darken(img: np.ndarray, gain: float = 0.25, gamma: float = 1.4) -> np.ndarray:
    return gain * img**gamma


def make_pairs(n: int, height: int = 64, width: int = 64, seed: int = 0, quantize: bool = True) -> list[PairedSample]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        ref = smooth_image(rng, height, width)
        low = darken(ref)
        if quantize:
            ref = np.round(ref * 255) / 255
            low = np.round(low * 255) / 255
        out.append(PairedSample(low, ref, f"{i:04d}"))
    return out


def write_dataset(root: str | Path, samples: list[PairedSample]) -> Path:
    root = Path(root)
    for s in samples:
        write_png(root / "low" / f"{s.name}.png", s.low)
        write_png(root / "high" / f"{s.name}.png", s.ref)
    return root
