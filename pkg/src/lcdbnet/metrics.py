"""PSNR and SSIM, plus a small report container for evaluation runs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .validation import ValidationError, check_rgb_image, check_same_shape

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def psnr(x, y, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the inputs are identical."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window(size: int, sigma: float = WINDOW_SIGMA, dtype=torch.float64) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return g


def _to_nchw(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        t = x
        if t.ndim == 2:
            t = t[None, None]
        elif t.ndim == 3:
            t = t[None]
        return t
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return torch.from_numpy(arr)[None, None]
    if arr.ndim == 3:  # channel-last image
        return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]
    if arr.ndim == 4:
        return torch.from_numpy(arr)
    raise ValidationError(f"unsupported image rank {arr.ndim}")


def ssim_map(x: torch.Tensor, y: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """Per-window SSIM statistic for ``(N, C, H, W)`` tensors (valid windows only).

    Inputs smaller than 11 pixels along an axis use a window truncated to
    the image extent along that axis.
    """
    check_same_shape(x, y)
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ValidationError("SSIM needs a non-empty image")
    wh, ww = min(WINDOW_SIZE, h), min(WINDOW_SIZE, w)
    gh = gaussian_window(wh, dtype=x.dtype).to(x.device)
    gw = gaussian_window(ww, dtype=x.dtype).to(x.device)
    kernel = (gh[:, None] * gw[None, :]).expand(c, 1, wh, ww)

    def filt(t):
        return F.conv2d(t, kernel, groups=c)

    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x**2
    syy = filt(y * y) - mu_y**2
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return num / den


def ssim_tensor(x: torch.Tensor, y: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """Differentiable mean SSIM over windows, channels and batch."""
    return ssim_map(x, y, data_range).mean()


def ssim(x, y, data_range: float = 1.0) -> float:
    """Mean SSIM. 2-D inputs are single-channel, 3-D numpy inputs are ``(H, W, C)``."""
    tx, ty = _to_nchw(x), _to_nchw(y)
    check_same_shape(tx, ty)
    with torch.no_grad():
        return float(ssim_tensor(tx.double(), ty.double(), data_range))


def evaluate_pair(pred, ref) -> tuple[float, float]:
    """RGB-domain (PSNR, SSIM) for two ``(H, W, 3)`` images in [0, 1] or uint8."""
    p = check_rgb_image(pred, "pred")
    r = check_rgb_image(ref, "ref")
    check_same_shape(p, r, "pred and ref")
    return psnr(p, r), ssim(p, r)


def _json_float(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


@dataclass
class MetricReport:
    per_image: list[tuple[str, float, float]] = field(default_factory=list)

    def add(self, name: str, psnr_db: float, ssim_value: float) -> None:
        self.per_image.append((name, float(psnr_db), float(ssim_value)))

    @property
    def psnr_db(self) -> float:
        if not self.per_image:
            return math.nan
        return float(np.mean([p for _, p, _ in self.per_image]))

    @property
    def ssim(self) -> float:
        if not self.per_image:
            return math.nan
        return float(np.mean([s for _, _, s in self.per_image]))

    def __len__(self) -> int:
        return len(self.per_image)

    def to_dict(self) -> dict:
        return {
            "images": [
                {"name": n, "psnr_db": _json_float(p), "ssim": s} for n, p, s in self.per_image
            ],
            "mean": {"psnr_db": _json_float(self.psnr_db), "ssim": self.ssim},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        data = json.loads(text)
        report = cls()
        for row in data["images"]:
            report.add(row["name"], float(row["psnr_db"]), float(row["ssim"]))
        return report

    def to_text(self) -> str:
        width = max([len("name")] + [len(n) for n, _, _ in self.per_image])
        lines = [f"{'name':<{width}}  {'psnr_db':>9}  {'ssim':>7}"]
        for n, p, s in self.per_image:
            lines.append(f"{n:<{width}}  {p:>9.4f}  {s:>7.4f}")
        lines.append(f"{'mean':<{width}}  {self.psnr_db:>9.4f}  {self.ssim:>7.4f}")
        return "\n".join(lines)
