"""Charbonnier + SSIM objective and the three-term joint loss.

All terms expect unit-normalized YCbCr tensors shaped ``(N, C, H, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch

from .metrics import ssim_tensor
from .validation import check_same_shape

EPSILON = 1e-3


def charbonnier(x: torch.Tensor, y: torch.Tensor, eps: float = EPSILON) -> torch.Tensor:
    """Elementwise Charbonnier penalty ``sqrt((x - y)^2 + eps^2)``, averaged."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    check_same_shape(x, y)
    return torch.sqrt((x - y) ** 2 + eps**2).mean()


def ssim_loss(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    check_same_shape(x, y)
    return 1.0 - ssim_tensor(x, y)


class BranchLoss(NamedTuple):
    charbonnier: torch.Tensor
    ssim: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.charbonnier + self.ssim


def branch_terms(pred: torch.Tensor, target: torch.Tensor, eps: float = EPSILON) -> BranchLoss:
    return BranchLoss(charbonnier(pred, target, eps), ssim_loss(pred, target))


def branch_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = EPSILON) -> torch.Tensor:
    return branch_terms(pred, target, eps).total


@dataclass
class LossBreakdown:
    """Weighted joint objective; ``lan``/``crn`` are ``None`` when that branch is ablated."""

    total: torch.Tensor
    lan: BranchLoss | None
    crn: BranchLoss | None
    main: BranchLoss
    lambda1: float
    lambda2: float

    @property
    def lan_term(self) -> float:
        return float(self.lan.total.detach()) if self.lan is not None else 0.0

    @property
    def crn_term(self) -> float:
        return float(self.crn.total.detach()) if self.crn is not None else 0.0

    @property
    def main_term(self) -> float:
        return float(self.main.total.detach())

    def as_dict(self) -> dict[str, float]:
        out = {"total": float(self.total.detach())}
        for name, part in (("lan", self.lan), ("crn", self.crn), ("main", self.main)):
            if part is None:
                continue
            out[f"{name}_term"] = float(part.total.detach())
            out[f"{name}_charbonnier"] = float(part.charbonnier.detach())
            out[f"{name}_ssim"] = float(part.ssim.detach())
        return out


def joint_loss(
    sm_lum: torch.Tensor | None,
    sm_chrom: torch.Tensor | None,
    full_ycc: torch.Tensor,
    ref_ycc: torch.Tensor,
    lambda1: float = 0.1,
    lambda2: float = 0.1,
    eps: float = EPSILON,
) -> LossBreakdown:
    """``lambda1 * L_lan + lambda2 * L_crn + L_main`` against a unit YCbCr reference.

    The luminance term compares ``sm_lum`` with the reference Y plane, the
    chrominance term compares ``sm_chrom`` with the reference Cb/Cr planes.
    """
    check_same_shape(full_ycc, ref_ycc, "prediction and reference")
    main = branch_terms(full_ycc, ref_ycc, eps)
    lan = branch_terms(sm_lum, ref_ycc[:, :1], eps) if sm_lum is not None else None
    crn = branch_terms(sm_chrom, ref_ycc[:, 1:], eps) if sm_chrom is not None else None
    total = None
    if lan is not None:
        total = lambda1 * lan.total
    if crn is not None:
        total = lambda2 * crn.total if total is None else total + lambda2 * crn.total
    total = main.total if total is None else total + main.total
    return LossBreakdown(total, lan, crn, main, lambda1, lambda2)
