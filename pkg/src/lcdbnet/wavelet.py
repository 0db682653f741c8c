"""Orthonormal 2D Haar DWT/IWT over the last two axes.

Works on numpy arrays and torch tensors alike (the torch path is
differentiable). Each 2x2 block ``[a b; c d]`` maps to::

    ll = (a + b + c + d) / 2      lh = (a + c - b - d) / 2
    hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F


class SubbandSet(NamedTuple):
    ll: object
    lh: object
    hl: object
    hh: object


@dataclass
class WaveletPyramid:
    """Detail triples ordered finest to coarsest plus the final LL band."""

    details: list = field(default_factory=list)
    approx: object = None
    original_size: tuple | None = None

    @property
    def levels(self) -> int:
        return len(self.details)


def _stack(arrays, axis):
    if isinstance(arrays[0], torch.Tensor):
        return torch.stack(arrays, dim=axis)
    return np.stack(arrays, axis=axis)


def dwt2_level(x) -> SubbandSet:
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"dwt2_level needs even spatial dims, got {h}x{w}; pad first")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return SubbandSet(
        ll=(a + b + c + d) / 2,
        lh=(a + c - b - d) / 2,
        hl=(a + b - c - d) / 2,
        hh=(a - b - c + d) / 2,
    )


def idwt2_level(s: SubbandSet):
    ll, lh, hl, hh = s
    shapes = {tuple(t.shape) for t in s}
    if len(shapes) != 1:
        raise ValueError(f"subband shapes disagree: {sorted(shapes)}")
    a = (ll + lh + hl + hh) / 2
    b = (ll - lh + hl - hh) / 2
    c = (ll + lh - hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    top = _stack([a, b], -1)  # (..., h, w, 2)
    bottom = _stack([c, d], -1)
    blocks = _stack([top, bottom], -3)  # (..., h, 2, w, 2)
    *lead, h, _, w, _ = blocks.shape
    return blocks.reshape(*lead, 2 * h, 2 * w)


def pad_to_multiple(x, multiple: int):
    """Reflect-pad the bottom/right edges so H and W divide ``multiple``."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return x
    if isinstance(x, torch.Tensor):
        mode = "reflect" if ph < h and pw < w else "replicate"
        lead = x.shape[:-2]
        x4 = x.reshape(-1, 1, h, w)
        out = F.pad(x4, (0, pw, 0, ph), mode=mode)
        return out.reshape(*lead, h + ph, w + pw)
    widths = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
    mode = "reflect" if ph < h and pw < w else "edge"
    return np.pad(x, widths, mode=mode)


def decompose(x, levels: int, pad: bool = False) -> WaveletPyramid:
    """Apply :func:`dwt2_level` recursively to the LL band ``levels`` times.

    With ``pad=True`` the input is reflect-padded to a multiple of
    ``2**levels`` first and the original size is recorded so that
    :func:`reconstruct` crops back to it.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = x.shape[-2:]
    if pad:
        x = pad_to_multiple(x, 2**levels)
    ph, pw = x.shape[-2:]
    if ph >> levels == 0 or pw >> levels == 0:
        raise ValueError(f"{levels} levels would reduce a {ph}x{pw} input to nothing")
    if ph % (2**levels) or pw % (2**levels):
        raise ValueError(f"{ph}x{pw} is not divisible by 2**{levels}")
    pyramid = WaveletPyramid(original_size=(h, w))
    band = x
    for _ in range(levels):
        s = dwt2_level(band)
        pyramid.details.append((s.lh, s.hl, s.hh))
        band = s.ll
    pyramid.approx = band
    return pyramid


def reconstruct(p: WaveletPyramid):
    band = p.approx
    for lh, hl, hh in reversed(p.details):
        if tuple(lh.shape) != tuple(band.shape):
            raise ValueError(f"level shape {tuple(lh.shape)} does not match band {tuple(band.shape)}")
        band = idwt2_level(SubbandSet(band, lh, hl, hh))
    if p.original_size is not None:
        h, w = p.original_size
        band = band[..., :h, :w]
    return band
