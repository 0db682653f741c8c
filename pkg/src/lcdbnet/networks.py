"""LAN, CRN and FN sub-networks and the composed LCDBNet model."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from . import wavelet
from .colorspace import rgb_to_unit_ycc_tensor, unit_ycc_to_rgb_tensor
from .config import NetworkConfig
from .nn_blocks import GLAB, RCAB, SupervisionModule, conv3x3


def _heads(channels: int, divisor: int) -> int:
    return max(1, channels // divisor)


def make_glab(channels: int, cfg: NetworkConfig, index: int) -> GLAB:
    """GLAB number ``index`` in network order; window shifts alternate over
    the sequence of transformer blocks, so each GLAB with ``swin_depth=2``
    holds an unshifted and a shifted block."""
    depth = cfg.swin_depth
    shifts = [cfg.window // 2 if (index * depth + j) % 2 else 0 for j in range(depth)]
    return GLAB(
        channels,
        _heads(channels, cfg.heads_divisor),
        window=cfg.window,
        shifts=shifts,
        reduction=cfg.reduction,
        use_swin=not cfg.has("no_swin"),
        use_dacb=not cfg.has("no_dacb"),
    )


class LAN(nn.Module):
    """U-shaped luminance network built from GLABs with additive skips."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        c, stages = cfg.base_channels_lan, cfg.lan_stages
        self.stages = stages
        self.stem = conv3x3(1, c)
        self.encoders = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i in range(stages):
            width = c * 2**i
            self.encoders.append(make_glab(width, cfg, i))
            self.downs.append(nn.Conv2d(width, 2 * width, 4, stride=2, padding=1))
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for i in reversed(range(stages)):
            width = c * 2**i
            self.ups.append(nn.ConvTranspose2d(2 * width, width, 2, stride=2))
            self.decoders.append(make_glab(width, cfg, 2 * stages - 1 - i))
        self.sm = SupervisionModule(c, 1)

    @property
    def multiple(self) -> int:
        return 2**self.stages

    def forward(self, y: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.stem(y)
        skips = []
        for enc, down in zip(self.encoders, self.downs):
            x = enc(x)
            skips.append(x)
            x = down(x)
        self.bottleneck_shape = tuple(x.shape)
        for up, dec, skip in zip(self.ups, self.decoders, reversed(skips)):
            x = dec(up(x) + skip)
        pred, refined = self.sm(x, y)
        return refined, pred


class CRN(nn.Module):
    """Chrominance network: per-level Haar subbands -> RCABs -> IWT ladder -> fusion."""

    def __init__(self, cfg: NetworkConfig, in_channels: int = 2):
        super().__init__()
        c, levels = cfg.base_channels_crn, cfg.crn_wavelet_levels
        self.levels = levels
        self.lifts = nn.ModuleList()
        self.bodies = nn.ModuleList()
        self.ladders = nn.ModuleList()
        for k in range(levels):
            self.lifts.append(nn.Conv2d(4 * in_channels, c, 1))
            self.bodies.append(nn.Sequential(*[RCAB(c, cfg.reduction) for _ in range(cfg.rcabs_per_level)]))
            self.ladders.append(nn.ModuleList([nn.Conv2d(c, 4 * c, 1) for _ in range(k + 1)]))
        self.fusion = RCAB(levels * c, cfg.reduction)
        self.project = nn.Conv2d(levels * c, c, 1)
        self.sm = SupervisionModule(c, in_channels)

    @property
    def multiple(self) -> int:
        return 2**self.levels

    @staticmethod
    def _iwt(feat: torch.Tensor) -> torch.Tensor:
        return wavelet.idwt2_level(wavelet.SubbandSet(*feat.chunk(4, dim=1)))

    def forward(self, cbcr: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        band = cbcr
        features = []
        for lift, body, ladder in zip(self.lifts, self.bodies, self.ladders):
            s = wavelet.dwt2_level(band)
            band = s.ll
            f = body(lift(torch.cat(list(s), dim=1)))
            for step in ladder:
                f = self._iwt(step(f))
            features.append(f)
        fused = self.project(self.fusion(torch.cat(features, dim=1)))
        pred, refined = self.sm(fused, cbcr)
        return refined, pred


class FusionNetwork(nn.Module):
    """Conv+ReLU layers at constant width, then a conv to 3 channels added to the input."""

    def __init__(self, channels: int = 96, layers: int = 5, out_channels: int = 3):
        super().__init__()
        body = []
        for _ in range(layers):
            body += [conv3x3(channels, channels), nn.ReLU()]
        self.body = nn.Sequential(*body)
        self.head = conv3x3(channels, out_channels)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def layer_table(self) -> list[tuple[str, int, int]]:
        """(deployment, kernel size, output channels) per layer."""
        rows = []
        mods = list(self.body)
        for conv, act in zip(mods[0::2], mods[1::2]):
            rows.append(("Conv+ReLU", conv.kernel_size[0], conv.out_channels))
        rows.append(("Conv", self.head.kernel_size[0], self.head.out_channels))
        return rows

    def forward(self, f_lum: torch.Tensor, f_chrom: torch.Tensor, input_ycc: torch.Tensor) -> torch.Tensor:
        if f_lum.shape[-2:] != f_chrom.shape[-2:]:
            raise ValueError("branch features differ in spatial size")
        x = torch.cat([f_lum, f_chrom], dim=1)
        if x.shape[1] != self.body[0].in_channels:
            raise ValueError(f"expected {self.body[0].in_channels} fused channels, got {x.shape[1]}")
        return self.head(self.body(x)) + input_ycc


@dataclass
class ModelOutputs:
    enhanced_ycc: torch.Tensor
    sm_lum: torch.Tensor | None
    sm_chrom: torch.Tensor | None


@dataclass
class EnhanceResult:
    rgb: torch.Tensor
    outputs: ModelOutputs


class LCDBNet(nn.Module):
    """Full enhancement model working on ``(N, 3, H, W)`` RGB batches in [0, 1].

    Ablations replace a removed branch by a 1x1 lift of its raw input
    planes (``no_lan``/``no_crn``) or bypass fusion by stacking the
    intermediate branch predictions (``no_fn``).
    """

    def __init__(self, cfg: NetworkConfig | None = None):
        super().__init__()
        cfg = (cfg or NetworkConfig()).validate()
        self.config = cfg
        self.lan = None if cfg.has("no_lan") else LAN(cfg)
        self.crn = None if cfg.has("no_crn") else CRN(cfg)
        self.lum_lift = nn.Conv2d(1, cfg.base_channels_lan, 1) if cfg.has("no_lan") and not cfg.has("no_fn") else None
        self.chrom_lift = nn.Conv2d(2, cfg.base_channels_crn, 1) if cfg.has("no_crn") and not cfg.has("no_fn") else None
        self.fn = None if cfg.has("no_fn") else FusionNetwork(cfg.fn_channels, cfg.fn_conv_layers)

    @property
    def multiple(self) -> int:
        m = 1
        for branch in (self.lan, self.crn):
            if branch is not None:
                m = max(m, branch.multiple)
        return m

    def forward_ycc(self, ycc: torch.Tensor) -> ModelOutputs:
        """Run on a unit-normalized YCbCr batch whose size divides :attr:`multiple`."""
        y, cbcr = ycc[:, :1], ycc[:, 1:]
        if self.lan is not None:
            f_lum, sm_lum = self.lan(y)
        else:
            f_lum, sm_lum = (self.lum_lift(y) if self.lum_lift is not None else None), None
        if self.crn is not None:
            f_chrom, sm_chrom = self.crn(cbcr)
        else:
            f_chrom, sm_chrom = (self.chrom_lift(cbcr) if self.chrom_lift is not None else None), None
        if self.fn is not None:
            enhanced = self.fn(f_lum, f_chrom, ycc)
        else:
            enhanced = torch.cat([sm_lum if sm_lum is not None else y,
                                  sm_chrom if sm_chrom is not None else cbcr], dim=1)
        return ModelOutputs(enhanced, sm_lum, sm_chrom)

    def forward(self, rgb: torch.Tensor) -> EnhanceResult:
        if rgb.ndim != 4 or rgb.shape[1] != 3:
            raise ValueError(f"expected an (N, 3, H, W) batch, got {tuple(rgb.shape)}")
        h, w = rgb.shape[-2:]
        ycc = rgb_to_unit_ycc_tensor(rgb)
        padded = wavelet.pad_to_multiple(ycc, self.multiple)
        out = self.forward_ycc(padded)
        crop = lambda t: None if t is None else t[..., :h, :w]  # noqa: E731
        outputs = ModelOutputs(crop(out.enhanced_ycc), crop(out.sm_lum), crop(out.sm_chrom))
        return EnhanceResult(unit_ycc_to_rgb_tensor(outputs.enhanced_ycc), outputs)


def count_parameters(params) -> int:
    """Total element count of a module's parameters or of a name -> array mapping."""
    if isinstance(params, nn.Module):
        return sum(p.numel() for p in params.parameters())
    return int(sum(int(getattr(v, "numel", lambda: v.size)()) for v in dict(params).values()))
