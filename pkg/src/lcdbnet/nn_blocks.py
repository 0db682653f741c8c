"""Differentiable building blocks shared by the three sub-networks."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def conv3x3(cin: int, cout: int, stride: int = 1, bias: bool = True) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=bias)


def reduced_width(channels: int, reduction: int, floor: int = 4) -> int:
    """Hidden width of a squeeze-excitation MLP: ``C // r``, never below ``floor``."""
    if channels >= reduction and channels % reduction:
        raise ValueError(f"{channels} channels not divisible by reduction {reduction}")
    return max(channels // reduction, min(floor, channels))


class ChannelAttention(nn.Module):
    """Squeeze-excitation gate: pool, C -> C/r -> C, sigmoid, rescale channels."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = reduced_width(channels, reduction)
        self.squeeze = nn.Conv2d(channels, hidden, 1)
        self.excite = nn.Conv2d(hidden, channels, 1)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        s = x.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.excite(F.relu(self.squeeze(s))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)


class SpatialAttention(nn.Module):
    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)


class DACB(nn.Module):
    """Double attention convolution block: (spatial + channel attention) -> conv3x3."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.spatial = SpatialAttention()
        self.channel = ChannelAttention(channels, reduction)
        self.fuse = conv3x3(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fuse(self.spatial(x) + self.channel(x))


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """``(N, H, W, C)`` -> ``(N * nW, window * window, C)``."""
    n, h, w, c = x.shape
    x = x.view(n, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def window_merge(windows: torch.Tensor, window: int, n: int, h: int, w: int) -> torch.Tensor:
    c = windows.shape[-1]
    x = windows.view(n, h // window, w // window, window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(n, h, w, c)


def shifted_window_mask(h: int, w: int, window: int, shift: int) -> torch.Tensor:
    """Boolean ``(nW, N, N)`` mask, True where two tokens of a shifted window
    came from different regions of the unrolled image and must not attend."""
    region = torch.zeros(h, w, dtype=torch.long)
    bounds = ((0, -window), (-window, -shift), (-shift, None))
    label = 0
    for hs in bounds:
        for ws in bounds:
            region[slice(*hs), slice(*ws)] = label
            label += 1
    ids = window_partition(region.view(1, h, w, 1), window).squeeze(-1)
    return ids[:, :, None] != ids[:, None, :]


class WindowAttention(nn.Module):
    def __init__(self, dim: int, window: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.window, self.heads = dim, window, heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.position_bias = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        for layer in (self.qkv, self.proj):
            nn.init.trunc_normal_(layer.weight, std=0.02)
            nn.init.zeros_(layer.bias)
        nn.init.trunc_normal_(self.position_bias, std=0.02)
        self.last_attention: torch.Tensor | None = None

    def _bias(self, window: int) -> torch.Tensor:
        coords = torch.stack(
            torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij")
        ).flatten(1)
        rel = coords[:, :, None] - coords[:, None, :] + (self.window - 1)
        index = rel[0] * (2 * self.window - 1) + rel[1]
        return self.position_bias[index].permute(2, 0, 1)  # heads, N, N

    def forward(self, tokens: torch.Tensor, window: int, mask: torch.Tensor | None = None,
                keep_attention: bool = False) -> torch.Tensor:
        b, n, c = tokens.shape
        qkv = self.qkv(tokens).view(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1) + self._bias(window).unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(b // nw, nw, self.heads, n, n)
            attn = attn.masked_fill(mask[None, :, None], float("-inf")).view(b, self.heads, n, n)
        attn = attn.softmax(dim=-1)
        if keep_attention:
            self.last_attention = attn.detach()
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class WindowTransformerBlock(nn.Module):
    """Swin-style block on ``(N, C, H, W)`` maps: windowed MHSA + MLP, both residual."""

    def __init__(self, dim: int, heads: int, window: int = 8, shift: int = 0, mlp_ratio: int = 4):
        super().__init__()
        if not 0 <= shift < window:
            raise ValueError("shift must lie in [0, window)")
        self.window, self.shift = window, shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio * dim), nn.GELU(), nn.Linear(mlp_ratio * dim, dim))
        for layer in (self.mlp[0], self.mlp[2]):
            nn.init.trunc_normal_(layer.weight, std=0.02)
            nn.init.zeros_(layer.bias)
        self.keep_attention = False

    def effective_window(self, h: int, w: int) -> tuple[int, int]:
        if min(h, w) <= self.window:
            return min(h, w), 0
        return self.window, self.shift

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        window, shift = self.effective_window(h, w)
        t = x.permute(0, 2, 3, 1)
        shortcut = t
        t = self.norm1(t)
        ph, pw = (-h) % window, (-w) % window
        if ph or pw:
            t = F.pad(t, (0, 0, 0, pw, 0, ph))
        hp, wp = h + ph, w + pw
        mask = None
        if shift:
            t = torch.roll(t, shifts=(-shift, -shift), dims=(1, 2))
            mask = shifted_window_mask(hp, wp, window, shift).to(x.device)
        out = self.attn(window_partition(t, window), window, mask, keep_attention=self.keep_attention)
        t = window_merge(out, window, n, hp, wp)
        if shift:
            t = torch.roll(t, shifts=(shift, shift), dims=(1, 2))
        t = shortcut + t[:, :h, :w]
        t = t + self.mlp(self.norm2(t))
        return t.permute(0, 3, 1, 2).contiguous()


class GLAB(nn.Module):
    """Global/local aggregation: transformer and DACB branches, concatenated,
    channel-attended and projected back to the input width.

    The transformer branch holds one window block per entry of ``shifts``.
    """

    def __init__(self, channels: int, heads: int, window: int = 8, shifts=(0,),
                 reduction: int = 16, use_swin: bool = True, use_dacb: bool = True):
        super().__init__()
        if not (use_swin or use_dacb):
            raise ValueError("GLAB needs at least one branch")
        self.swin = None
        if use_swin:
            self.swin = nn.Sequential(*[WindowTransformerBlock(channels, heads, window, s) for s in shifts])
        self.dacb = DACB(channels, reduction) if use_dacb else None
        width = channels * (int(use_swin) + int(use_dacb))
        self.aggregate = ChannelAttention(width, reduction)
        self.project = nn.Conv2d(width, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        parts = [m(x) for m in (self.swin, self.dacb) if m is not None]
        return self.project(self.aggregate(torch.cat(parts, dim=1)))


class RCAB(nn.Module):
    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.conv1 = conv3x3(channels, channels)
        self.conv2 = conv3x3(channels, channels)
        self.attention = ChannelAttention(channels, reduction)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.attention(self.conv2(F.relu(self.conv1(x))))


class SupervisionModule(nn.Module):
    """Predicts an intermediate image and gates the features with it.

    ``refined = f * sigmoid(conv(intermediate)) + conv(x_in)``; the last
    term re-injects the branch input so detail filtered out upstream can
    reach the fusion stage.
    """

    def __init__(self, channels: int, image_channels: int):
        super().__init__()
        self.to_image = conv3x3(channels, image_channels)
        self.to_gate = conv3x3(image_channels, channels)
        self.from_input = conv3x3(image_channels, channels)
        nn.init.zeros_(self.to_image.weight)
        nn.init.zeros_(self.to_image.bias)

    def forward(self, f: torch.Tensor, x_in: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if f.shape[-2:] != x_in.shape[-2:]:
            raise ValueError(f"features {tuple(f.shape)} and input {tuple(x_in.shape)} are not aligned")
        intermediate = self.to_image(f) + x_in
        gate = torch.sigmoid(self.to_gate(intermediate))
        refined = f * gate + self.from_input(x_in)
        return intermediate, refined
