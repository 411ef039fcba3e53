"""Stereo feature extraction and the all-pairs correlation pyramid."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .spikecam import SpikeStream


class ShapeError(ValueError):
    pass


def seeded_init_(module: nn.Module, generator: torch.Generator) -> None:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every conv/linear weight and bias."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.rand(m.weight.shape, generator=generator, dtype=m.weight.dtype) * 2 * bound
                               - bound)
                if m.bias is not None:
                    m.bias.copy_(torch.rand(m.bias.shape, generator=generator, dtype=m.bias.dtype) * 2 * bound
                                 - bound)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        y = F.relu(self.conv1(x))
        return F.relu(x + self.conv2(y))


class FeatureExtractor(nn.Module):
    """Convolution stack producing features at 1/4, 1/8 and 1/16 resolution.

    A 7x7 stride-2 entry layer, residual refinement at half resolution, a
    stride-2 downsampler to 1/4 and two stride-2 heads for the coarser scales.
    """

    def __init__(self, in_channels: int, channels: int = 16, stem_channels: int = 16,
                 n_blocks: int = 1, init_seed: int = 0):
        super().__init__()
        self.in_channels = in_channels
        self.init_seed = init_seed
        self.entry = nn.Conv2d(in_channels, stem_channels, 7, stride=2, padding=3)
        self.blocks = nn.Sequential(*[ResidualBlock(stem_channels) for _ in range(n_blocks)])
        self.down = nn.Conv2d(stem_channels, channels, 3, stride=2, padding=1)
        self.head8 = nn.Conv2d(channels, channels, 3, stride=2, padding=1)
        self.head16 = nn.Conv2d(channels, channels, 3, stride=2, padding=1)
        seeded_init_(self, torch.Generator().manual_seed(init_seed))

    def forward(self, x: Tensor) -> dict[int, Tensor]:
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if x.shape[-2] % 16 or x.shape[-1] % 16:
            raise ShapeError(f"spatial size {tuple(x.shape[-2:])} is not divisible by 16")
        y = self.blocks(F.relu(self.entry(x)))
        f4 = F.relu(self.down(y))
        f8 = F.relu(self.head8(f4))
        f16 = F.relu(self.head16(f8))
        return {4: f4[0], 8: f8[0], 16: f16[0]}


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, SpikeStream):
        x = x.frames
    if isinstance(x, Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype or torch.float64)


def extract_features(substream, weights: FeatureExtractor) -> dict[int, Tensor]:
    """Feature pyramid ``{4: f4, 8: f8, 16: f16}`` for a spike stream or ``(C, H, W)`` array."""
    x = _as_tensor(substream, dtype=next(weights.parameters()).dtype)
    if x.shape[-3] != weights.in_channels:
        raise ShapeError(f"expected {weights.in_channels} input channels, got {x.shape[-3]}")
    return weights(x)


def correlate(f_l, f_r) -> Tensor:
    """All-pairs correlation ``C[i, j, k] = sum_h f_l[h, i, j] * f_r[h, i, k]``."""
    f_l, f_r = _as_tensor(f_l), _as_tensor(f_r)
    if f_l.shape != f_r.shape or f_l.dim() != 3:
        raise ShapeError(f"feature shapes differ: {tuple(f_l.shape)} vs {tuple(f_r.shape)}")
    return torch.einsum("hij,hik->ijk", f_l, f_r)


def build_pyramid(volume, levels: int = 4) -> list[Tensor]:
    """Repeated kernel-2 stride-2 average pooling along the last (matching) axis."""
    volume = _as_tensor(volume)
    if volume.shape[-1] < 2 ** (levels - 1):
        raise ShapeError(f"last dimension {volume.shape[-1]} too small for {levels} levels")
    pyramid = [volume]
    for _ in range(levels - 1):
        v = pyramid[-1]
        n = v.shape[-1] // 2 * 2
        pyramid.append(0.5 * (v[..., 0:n:2] + v[..., 1:n:2]))
    return pyramid


def lookup(pyramid: list[Tensor], index, radius: int) -> Tensor:
    """Sample ``2 * radius + 1`` linearly interpolated values per level around ``index``.

    ``index`` is an ``(H', W')`` field of fractional positions along the
    matching axis of level 1; level ``l`` uses ``index / 2**(l-1)``. Samples
    outside the volume clamp to the border. Output: ``(levels * (2r+1), H', W')``.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    index = _as_tensor(index, dtype=pyramid[0].dtype)
    offsets = torch.arange(-radius, radius + 1, dtype=index.dtype)
    out = []
    for lvl, vol in enumerate(pyramid):
        n = vol.shape[-1]
        pos = (index / 2**lvl)[..., None] + offsets  # (H', W', 2r+1)
        pos = pos.clamp(0, n - 1)
        i0 = pos.detach().floor().clamp(max=n - 1).long()
        i1 = (i0 + 1).clamp(max=n - 1)
        w = pos - i0.to(pos.dtype)
        v0 = torch.gather(vol, -1, i0)
        v1 = torch.gather(vol, -1, i1)
        out.append(v0 * (1 - w) + v1 * w)
    return torch.cat(out, dim=-1).permute(2, 0, 1)


def soft_argmax_disparity(volume: Tensor, scale: float = 1.0) -> Tensor:
    """Expected disparity ``j - k`` under a softmax over the matching axis.

    Only matches with ``k <= j`` (non-negative disparity) take part. The
    result is differentiable in the volume and lives in level-1 units.
    """
    Wd = volume.shape[-1]
    j = torch.arange(Wd)
    disp = (j[:, None] - j[None, :]).to(volume.dtype)  # (j, k)
    logits = (volume * scale).masked_fill(disp[None] < 0, float("-inf"))
    p = torch.softmax(logits, dim=-1)
    return (p * disp.clamp(min=0)[None]).sum(-1)
