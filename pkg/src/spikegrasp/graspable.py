"""Per-pixel objectness/graspness decoding and seed selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .pathway import ShapeError, seeded_init_


class EmptySeedError(ValueError):
    """No pixel passed the objectness threshold."""


@dataclass(frozen=True)
class GraspableMaps:
    objectness: np.ndarray
    graspness: np.ndarray

    def __post_init__(self):
        for name in ("objectness", "graspness"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2:
                raise ShapeError(f"{name} map must be 2-D")
            if not np.all((m >= 0) & (m <= 1)):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            object.__setattr__(self, name, m)
        if self.objectness.shape != self.graspness.shape:
            raise ShapeError("objectness and graspness maps differ in shape")


def _double_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(),
                         nn.Conv2d(cout, cout, 3, padding=1), nn.ReLU())


class GraspableDecoder(nn.Module):
    """Encoder-decoder with skip connections from a 1/4-scale field to full-resolution maps.

    Also carries a 1x1 view-score head on the same field (``n_views`` sigmoid channels).
    """

    def __init__(self, in_channels: int, channels=(16, 24, 32), n_views: int = 60, upsample: int = 4,
                 init_seed: int = 0):
        super().__init__()
        c1, c2, c3 = channels
        self.in_channels = in_channels
        self.upsample = upsample
        self.enc1 = _double_conv(in_channels, c1)
        self.enc2 = _double_conv(c1, c2)
        self.enc3 = _double_conv(c2, c3)
        self.dec2 = nn.Sequential(nn.Conv2d(c3 + c2, c2, 3, padding=1), nn.ReLU())
        self.dec1 = nn.Sequential(nn.Conv2d(c2 + c1, c1, 3, padding=1), nn.ReLU())
        self.head = nn.Conv2d(c1, 2, 1)
        self.view_head = nn.Conv2d(in_channels, n_views, 1)
        seeded_init_(self, torch.Generator().manual_seed(init_seed))

    def logits(self, h: Tensor) -> Tensor:
        """Pre-sigmoid ``(2, H, W)`` full-resolution map logits for a ``(C, H/4, W/4)`` field."""
        if h.dim() != 3 or h.shape[0] != self.in_channels:
            raise ShapeError(f"expected a ({self.in_channels}, H, W) field, got {tuple(h.shape)}")
        if h.shape[-2] % 4 or h.shape[-1] % 4:
            raise ShapeError("field size must be divisible by 4")
        x = h[None]
        e1 = self.enc1(x)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        e3 = self.enc3(F.max_pool2d(e2, 2))
        d2 = self.dec2(torch.cat([F.interpolate(e3, size=e2.shape[-2:], mode="bilinear", align_corners=False),
                                  e2], dim=1))
        d1 = self.dec1(torch.cat([F.interpolate(d2, size=e1.shape[-2:], mode="bilinear", align_corners=False),
                                  e1], dim=1))
        full = F.interpolate(d1, scale_factor=self.upsample, mode="bilinear", align_corners=False)
        return self.head(full)[0]

    def forward(self, h: Tensor) -> Tensor:
        return torch.sigmoid(self.logits(h))

    def view_scores(self, h: Tensor) -> Tensor:
        return torch.sigmoid(self.view_head(h[None]))[0]


def predict_maps(h_final, decoder: GraspableDecoder) -> GraspableMaps:
    h = h_final.h if hasattr(h_final, "h") else torch.as_tensor(np.asarray(h_final))
    with torch.no_grad():
        m = decoder(h.to(next(decoder.parameters()).dtype)).double().numpy()
    return GraspableMaps(m[0], m[1])


@dataclass(frozen=True)
class Seed:
    row: int
    col: int
    view: int
    point: np.ndarray  # camera frame


@dataclass(frozen=True)
class SeedSet:
    seeds: tuple[Seed, ...]

    def __len__(self):
        return len(self.seeds)

    @property
    def pixels(self) -> np.ndarray:
        return np.array([(s.row, s.col) for s in self.seeds], dtype=np.int64).reshape(-1, 2)

    @property
    def views(self) -> np.ndarray:
        return np.array([s.view for s in self.seeds], dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return np.array([s.point for s in self.seeds], dtype=np.float64).reshape(-1, 3)


def rank_pixels(objectness: np.ndarray, graspness: np.ndarray, obj_thresh: float, top_m: int) -> np.ndarray:
    """Flat indices of the ``top_m`` best-graspness pixels above the objectness threshold.

    Ties keep row-major order.
    """
    flat_idx = np.flatnonzero(np.asarray(objectness).ravel() > obj_thresh)
    if flat_idx.size == 0:
        raise EmptySeedError(f"no pixel has objectness above {obj_thresh}")
    g = np.asarray(graspness).ravel()[flat_idx]
    order = np.argsort(-g, kind="stable")
    return flat_idx[order[:top_m]]


def select_seeds(maps: GraspableMaps, depth_proxy: np.ndarray, obj_thresh: float = 0.5, top_m: int = 64,
                 view_scores: np.ndarray | None = None, n_views: int = 60) -> SeedSet:
    """Seed pixels, their best approach view and 3D point.

    ``depth_proxy`` is an ``(H, W, 3)`` array of camera-frame points;
    ``view_scores`` is ``(V, H, W)``. Without view scores every seed gets view 0.
    """
    if not 0 < obj_thresh < 1:
        raise ValueError("obj_thresh must lie in (0, 1)")
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    H, W = maps.objectness.shape
    depth_proxy = np.asarray(depth_proxy, dtype=np.float64)
    if depth_proxy.shape != (H, W, 3):
        raise ShapeError(f"depth proxy must be ({H}, {W}, 3)")
    if view_scores is not None:
        view_scores = np.asarray(view_scores)
        if view_scores.shape != (n_views, H, W):
            raise ShapeError(f"view scores must be ({n_views}, {H}, {W})")
    picked = rank_pixels(maps.objectness, maps.graspness, obj_thresh, top_m)
    seeds = []
    for idx in picked:
        r, c = divmod(int(idx), W)
        view = int(np.argmax(view_scores[:, r, c])) if view_scores is not None else 0
        seeds.append(Seed(r, c, view, depth_proxy[r, c].copy()))
    return SeedSet(tuple(seeds))
