"""6-DoF grasp parameterization, cylinder crops, the set encoder and grasp selection.

Grasp frame convention: column 0 of ``R`` is the approach direction, column 1
the jaw closing axis, column 2 their cross product. The jaw midpoint sits at
``seed + depth * approach``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .pathway import ShapeError, seeded_init_
from .scene import fibonacci_sphere


class FrictionDomainError(ValueError):
    pass


class EmptyRegionError(ValueError):
    pass


@dataclass(frozen=True)
class GraspPose:
    rotation: np.ndarray
    translation: np.ndarray
    width: float
    score: float

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def approach(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def closing_axis(self) -> np.ndarray:
        return self.rotation[:, 1]

    def check(self, w_max: float, tol: float = 1e-6) -> None:
        R = self.rotation
        if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1) > tol:
            raise ValueError("rotation is not a proper orthonormal matrix")
        if not 0 <= self.width <= w_max + tol:
            raise ValueError(f"width {self.width} outside [0, {w_max}]")
        if not 0 <= self.score <= 1:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if not np.all(np.isfinite(self.translation)):
            raise ValueError("translation must be finite")

    def to_row(self) -> list[float]:
        return [*self.rotation.ravel(), *self.translation, self.width, self.score]

    @classmethod
    def from_row(cls, row) -> "GraspPose":
        row = [float(v) for v in row]
        if len(row) != 14:
            raise ValueError("a grasp record has 14 numbers")
        return cls(np.reshape(row[:9], (3, 3)), row[9:12], row[12], row[13])


@dataclass(frozen=True)
class GraspParam:
    view: int
    angle_index: int
    depth_index: int
    width: float
    score: float


def approach_views(n_views: int) -> np.ndarray:
    """Unit approach vectors spread over the sphere (camera frame), ``(V, 3)``."""
    return fibonacci_sphere(n_views)


def view_rotation(approach) -> np.ndarray:
    """Frame with ``x = approach`` and the closing axis horizontal in the camera's x-y plane."""
    x = np.asarray(approach, dtype=np.float64)
    x = x / np.linalg.norm(x)
    y = np.array([-x[1], x[0], 0.0])
    if np.linalg.norm(y) < 1e-12:
        y = np.array([0.0, 1.0, 0.0])
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=1)


def axis_rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_from_params(view: int, angle: float, views: np.ndarray) -> np.ndarray:
    """``R_view(view) @ R_x(angle)``: in-plane rotation about the approach axis."""
    if not 0 <= view < len(views):
        raise IndexError(f"view index {view} outside [0, {len(views)})")
    return view_rotation(views[view]) @ axis_rotation_x(angle)


def angle_bins(n_angles: int) -> np.ndarray:
    return np.arange(n_angles) * math.pi / n_angles


def cylinder_members(p, rotation, points, d: float, r: float) -> np.ndarray:
    """Indices of ``points`` inside the cylinder of height ``d`` (centered on ``p``) and radius ``r``."""
    c = (np.asarray(points, dtype=np.float64) - np.asarray(p, dtype=np.float64)) @ np.asarray(rotation)
    slack = 1 + 1e-9  # keep points exactly on the boundary despite rounding
    inside = (np.abs(c[:, 0]) <= d / 2 * slack) & (c[:, 1] ** 2 + c[:, 2] ** 2 <= r**2 * slack)
    return np.flatnonzero(inside)


def crop_cylinder(p, rotation, points, features, d: float, r: float, k: int) -> Tensor:
    """``(k, 3 + C)`` candidate tensor: canonical coordinates divided by ``r`` and features.

    Keeps the ``k`` samples nearest to ``p``; repeats the nearest one when
    fewer are inside. Membership and ordering carry no gradient; coordinates
    and features do.
    """
    if d <= 0 or r <= 0:
        raise ValueError("cylinder height and radius must be positive")
    pts = torch.as_tensor(points)
    dtype = pts.dtype if pts.is_floating_point() else torch.float64
    pts = pts.to(dtype)
    feats = torch.as_tensor(features).to(dtype)
    p_t = torch.as_tensor(p).to(dtype)
    R = torch.as_tensor(np.asarray(rotation, dtype=np.float64)).to(dtype)
    if pts.dim() != 2 or pts.shape[1] != 3 or feats.shape[0] != pts.shape[0]:
        raise ShapeError("need (N, 3) points and (N, C) features")
    with torch.no_grad():
        idx = cylinder_members(p_t.detach().double().numpy(), R.double().numpy(),
                               pts.detach().double().numpy(), d, r)
        if idx.size == 0:
            raise EmptyRegionError("no sample inside the cylinder")
        dist = np.linalg.norm(pts.detach().double().numpy()[idx] - p_t.detach().double().numpy(), axis=1)
        idx = idx[np.argsort(dist, kind="stable")][:k]
        if idx.size < k:
            idx = np.concatenate([idx, np.full(k - idx.size, idx[0])])
    sel = torch.as_tensor(idx, dtype=torch.long)
    coords = (pts[sel] - p_t) @ R / r
    return torch.cat([coords, feats[sel]], dim=1)


class SetEncoder(nn.Module):
    """Shared per-sample MLP followed by a max over samples."""

    def __init__(self, in_features: int, width: int = 32, init_seed: int = 0):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(in_features, width), nn.ReLU(), nn.Linear(width, width), nn.ReLU())
        self.out_features = width
        seeded_init_(self, torch.Generator().manual_seed(init_seed))

    def forward(self, candidates: Tensor) -> Tensor:
        # (..., K, 3 + C) -> (..., width)
        return self.mlp(candidates).amax(dim=-2)


def encode_candidates(tensor, encoder: SetEncoder) -> Tensor:
    return encoder(torch.as_tensor(tensor).to(next(encoder.parameters()).dtype))


class GraspHead(nn.Module):
    def __init__(self, in_features: int, n_angles: int, n_depths: int, init_seed: int = 0):
        super().__init__()
        self.n_angles = n_angles
        self.n_depths = n_depths
        self.linear = nn.Linear(in_features, n_angles * n_depths * 2)
        seeded_init_(self, torch.Generator().manual_seed(init_seed))

    def forward(self, features: Tensor) -> tuple[Tensor, Tensor]:
        out = self.linear(features).reshape(*features.shape[:-1], self.n_angles, self.n_depths, 2)
        return out[..., 0], out[..., 1]


def predict_grasps(features: Tensor, head: GraspHead, w_max: float) -> tuple[Tensor, Tensor]:
    """Per-seed ``(A, D)`` score and width grids; widths clamped to ``[0, w_max]``."""
    if head.n_angles < 1 or head.n_depths < 1:
        raise ValueError("A and D must be >= 1")
    scores, widths = head(features)
    return scores, widths.clamp(0.0, w_max)


def select_best(scores, widths, seed_points, seed_views, views: np.ndarray, depths,
                w_max: float) -> list[GraspPose]:
    """Best ``(angle, depth)`` cell per seed, composed into poses sorted by score (stable)."""
    scores = np.asarray(scores, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    if scores.ndim != 3 or scores.shape[0] == 0:
        raise ShapeError("need a nonempty (M, A, D) score grid")
    M, A, D = scores.shape
    if len(depths) != D:
        raise ShapeError("depth bins do not match the grid")
    angles = angle_bins(A)
    grasps = []
    for m in range(M):
        flat = int(np.argmax(scores[m].ravel()))  # first maximum wins ties
        a, dd = divmod(flat, D)
        R = rotation_from_params(int(seed_views[m]), float(angles[a]), views)
        t = np.asarray(seed_points[m], dtype=np.float64) + depths[dd] * R[:, 0]
        grasps.append(GraspPose(R, t, float(np.clip(widths[m, a, dd], 0, w_max)),
                                float(np.clip(scores[m, a, dd], 0.0, 1.0))))
    order = sorted(range(M), key=lambda i: -grasps[i].score)
    return [grasps[i] for i in order]


def score_from_friction(u, u_min: float = 0.2, u_max: float = 1.2, positive=True):
    """Logarithmic quality: 1 at ``u_min``, 0 at ``u_max``, 0 for non-positive grasps."""
    if not 0 < u_min < u_max:
        raise ValueError("need 0 < u_min < u_max")
    u = np.asarray(u, dtype=np.float64)
    positive = np.broadcast_to(np.asarray(positive, dtype=bool), u.shape)
    if np.any(positive & ((u < u_min) | (u > u_max) | ~np.isfinite(u))):
        raise FrictionDomainError(f"friction coefficient outside [{u_min}, {u_max}] for a positive grasp")
    safe = np.where(positive, u, u_max)
    # difference of logs keeps the geometric midpoint at exactly 0.5
    log_max = np.log(u_max)
    q = np.where(positive, (log_max - np.log(safe)) / (log_max - np.log(u_min)), 0.0)
    return float(q) if q.ndim == 0 else q
