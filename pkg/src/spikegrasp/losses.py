"""Multi-task detection loss and finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

OBJ_EPS = 1e-7
LOSS_KEYS = ("L_obj", "L_p", "L_v", "L_s", "L_w")


def smooth_l1(x: Tensor) -> Tensor:
    a = x.abs()
    return torch.where(a < 1, 0.5 * x * x, a - 0.5)


def masked_smooth_l1(pred: Tensor, target: Tensor, mask: Tensor | None = None) -> Tensor:
    """Mean smooth-L1 over masked entries; 0 for an empty mask."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and label {tuple(target.shape)} differ")
    target = target.to(pred.dtype)
    if mask is None:
        mask = torch.ones_like(pred, dtype=torch.bool)
    mask = torch.as_tensor(mask).to(torch.bool)
    if mask.dim() < pred.dim():
        # per-row masks broadcast over trailing axes
        mask = mask.reshape(*mask.shape, *([1] * (pred.dim() - mask.dim()))).expand_as(pred)
    if mask.shape != pred.shape:
        raise ValueError("mask does not match prediction shape")
    if not mask.any():
        return pred.sum() * 0.0
    return smooth_l1(pred[mask] - target[mask]).mean()


def objectness_loss(prob: Tensor, target: Tensor, eps: float = OBJ_EPS) -> Tensor:
    """Two-class cross-entropy on foreground probabilities, clamped to ``[eps, 1 - eps]``."""
    if prob.shape != target.shape:
        raise ValueError("objectness prediction and label differ in shape")
    p = prob.clamp(eps, 1 - eps)
    t = target.to(p.dtype)
    return -(t * torch.log(p) + (1 - t) * torch.log(1 - p)).mean()


@dataclass
class LossBreakdown:
    L_obj: Tensor
    L_p: Tensor
    L_v: Tensor
    L_s: Tensor
    L_w: Tensor
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 1.0

    @property
    def total(self) -> Tensor:
        return self.L_obj + self.alpha * (self.L_p + self.lam * self.L_v) + self.beta * (self.L_s + self.L_w)

    def as_floats(self) -> dict[str, float]:
        out = {k: float(getattr(self, k).detach()) for k in LOSS_KEYS}
        out["total"] = float(self.total.detach())
        return out


def multitask_loss(pred: dict, labels: dict, masks: dict | None = None, alpha: float = 1.0, beta: float = 1.0,
                   lam: float = 1.0) -> LossBreakdown:
    """Objectness cross-entropy plus masked smooth-L1 on graspness, view scores, grasp scores and widths.

    Keys of ``pred``/``labels``: ``objectness`` and ``graspness`` ``(H, W)``,
    ``views`` ``(M, V)``, ``scores`` and ``widths`` ``(M, A, D)``. Default
    masks: object pixels for graspness, all seeds for views and scores, and
    positive label scores for widths.
    """
    masks = dict(masks or {})
    obj_label = torch.as_tensor(labels["objectness"])
    masks.setdefault("graspness", obj_label > 0.5)
    score_label = torch.as_tensor(labels["scores"])
    masks.setdefault("widths", score_label > 0)
    terms = {
        "L_obj": objectness_loss(pred["objectness"], obj_label),
        "L_p": masked_smooth_l1(pred["graspness"], torch.as_tensor(labels["graspness"]), masks.get("graspness")),
        "L_v": masked_smooth_l1(pred["views"], torch.as_tensor(labels["views"]), masks.get("views")),
        "L_s": masked_smooth_l1(pred["scores"], score_label, masks.get("scores")),
        "L_w": masked_smooth_l1(pred["widths"], torch.as_tensor(labels["widths"]), masks.get("widths")),
    }
    return LossBreakdown(**terms, alpha=alpha, beta=beta, lam=lam)


def quarter_disparity_target(disparity_map: np.ndarray, objectness: np.ndarray,
                             min_fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Block-average full-resolution disparity over object pixels, in quarter-resolution pixels."""
    H, W = disparity_map.shape
    obj = (np.asarray(objectness) > 0.5).reshape(H // 4, 4, W // 4, 4)
    d = np.asarray(disparity_map).reshape(H // 4, 4, W // 4, 4)
    count = obj.sum(axis=(1, 3))
    total = (d * obj).sum(axis=(1, 3))
    valid = count >= min_fraction * 16
    target = np.where(valid, total / np.maximum(count, 1) / 4.0, 0.0)
    return target, valid


def disparity_loss(pred: Tensor, target, valid) -> Tensor:
    return masked_smooth_l1(pred, torch.as_tensor(target), torch.as_tensor(valid))


# ---------------------------------------------------------------- gradient check

def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)``."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(params: Sequence[Tensor], loss_fn: Callable[[], Tensor], eps: float = 1e-5, n_probes: int = 50,
               seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative error between autograd and central differences on random parameter entries.

    ``loss_fn`` must be a deterministic smooth function of ``params``
    (run the spiking layers in relaxed mode and in float64).
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    params = [p for p in params if p.requires_grad]
    for p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat = rng.choice(int(sizes.sum()), size=min(n_probes, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    with torch.no_grad():
        for f in np.sort(flat):
            k = int(np.searchsorted(offsets, f, side="right") - 1)
            p, idx = params[k], int(f - offsets[k])
            view = p.view(-1)
            orig = view[idx].item()
            view[idx] = orig + eps
            up = float(loss_fn())
            view[idx] = orig - eps
            down = float(loss_fn())
            view[idx] = orig
            numeric = (up - down) / (2 * eps)
            worst = max(worst, relative_error(float(grads[k].view(-1)[idx]), numeric, floor))
    return worst
