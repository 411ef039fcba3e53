"""Input checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .scene import LuminanceField, SceneDescription


def check_luminance_sequence(X) -> np.ndarray:
    """``(K, H, W)`` float64 array of finite, non-negative irradiance."""
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], LuminanceField):
        X = [f.values for f in X]
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or min(arr.shape) == 0:
        raise ValueError(f"expected a (K, H, W) luminance sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("luminance must be finite and non-negative")
    return arr


def check_scenes(scenes) -> list[SceneDescription]:
    if isinstance(scenes, SceneDescription):
        scenes = [scenes]
    scenes = list(scenes)
    if not scenes:
        raise ValueError("need at least one scene")
    for s in scenes:
        if not isinstance(s, SceneDescription):
            raise TypeError(f"expected SceneDescription, got {type(s).__name__}")
        if not s.objects:
            raise ValueError("scene contains no objects")
    return scenes


def check_fitted(estimator, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
