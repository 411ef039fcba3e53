"""Integrate-and-fire spike camera simulation, windowing and TFP playback.

Each pixel integrates irradiance held constant over a readout interval and
emits one spike (subtracting the threshold) once its accumulator reaches the
threshold. Streams are stored bit-packed, frame-major and row-major with the
most significant bit first.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .scene import LuminanceField

MAGIC = b"SPKG"
SPK_VERSION = 1
_HEADER = struct.Struct("<4sHIIIddd")


class SpikeCamError(ValueError):
    pass


class SaturationError(SpikeCamError):
    """Irradiance too strong for a single spike per readout interval."""


class WindowError(SpikeCamError):
    pass


def pack_frames(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise SpikeCamError("frames must be K x H x W")
    if not np.isin(frames, (0, 1)).all():
        raise SpikeCamError("spike frames must be binary")
    return np.packbits(frames.astype(np.uint8).ravel(), bitorder="big").tobytes()


def unpack_frames(data: bytes, shape: tuple[int, int, int]) -> np.ndarray:
    n = int(np.prod(shape))
    if len(data) != (n + 7) // 8:
        raise SpikeCamError(f"expected {(n + 7) // 8} packed bytes, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n, bitorder="big")
    return bits.reshape(shape)


@dataclass(frozen=True)
class SpikeStream:
    """Immutable binary spike tensor of shape ``(K, H, W)`` with timing metadata."""

    packed: bytes
    shape: tuple[int, int, int]
    readout_rate: float
    theta: float
    t0: float = 0.0
    camera: str = "left"

    def __post_init__(self):
        K, H, W = self.shape
        if min(K, H, W) <= 0:
            raise SpikeCamError("K, H, W must be positive")
        if self.readout_rate <= 0 or self.theta <= 0:
            raise SpikeCamError("readout rate and threshold must be positive")
        if len(self.packed) != (K * H * W + 7) // 8:
            raise SpikeCamError("packed payload does not match the declared shape")
        object.__setattr__(self, "shape", (int(K), int(H), int(W)))

    @classmethod
    def from_frames(cls, frames, readout_rate: float, theta: float, t0: float = 0.0,
                    camera: str = "left") -> "SpikeStream":
        frames = np.asarray(frames)
        return cls(pack_frames(frames), frames.shape, readout_rate, theta, t0, camera)

    @property
    def frames(self) -> np.ndarray:
        return unpack_frames(self.packed, self.shape)

    @property
    def dt(self) -> float:
        return 1.0 / self.readout_rate

    @property
    def n_frames(self) -> int:
        return self.shape[0]

    @property
    def midpoint(self) -> float:
        """Timestamp at the center of the stream (mean of frame timestamps)."""
        return self.t0 + 0.5 * (self.n_frames - 1) * self.dt

    def frame_times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_frames) * self.dt


@dataclass
class PixelAccumulator:
    """Per-pixel charge left over after the most recent readout, in ``[0, theta)``."""

    residual: np.ndarray
    theta: float

    @classmethod
    def zeros(cls, shape, theta):
        return cls(np.zeros(shape, dtype=np.float64), theta)

    def integrate(self, charge: np.ndarray) -> np.ndarray:
        if np.any(charge >= self.theta):
            raise SaturationError("irradiance x interval reaches the threshold; more than one "
                                  "spike per readout interval would be required")
        self.residual = self.residual + charge
        spikes = self.residual >= self.theta
        self.residual = np.where(spikes, self.residual - self.theta, self.residual)
        return spikes


def simulate(luminance_seq: Sequence[LuminanceField] | np.ndarray, theta: float, readout_rate: float,
             t0: float = 0.0, camera: str = "left", initial_residual: np.ndarray | None = None,
             return_residual: bool = False):
    """Integrate-and-fire simulation over a sequence of irradiance fields.

    One output frame per input field; field ``k`` is held constant over the
    ``k``-th readout interval. Raises :class:`SaturationError` if any
    irradiance would need more than one spike per interval.
    """
    if theta <= 0 or readout_rate <= 0:
        raise SpikeCamError("theta and readout rate must be positive")
    fields = [f.values if isinstance(f, LuminanceField) else np.asarray(f, dtype=np.float64)
              for f in luminance_seq]
    if not fields:
        raise SpikeCamError("luminance sequence is empty")
    shape = fields[0].shape
    if any(f.shape != shape for f in fields):
        raise SpikeCamError("luminance fields must share a resolution")
    dt = 1.0 / readout_rate
    acc = PixelAccumulator.zeros(shape, theta)
    if initial_residual is not None:
        acc.residual = np.asarray(initial_residual, dtype=np.float64).copy()
    frames = np.empty((len(fields), *shape), dtype=np.uint8)
    for k, I in enumerate(fields):
        if np.any(I < 0) or not np.all(np.isfinite(I)):
            raise SpikeCamError("irradiance must be finite and non-negative")
        frames[k] = acc.integrate(I * dt)
    stream = SpikeStream.from_frames(frames, readout_rate, theta, t0, camera)
    return (stream, acc.residual) if return_residual else stream


def static_sequence(field: LuminanceField, n_frames: int) -> list[LuminanceField]:
    return [field] * n_frames


def window(stream: SpikeStream, t_center: float, n: int) -> SpikeStream:
    """The ``n``-frame sub-stream centered on ``t_center``."""
    if n <= 0:
        raise WindowError("window length must be positive")
    c = (t_center - stream.t0) / stream.dt
    start = int(np.floor(c - (n - 1) / 2 + 0.5 + 1e-9))
    if start < 0 or start + n > stream.n_frames:
        raise WindowError(f"window [{start}, {start + n}) exceeds stream of {stream.n_frames} frames")
    frames = stream.frames[start:start + n]
    return SpikeStream.from_frames(frames, stream.readout_rate, stream.theta,
                                   stream.t0 + start * stream.dt, stream.camera)


def window_centers(stream: SpikeStream, n: int) -> tuple[float, float, float]:
    """Centers of three consecutive non-overlapping ``n``-frame windows around the midpoint."""
    t1 = stream.midpoint
    return t1 - n * stream.dt, t1, t1 + n * stream.dt


def substreams(stream: SpikeStream, n: int) -> list[SpikeStream]:
    return [window(stream, t, n) for t in window_centers(stream, n)]


def network_input(stream: SpikeStream, n: int) -> np.ndarray:
    """The three sub-streams stacked channel-wise: a ``(3n, H, W)`` float array."""
    return np.concatenate([s.frames for s in substreams(stream, n)]).astype(np.float32)


def reconstruct_tfp(stream: SpikeStream, window: int, start: int | None = None) -> LuminanceField:
    """Spike-count playback: ``count * theta / (window * dt)`` per pixel.

    The window defaults to the center of the stream.
    """
    K = stream.n_frames
    if not 0 < window <= K:
        raise SpikeCamError("window must lie in [1, K]")
    if start is None:
        start = (K - window) // 2
    if start < 0 or start + window > K:
        raise SpikeCamError("playback window exceeds the stream")
    counts = stream.frames[start:start + window].sum(axis=0, dtype=np.int64)
    est = counts * stream.theta / (window * stream.dt)
    return LuminanceField(est, stream.t0 + (start + 0.5 * (window - 1)) * stream.dt)


def write_spk(stream: SpikeStream, path: str | Path) -> None:
    K, H, W = stream.shape
    header = _HEADER.pack(MAGIC, SPK_VERSION, K, H, W, stream.readout_rate, stream.theta, stream.t0)
    Path(path).write_bytes(header + stream.packed)


def read_spk(path: str | Path, camera: str = "left") -> SpikeStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise SpikeCamError(f"{path}: not a spike stream file")
    magic, version, K, H, W, rate, theta, t0 = _HEADER.unpack_from(data)
    if version != SPK_VERSION:
        raise SpikeCamError(f"{path}: unsupported version {version}")
    payload = data[_HEADER.size:]
    n = (K * H * W + 7) // 8
    if len(payload) < n:
        raise SpikeCamError(f"{path}: truncated payload")
    return SpikeStream(payload[:n], (K, H, W), rate, theta, t0, camera)
