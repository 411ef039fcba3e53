"""Recurrent spiking update operator.

Adaptive leaky integrate-and-fire layers refine a hidden-state field over a
number of inner time steps; the output layer's spike trains are read out as
membrane potentials and turned into a signed increment of the field.

Spike modes:

* ``"exact"``     Heaviside forward, no gradient.
* ``"surrogate"`` Heaviside forward, triangular surrogate derivative backward.
* ``"relaxed"``   smooth step whose exact derivative is the triangular
  surrogate; used for finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .pathway import ShapeError, seeded_init_

SPIKE_MODES = ("exact", "surrogate", "relaxed")
SCALES = (4, 8, 16)


class _SurrogateSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, z, width):
        ctx.save_for_backward(z)
        ctx.width = width
        return (z >= 0).to(z.dtype)

    @staticmethod
    def backward(ctx, grad):
        (z,) = ctx.saved_tensors
        w = ctx.width
        return grad * torch.clamp(1 - z.abs() / w, min=0) / w, None


def relaxed_step(z: Tensor, width: float) -> Tensor:
    """Piecewise-quadratic step rising over ``[-width, width]``; derivative is the triangle kernel."""
    zc = z.clamp(-width, width)
    lower = (zc + width) ** 2 / (2 * width**2)
    upper = 1 - (width - zc) ** 2 / (2 * width**2)
    return torch.where(zc < 0, lower, upper)


def spike_fn(z: Tensor, width: float = 0.5, mode: str = "surrogate") -> Tensor:
    """Spike nonlinearity applied to ``z = v - threshold``."""
    if mode == "exact":
        return (z >= 0).to(z.dtype)
    if mode == "surrogate":
        return _SurrogateSpike.apply(z, width)
    if mode == "relaxed":
        return relaxed_step(z, width)
    raise ValueError(f"unknown spike mode {mode!r}")


@dataclass(frozen=True)
class ALIFParams:
    tau_m: float = 0.8
    tau_adp: float = 0.9
    v_threshold: float = 1.0
    adapt_beta: float = 0.2
    surrogate_width: float = 0.5

    def __post_init__(self):
        if not (0 < self.tau_m < 1 and 0 < self.tau_adp < 1):
            raise ValueError("decay constants must lie in (0, 1)")
        if self.v_threshold <= 0 or self.adapt_beta < 0 or self.surrogate_width <= 0:
            raise ValueError("need v_threshold > 0, adapt_beta >= 0, surrogate_width > 0")


@dataclass
class NeuronState:
    v: Tensor
    a: Tensor
    last_spike: Tensor

    @classmethod
    def zeros(cls, shape, dtype=torch.float32) -> "NeuronState":
        z = torch.zeros(shape, dtype=dtype)
        return cls(z, z.clone(), z.clone())

    def threshold(self, params: ALIFParams) -> Tensor:
        return params.v_threshold + params.adapt_beta * self.a


def alif_step(state: NeuronState, input_current, params: ALIFParams,
              mode: str = "surrogate") -> tuple[NeuronState, Tensor]:
    """One adaptive-LIF update with soft reset by the threshold that was crossed."""
    current = torch.as_tensor(input_current, dtype=state.v.dtype)
    if current.shape != state.v.shape:
        raise ShapeError(f"input {tuple(current.shape)} does not match state {tuple(state.v.shape)}")
    s_prev = state.last_spike
    v = params.tau_m * state.v + current - state.threshold(params) * s_prev
    a = params.tau_adp * state.a + s_prev
    theta = params.v_threshold + params.adapt_beta * a
    spikes = spike_fn(v - theta, params.surrogate_width, mode)
    return NeuronState(v, a, spikes), spikes


def decode_membrane(spike_train, tau_out: float = 0.9):
    """Leaky readout ``v_T = sum_t tau_out**(T-t) * s_t`` of a ``(T, ...)`` train, rectified.

    Accepts numpy arrays or tensors and returns the same kind.
    """
    if not 0 < tau_out < 1:
        raise ValueError("tau_out must lie in (0, 1)")
    if isinstance(spike_train, Tensor):
        v = torch.zeros_like(spike_train[0])
        for s in spike_train:
            v = tau_out * v + s
        return torch.relu(v)
    train = np.asarray(spike_train, dtype=np.float64)
    v = np.zeros(train.shape[1:])
    for s in train:
        v = tau_out * v + s
    return np.maximum(v, 0.0)


class ALIFConv(nn.Module):
    """Convolutional ALIF layer with optional 1x1 recurrence on its own spikes."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, recurrent: bool = True):
        super().__init__()
        self.ff = nn.Conv2d(in_channels, out_channels, kernel, padding=kernel // 2)
        self.rec = nn.Conv2d(out_channels, out_channels, 1, bias=False) if recurrent else None

    def forward(self, x: Tensor, state: NeuronState, params: ALIFParams,
                mode: str) -> tuple[NeuronState, Tensor]:
        current = self.ff(x)
        if self.rec is not None:
            current = current + self.rec(state.last_spike)
        return alif_step(state, current, params, mode)


def _resample(x: Tensor, size) -> Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class UpdateModule(nn.Module):
    """Three recurrent ALIF layers shared by all scales plus a spiking readout layer.

    The 1/4-scale input is average-pooled to feed the 1/8 and 1/16 copies.
    Every step, each scale's layer-3 spikes from the previous step are
    resampled bilinearly to its neighbours and appended to their layer-1
    input. The readout layer emits ``2 * hidden_channels`` spike trains at
    1/4 scale: a positive and a negative train per hidden channel.
    """

    def __init__(self, in_channels: int, hidden_channels: int, channels: int = 16,
                 params: ALIFParams | None = None, tau_out: float = 0.9, delta_scale: float = 0.1,
                 init_seed: int = 0):
        super().__init__()
        if not 0 < tau_out < 1:
            raise ValueError("tau_out must lie in (0, 1)")
        self.in_channels = in_channels
        self.hidden_channels = hidden_channels
        self.channels = channels
        self.params = params or ALIFParams()
        self.tau_out = tau_out
        self.delta_scale = delta_scale
        self.layers = nn.ModuleList([
            ALIFConv(in_channels + 2 * channels, channels),
            ALIFConv(channels, channels),
            ALIFConv(channels, channels),
        ])
        self.readout = ALIFConv(channels, 2 * hidden_channels, kernel=1, recurrent=False)
        seeded_init_(self, torch.Generator().manual_seed(init_seed))
        # readout crosses threshold within a few steps at rest; paired trains cancel until trained apart
        with torch.no_grad():
            self.readout.ff.bias.fill_(0.5 * self.params.v_threshold)

    def layers_at(self, scale: int) -> nn.ModuleList:
        if scale not in SCALES:
            raise ValueError(f"unknown scale {scale}")
        return self.layers

    def forward(self, x: Tensor, steps: int, mode: str = "surrogate", recorder=None) -> Tensor:
        """Increment ``(1, hidden_channels, H, W)`` for a batched 1/4-scale input ``x``."""
        if steps < 1:
            raise ValueError("need at least one inner step")
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        inputs = {4: x, 8: F.avg_pool2d(x, 2), 16: F.avg_pool2d(x, 4)}
        dt = x.dtype
        states = {s: [NeuronState.zeros((1, self.channels, *inputs[s].shape[-2:]), dt) for _ in self.layers]
                  for s in SCALES}
        top = {s: torch.zeros((1, self.channels, *inputs[s].shape[-2:]), dtype=dt) for s in SCALES}
        out_state = NeuronState.zeros((1, 2 * self.hidden_channels, *x.shape[-2:]), dt)
        v_out = torch.zeros_like(out_state.v)
        for _ in range(steps):
            new_top = {}
            for i, s in enumerate(SCALES):
                size = inputs[s].shape[-2:]
                finer = _resample(top[SCALES[i - 1]], size) if i > 0 else torch.zeros_like(top[s])
                coarser = _resample(top[SCALES[i + 1]], size) if i + 1 < len(SCALES) else torch.zeros_like(top[s])
                h = torch.cat([inputs[s], finer, coarser], dim=1)
                for li, layer in enumerate(self.layers_at(s)):
                    if recorder is not None:
                        self._record(recorder, f"layer{li + 1}@{s}", layer, h, states[s][li], analog=li == 0)
                    states[s][li], h = layer(h, states[s][li], self.params, mode)
                new_top[s] = h
            top = new_top
            if recorder is not None:
                self._record(recorder, "readout@4", self.readout, top[4], out_state, analog=False)
            out_state, out_spikes = self.readout(top[4], out_state, self.params, mode)
            v_out = self.tau_out * v_out + out_spikes
        decoded = torch.relu(v_out)
        pos, neg = decoded[:, : self.hidden_channels], decoded[:, self.hidden_channels:]
        return self.delta_scale * (pos - neg)

    @staticmethod
    def _record(recorder, name, layer: ALIFConv, x: Tensor, state: NeuronState, analog: bool) -> None:
        pad = layer.ff.padding[0]
        if analog:
            recorder.record_dense(name, tuple(x.shape[1:]), tuple(layer.ff.weight.shape), 1, pad)
        else:
            recorder.record_spikes(name, x[0], tuple(layer.ff.weight.shape), 1, pad)
        if layer.rec is not None:
            recorder.record_spikes(name + ".rec", state.last_spike[0], tuple(layer.rec.weight.shape), 1, 0)


@dataclass
class HiddenStateField:
    h: Tensor
    iteration_index: int = 0

    def __post_init__(self):
        if self.iteration_index < 0:
            raise ValueError("iteration index must be non-negative")
        if self.h.dim() != 3:
            raise ShapeError("hidden state must be C x H x W")


def update_iteration(h_k: HiddenStateField, corr_feats: Tensor, context_feats: Tensor, module: UpdateModule,
                     steps: int, mode: str = "surrogate", recorder=None) -> tuple[HiddenStateField, Tensor]:
    """One outer refinement ``h + dh``; neuron states start from rest every call."""
    h = h_k.h
    if not (h.shape[-2:] == corr_feats.shape[-2:] == context_feats.shape[-2:]):
        raise ShapeError("hidden state, correlation and context fields differ in resolution")
    x = torch.cat([h, corr_feats.to(h.dtype), context_feats.to(h.dtype)], dim=0)[None]
    delta = module(x, steps, mode, recorder)[0]
    return HiddenStateField(h + delta, h_k.iteration_index + 1), delta
