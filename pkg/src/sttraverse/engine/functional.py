"""Composite differentiable operations: time convolution, node batch norm, dropout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, _apply, _vals, as_tensor


def conv_time(h, kernel) -> Tensor:
    """Full-width valid convolution over the time axis.

    ``h`` is [B, N, d, p], ``kernel`` is [d_out, d, p]; the time axis collapses
    to length 1: ``out[b, n, o, 0] = sum_{c, t} h[b, n, c, t] * kernel[o, c, t]``.
    """
    hv, kv = _vals(h), _vals(kernel)
    if hv.ndim != 4 or kv.ndim != 3:
        raise ShapeError(f"conv_time expects 4-D input and 3-D kernel, got {hv.shape}, {kv.shape}")
    if hv.shape[2] != kv.shape[1] or hv.shape[3] != kv.shape[2]:
        raise ShapeError(
            f"conv_time kernel {kv.shape} incompatible with input {hv.shape} "
            "(channel and time lengths must match)")
    out = np.einsum("bnct,oct->bno", hv, kv, optimize=True)[..., None]

    def backward(g):
        g0 = g[..., 0]
        grad_h = np.einsum("bno,oct->bnct", g0, kv, optimize=True)
        grad_k = np.einsum("bno,bnct->oct", g0, hv, optimize=True)
        return (grad_h, grad_k)

    return _apply("conv_time", out, (h, kernel), backward)


@dataclass
class BatchNormState:
    """Per-(node, channel) affine parameters and running statistics.

    Shapes are [1, N, d, 1] so they broadcast over batch and time axes.
    """

    gain: Tensor
    bias: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def create(cls, n_nodes: int, channels: int, eps: float = 1e-5,
               momentum: float = 0.1, dtype=np.float64) -> "BatchNormState":
        shape = (1, n_nodes, channels, 1)
        return cls(
            gain=Tensor(np.ones(shape, dtype=dtype), requires_grad=True),
            bias=Tensor(np.zeros(shape, dtype=dtype), requires_grad=True),
            running_mean=np.zeros(shape, dtype=dtype),
            running_var=np.ones(shape, dtype=dtype),
            eps=eps,
            momentum=momentum,
        )


def batchnorm_node(h, state: BatchNormState, training: bool) -> Tensor:
    """Normalize each (node, channel) group over the batch and time axes.

    Training mode normalizes with batch statistics (gradients flow through
    them) and updates the running statistics with ``state.momentum``; eval
    mode applies the stored running statistics verbatim.
    """
    h = as_tensor(h)
    hv = _vals(h)
    if hv.ndim != 4:
        raise ShapeError(f"batchnorm_node expects [B, N, d, T], got {hv.shape}")
    if training:
        count = hv.shape[0] * hv.shape[3]
        if count < 2:
            raise ShapeError("batchnorm_node: training needs batch*time >= 2 per group")
        m = h.mean(axis=(0, 3), keepdims=True)
        centered = h - m
        v = (centered * centered).mean(axis=(0, 3), keepdims=True)
        xhat = centered / (v + state.eps).sqrt()
        mom = state.momentum
        state.running_mean = (1.0 - mom) * state.running_mean + mom * m.values
        state.running_var = (1.0 - mom) * state.running_var + mom * v.values
    else:
        xhat = (h - state.running_mean) / np.sqrt(state.running_var + state.eps)
    return xhat * state.gain + state.bias


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not training or rate <= 0.0:
        return x
    xv = _vals(x)
    mask = (rng.random(xv.shape) >= rate).astype(xv.dtype) / (1.0 - rate)
    return x * Tensor(mask)
