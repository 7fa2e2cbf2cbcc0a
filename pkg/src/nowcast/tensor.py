"""Dense array kernels: elementwise ops, reductions, and same-padded 2-D convolution.

Arrays are plain numpy ndarrays in [batch, channel, height, width] row-major
layout. Training runs in float32; gradient checking promotes to float64.
Convolution here means cross-correlation (no kernel flip), stride 1, zero-padded
"same" borders only -- the only configuration the architecture uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatchError

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64


@dataclass(frozen=True)
class ConvSpec:
    """Shape contract for a same-padded, stride-1 convolution."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"channel counts must be >= 1, got {self.in_channels}x{self.out_channels}")
        if self.kernel_h % 2 == 0 or self.kernel_w % 2 == 0:
            raise ValueError(
                f"kernel dims must be odd for symmetric same padding, got {self.kernel_h}x{self.kernel_w}"
            )


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: operand shapes differ: {a.shape} vs {b.shape}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def leaky_relu(x: np.ndarray, alpha: float = 0.3) -> np.ndarray:
    return np.where(x >= 0, x, alpha * x)


def leaky_relu_backward(x: np.ndarray, grad: np.ndarray, alpha: float = 0.3) -> np.ndarray:
    return np.where(x >= 0, grad, alpha * grad)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "add")
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "sub")
    return a - b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "mul")
    return a * b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return a * s


_POINTWISE = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "leaky_relu": leaky_relu,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
}


def elementwise_map(name: str, *args, **kwargs) -> np.ndarray:
    """Dispatch a pointwise op by name. Binary ops require identical shapes."""
    try:
        f = _POINTWISE[name]
    except KeyError:
        raise ValueError(f"unknown pointwise op {name!r}") from None
    return f(*args, **kwargs)


def reduce(t: np.ndarray, axes, kind: str) -> np.ndarray:
    """Reduce over ``axes`` (reduced axes are removed). ``variance`` is the
    biased population variance. An empty axis set is the identity."""
    axes = tuple(sorted(set(int(a) for a in axes)))
    if not axes:
        return t.copy()
    for a in axes:
        if a < 0 or a >= t.ndim:
            raise ValueError(f"axis {a} out of range for rank-{t.ndim} tensor")
    if kind == "mean":
        return np.mean(t, axis=axes)
    if kind == "variance":
        return np.var(t, axis=axes)
    if kind == "sum":
        return np.sum(t, axis=axes)
    raise ValueError(f"unknown reduction {kind!r}")


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-pad for same output and return sliding windows [N,C,H,W,kh,kw]."""
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    return sliding_window_view(padded, (kh, kw), axis=(2, 3))


def conv2d_forward(x: np.ndarray, spec: ConvSpec, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation.

    x: [N, C_in, H, W], kernels: [C_out, C_in, kh, kw], bias: [C_out]
    returns [N, C_out, H, W].
    """
    if x.ndim != 4:
        raise ShapeMismatchError(f"conv2d input must be rank 4 [N,C,H,W], got shape {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(
            f"conv2d input channel dim is {x.shape[1]}, spec expects {spec.in_channels}"
        )
    expect_k = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
    if kernels.shape != expect_k:
        raise ShapeMismatchError(f"conv2d kernel shape {kernels.shape} != spec shape {expect_k}")
    if bias.shape != (spec.out_channels,):
        raise ShapeMismatchError(f"conv2d bias shape {bias.shape} != ({spec.out_channels},)")
    win = _windows(x, spec.kernel_h, spec.kernel_w)
    out = np.einsum("nchwij,ocij->nohw", win, kernels, optimize=True)
    return out + bias[None, :, None, None]


def conv2d_backward(
    x: np.ndarray, spec: ConvSpec, kernels: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of conv2d_forward: (d_input, d_kernels, d_bias)."""
    n, _, h, w = x.shape
    if upstream.shape != (n, spec.out_channels, h, w):
        raise ShapeMismatchError(
            f"conv2d upstream shape {upstream.shape} != {(n, spec.out_channels, h, w)}"
        )
    d_bias = upstream.sum(axis=(0, 2, 3))
    win = _windows(x, spec.kernel_h, spec.kernel_w)
    d_kernels = np.einsum("nchwij,nohw->ocij", win, upstream, optimize=True)
    # d_input is the upstream grad full-correlated with spatially flipped kernels
    up_win = _windows(upstream, spec.kernel_h, spec.kernel_w)
    flipped = kernels[:, :, ::-1, ::-1]
    d_input = np.einsum("nohwij,ocij->nchw", up_win, flipped, optimize=True)
    return d_input, d_kernels, d_bias
