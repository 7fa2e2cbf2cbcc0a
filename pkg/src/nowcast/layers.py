"""Network layers with forward and analytic backward passes.

Three layer kinds: the convolutional LSTM (cell and time-unrolled layer),
batch normalization with running statistics, and the sigmoid-headed output
convolution. Gate packing along the 4F channel axis is fixed as
(input i, forget f, cell candidate c, output o).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .tensor import ConvSpec, conv2d_backward, conv2d_forward, sigmoid, tanh


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# ConvLSTM


@dataclass
class ConvLSTMParams:
    """Weights of one convolutional LSTM layer.

    w_x: [4F, C_in, kh, kw] input kernels, w_h: [4F, F, kh, kw] recurrent
    kernels, bias: [4F]. Peephole weights w_c: [3F, h, w] (i, f, o order) are
    optional and off by default.
    """

    w_x: np.ndarray
    w_h: np.ndarray
    bias: np.ndarray
    filters: int
    spec: ConvSpec
    w_c: np.ndarray | None = None

    @property
    def recurrent_spec(self) -> ConvSpec:
        return ConvSpec(self.filters, 4 * self.filters, self.w_h.shape[2], self.w_h.shape[3])


@dataclass
class ConvLSTMState:
    h: np.ndarray  # [N, F, h, w] hidden
    c: np.ndarray  # [N, F, h, w] cell

    @classmethod
    def zeros(cls, n: int, filters: int, h: int, w: int, dtype=np.float32) -> "ConvLSTMState":
        return cls(np.zeros((n, filters, h, w), dtype=dtype), np.zeros((n, filters, h, w), dtype=dtype))


@dataclass
class ConvLSTMGrads:
    w_x: np.ndarray
    w_h: np.ndarray
    bias: np.ndarray
    w_c: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, p: ConvLSTMParams) -> "ConvLSTMGrads":
        return cls(
            np.zeros_like(p.w_x),
            np.zeros_like(p.w_h),
            np.zeros_like(p.bias),
            None if p.w_c is None else np.zeros_like(p.w_c),
        )

    def accumulate(self, other: "ConvLSTMGrads"):
        self.w_x += other.w_x
        self.w_h += other.w_h
        self.bias += other.bias
        if self.w_c is not None:
            self.w_c += other.w_c


def init_convlstm_params(
    rng: np.random.Generator,
    in_channels: int,
    filters: int,
    kernel_size: int,
    peephole_hw: tuple[int, int] | None = None,
    dtype=np.float32,
) -> ConvLSTMParams:
    """Glorot-uniform kernels, forget-gate bias 1, other biases 0."""
    k = kernel_size
    spec = ConvSpec(in_channels, 4 * filters, k, k)
    w_x = glorot_uniform(rng, (4 * filters, in_channels, k, k), in_channels * k * k, filters * k * k, dtype)
    w_h = glorot_uniform(rng, (4 * filters, filters, k, k), filters * k * k, filters * k * k, dtype)
    bias = np.zeros(4 * filters, dtype=dtype)
    bias[filters : 2 * filters] = 1.0  # forget gate
    w_c = None
    if peephole_hw is not None:
        w_c = glorot_uniform(rng, (3 * filters,) + tuple(peephole_hw), filters, filters, dtype)
    return ConvLSTMParams(w_x=w_x, w_h=w_h, bias=bias, filters=filters, spec=spec, w_c=w_c)


def _check_state(x: np.ndarray, state: ConvLSTMState, params: ConvLSTMParams):
    n, c_in, h, w = x.shape
    if c_in != params.spec.in_channels:
        raise ShapeMismatchError(
            f"convlstm: input has {c_in} channels, layer expects {params.spec.in_channels}"
        )
    want = (n, params.filters, h, w)
    if state.h.shape != want or state.c.shape != want:
        raise ShapeMismatchError(
            f"convlstm: state shapes {state.h.shape}/{state.c.shape} != expected {want}"
        )


def convlstm_cell_forward(
    x: np.ndarray, state: ConvLSTMState, params: ConvLSTMParams
) -> tuple[ConvLSTMState, dict]:
    """One timestep of the cell.

    i = sig(Wxi*x + Whi*H + b_i [+ Wci o C_prev])
    f = sig(Wxf*x + Whf*H + b_f [+ Wcf o C_prev])
    C = f o C_prev + i o tanh(Wxc*x + Whc*H + b_c)
    o = sig(Wxo*x + Who*H + b_o [+ Wco o C])
    H = o o tanh(C)
    """
    _check_state(x, state, params)
    nf = params.filters
    zero_bias = np.zeros(4 * nf, dtype=x.dtype)
    z = conv2d_forward(x, params.spec, params.w_x, params.bias)
    z = z + conv2d_forward(state.h, params.recurrent_spec, params.w_h, zero_bias)
    zi, zf, zc, zo = (z[:, k * nf : (k + 1) * nf] for k in range(4))
    if params.w_c is not None:
        zi = zi + params.w_c[:nf] * state.c
        zf = zf + params.w_c[nf : 2 * nf] * state.c
    gi = sigmoid(zi)
    gf = sigmoid(zf)
    gc = tanh(zc)
    c_new = gf * state.c + gi * gc
    if params.w_c is not None:
        zo = zo + params.w_c[2 * nf :] * c_new
    go = sigmoid(zo)
    tc = tanh(c_new)
    h_new = go * tc
    cache = {
        "x": x,
        "h_prev": state.h,
        "c_prev": state.c,
        "i": gi,
        "f": gf,
        "g": gc,
        "o": go,
        "c_new": c_new,
        "tanh_c": tc,
        "params": params,
    }
    return ConvLSTMState(h_new, c_new), cache


def convlstm_cell_backward(
    cache: dict, d_h: np.ndarray, d_c: np.ndarray
) -> tuple[np.ndarray, ConvLSTMState, ConvLSTMGrads]:
    """Gradients of one cell step: (dx, dState_prev, dParams)."""
    p: ConvLSTMParams = cache["params"]
    nf = p.filters
    gi, gf, gc, go = cache["i"], cache["f"], cache["g"], cache["o"]
    c_prev, tc = cache["c_prev"], cache["tanh_c"]
    if d_h.shape != cache["h_prev"].shape:
        raise ShapeMismatchError(
            f"convlstm backward: d_h shape {d_h.shape} != state shape {cache['h_prev'].shape}"
        )

    dzo = d_h * tc * go * (1.0 - go)
    dc_total = d_c + d_h * go * (1.0 - tc * tc)
    dw_c = None
    if p.w_c is not None:
        dc_total = dc_total + dzo * p.w_c[2 * nf :]
    dzf = dc_total * c_prev * gf * (1.0 - gf)
    dzi = dc_total * gc * gi * (1.0 - gi)
    dzc = dc_total * gi * (1.0 - gc * gc)
    dc_prev = dc_total * gf
    if p.w_c is not None:
        dc_prev = dc_prev + dzi * p.w_c[:nf] + dzf * p.w_c[nf : 2 * nf]
        dw_c = np.concatenate(
            [
                (dzi * c_prev).sum(axis=0),
                (dzf * c_prev).sum(axis=0),
                (dzo * cache["c_new"]).sum(axis=0),
            ],
            axis=0,
        )

    dz = np.concatenate([dzi, dzf, dzc, dzo], axis=1)
    dx, dw_x, db = conv2d_backward(cache["x"], p.spec, p.w_x, dz)
    dh_prev, dw_h, _ = conv2d_backward(cache["h_prev"], p.recurrent_spec, p.w_h, dz)
    grads = ConvLSTMGrads(w_x=dw_x, w_h=dw_h, bias=db, w_c=dw_c)
    return dx, ConvLSTMState(dh_prev, dc_prev), grads


def convlstm_layer_forward(
    seq: np.ndarray, params: ConvLSTMParams, initial_state: ConvLSTMState | None = None
) -> tuple[np.ndarray, ConvLSTMState, list]:
    """Unroll the cell over seq [N,T,C_in,h,w]; emits every hidden state
    (return-sequences) plus the final state and per-step caches."""
    if seq.ndim != 5:
        raise ShapeMismatchError(f"convlstm layer input must be [N,T,C,h,w], got {seq.shape}")
    n, t_len, _, h, w = seq.shape
    state = initial_state or ConvLSTMState.zeros(n, params.filters, h, w, dtype=seq.dtype)
    hidden = np.empty((n, t_len, params.filters, h, w), dtype=seq.dtype)
    caches = []
    for t in range(t_len):
        state, cache = convlstm_cell_forward(seq[:, t], state, params)
        hidden[:, t] = state.h
        caches.append(cache)
    return hidden, state, caches


def convlstm_layer_backward(
    caches: list, d_hidden: np.ndarray, d_final_state: ConvLSTMState | None = None
) -> tuple[np.ndarray, ConvLSTMState, ConvLSTMGrads]:
    """Backprop through time. d_hidden is [N,T,F,h,w]; returns
    (d_seq, d_initial_state, dParams summed over time)."""
    p: ConvLSTMParams = caches[0]["params"]
    t_len = len(caches)
    grads = ConvLSTMGrads.zeros_like(p)
    if d_final_state is not None:
        dh_next, dc_next = d_final_state.h, d_final_state.c
    else:
        dh_next = np.zeros_like(d_hidden[:, 0])
        dc_next = np.zeros_like(d_hidden[:, 0])
    d_seq = None
    for t in reversed(range(t_len)):
        dx, d_state, g = convlstm_cell_backward(caches[t], d_hidden[:, t] + dh_next, dc_next)
        grads.accumulate(g)
        if d_seq is None:
            n = dx.shape[0]
            d_seq = np.zeros((n, t_len) + dx.shape[1:], dtype=dx.dtype)
        d_seq[:, t] = dx
        dh_next, dc_next = d_state.h, d_state.c
    return d_seq, ConvLSTMState(dh_next, dc_next), grads


# ---------------------------------------------------------------------------
# Batch normalization


@dataclass
class BatchNormParams:
    """Per-channel scale/shift with running statistics for inference."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3
    momentum: float = 0.99

    @classmethod
    def create(cls, channels: int, epsilon: float = 1e-3, momentum: float = 0.99,
               dtype=np.float32) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            epsilon=epsilon,
            momentum=momentum,
        )


def _bn_axes(x: np.ndarray) -> tuple[int, tuple[int, ...]]:
    if x.ndim == 5:  # [N,T,C,h,w]
        return 2, (0, 1, 3, 4)
    if x.ndim == 4:  # [N,C,h,w]
        return 1, (0, 2, 3)
    raise ShapeMismatchError(f"batchnorm expects rank 4 or 5 input, got shape {x.shape}")


def batchnorm_forward(
    x: np.ndarray, params: BatchNormParams, mode: str = "train"
) -> tuple[np.ndarray, dict]:
    """Normalize per channel over every non-channel axis.

    Train mode uses batch statistics and updates the running stats with
    running <- momentum * running + (1 - momentum) * batch. Infer mode uses
    the running stats (initialized to mean 0 / var 1) and updates nothing.
    """
    ch_axis, axes = _bn_axes(x)
    if x.shape[ch_axis] != params.gamma.shape[0]:
        raise ShapeMismatchError(
            f"batchnorm: input has {x.shape[ch_axis]} channels, params have {params.gamma.shape[0]}"
        )
    bshape = [1] * x.ndim
    bshape[ch_axis] = x.shape[ch_axis]
    gamma = params.gamma.reshape(bshape)
    beta = params.beta.reshape(bshape)
    if mode == "train":
        mu = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        m = params.momentum
        params.running_mean[:] = m * params.running_mean + (1.0 - m) * mu.reshape(-1)
        params.running_var[:] = m * params.running_var + (1.0 - m) * var.reshape(-1)
    elif mode == "infer":
        mu = params.running_mean.reshape(bshape).astype(x.dtype)
        var = params.running_var.reshape(bshape).astype(x.dtype)
    else:
        raise ValueError(f"batchnorm mode must be 'train' or 'infer', got {mode!r}")
    inv_std = 1.0 / np.sqrt(var + params.epsilon)
    xhat = (x - mu) * inv_std
    y = gamma * xhat + beta
    cache = {"xhat": xhat, "inv_std": inv_std, "gamma": gamma, "axes": axes, "mode": mode}
    return y, cache


def batchnorm_backward(cache: dict, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the train-mode forward, including the dependence of the
    batch statistics on x. Infer-mode caches are refused."""
    if cache["mode"] != "train":
        raise ValueError("batchnorm_backward requires a train-mode cache")
    xhat, inv_std, gamma, axes = cache["xhat"], cache["inv_std"], cache["gamma"], cache["axes"]
    m = dy.size // gamma.size
    dbeta = dy.sum(axis=axes)
    dgamma = (dy * xhat).sum(axis=axes)
    dxhat = dy * gamma
    dx = (
        inv_std
        / m
        * (
            m * dxhat
            - dxhat.sum(axis=axes, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
        )
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# Output head


def output_head_forward(
    hidden_seq: np.ndarray, spec: ConvSpec, kernels: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Per-timestep convolution to one channel followed by sigmoid.

    hidden_seq: [N,T,F,h,w] -> [N,T,1,h,w], values strictly in (0, 1).
    """
    if hidden_seq.ndim != 5:
        raise ShapeMismatchError(f"output head input must be [N,T,F,h,w], got {hidden_seq.shape}")
    n, t_len, f, h, w = hidden_seq.shape
    flat = hidden_seq.reshape(n * t_len, f, h, w)
    pre = conv2d_forward(flat, spec, kernels, bias)
    y = sigmoid(pre).reshape(n, t_len, spec.out_channels, h, w)
    cache = {"flat": flat, "y": y, "spec": spec, "kernels": kernels, "shape": hidden_seq.shape}
    return y, cache


def output_head_backward(cache: dict, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(d_hidden_seq, d_kernels, d_bias) for output_head_forward."""
    y = cache["y"]
    n, t_len, c, h, w = y.shape
    dpre = (dy * y * (1.0 - y)).reshape(n * t_len, c, h, w)
    d_flat, d_k, d_b = conv2d_backward(cache["flat"], cache["spec"], cache["kernels"], dpre)
    return d_flat.reshape(cache["shape"]), d_k, d_b
