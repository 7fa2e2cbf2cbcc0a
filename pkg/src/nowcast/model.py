"""The nine-layer seq2seq autoencoder: assembly, training, prediction, checkpoints.

Default stack (strict architecture): input, then four ConvLSTM blocks
interleaved with three batch normalizations (seven hidden layers), then a
sigmoid convolution head -- nine layers total. LeakyReLU sits after each
batch normalization. The head's output at timestep t is the prediction of
input-time t + input_frames (direct-mapped decoding); an autoregressive
rollout is available as an alternative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    NonFiniteError,
    ShapeMismatchError,
)
from .layers import (
    BatchNormParams,
    ConvLSTMParams,
    batchnorm_backward,
    batchnorm_forward,
    convlstm_layer_backward,
    convlstm_layer_forward,
    glorot_uniform,
    init_convlstm_params,
    output_head_backward,
    output_head_forward,
)
from .optim import AdadeltaState, adadelta_step, bce_loss
from .tensor import ConvSpec, leaky_relu, leaky_relu_backward

CHECKPOINT_MAGIC = b"NCKP"
CHECKPOINT_VERSION = 1


@dataclass
class ArchitectureConfig:
    """Shape of the network and its decoding scheme.

    convlstm_blocks lists (filters, kernel_size) per block. The strict nine
    layer identity (1 input + 4 ConvLSTM + 3 BatchNorm + 1 head) requires
    exactly four blocks; set strict_arch=False for desk-scale variants.
    """

    input_frames: int = 18
    output_frames: int = 18
    frame_h: int = 344
    frame_w: int = 315
    convlstm_blocks: tuple[tuple[int, int], ...] = ((64, 5), (64, 3), (64, 3), (64, 1))
    leaky_relu_alpha: float = 0.3
    head_kernel_size: int = 3
    inference_mode: str = "direct"  # or "autoregressive"
    strict_arch: bool = True
    peephole: bool = False
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99

    def __post_init__(self):
        self.convlstm_blocks = tuple(tuple(b) for b in self.convlstm_blocks)
        if self.inference_mode not in ("direct", "autoregressive"):
            raise ValueError(f"unknown inference_mode {self.inference_mode!r}")
        if self.inference_mode == "direct" and self.input_frames != self.output_frames:
            raise ValueError("direct-mapped decoding requires input_frames == output_frames")
        if self.strict_arch and len(self.convlstm_blocks) != 4:
            raise ValueError(
                f"strict architecture needs 4 ConvLSTM blocks (nine layers total), "
                f"got {len(self.convlstm_blocks)}; set strict_arch=False to override"
            )
        if min(self.input_frames, self.output_frames, self.frame_h, self.frame_w) < 1:
            raise ValueError("frame counts and dims must be >= 1")

    @property
    def layer_count(self) -> int:
        """Input + hidden (ConvLSTM + interleaved BatchNorm) + head."""
        n = len(self.convlstm_blocks)
        return 1 + n + (n - 1) + 1


@dataclass
class ModelParams:
    arch: ArchitectureConfig
    convlstm: list[ConvLSTMParams]
    batchnorm: list[BatchNormParams]  # one between each pair of ConvLSTM blocks
    head_spec: ConvSpec
    head_kernels: np.ndarray
    head_bias: np.ndarray

    def _slots(self, trainable_only: bool = True):
        """(name, owner, attr) for every tensor in the model."""
        out = []
        for i, blk in enumerate(self.convlstm):
            out.append((f"convlstm{i}.w_x", blk, "w_x"))
            out.append((f"convlstm{i}.w_h", blk, "w_h"))
            out.append((f"convlstm{i}.bias", blk, "bias"))
            if blk.w_c is not None:
                out.append((f"convlstm{i}.w_c", blk, "w_c"))
        for i, bn in enumerate(self.batchnorm):
            out.append((f"batchnorm{i}.gamma", bn, "gamma"))
            out.append((f"batchnorm{i}.beta", bn, "beta"))
            if not trainable_only:
                out.append((f"batchnorm{i}.running_mean", bn, "running_mean"))
                out.append((f"batchnorm{i}.running_var", bn, "running_var"))
        out.append(("head.kernels", self, "head_kernels"))
        out.append(("head.bias", self, "head_bias"))
        return out

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {name: getattr(obj, attr) for name, obj, attr in self._slots(True)}

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Trainable parameters plus running statistics."""
        return {name: getattr(obj, attr) for name, obj, attr in self._slots(False)}

    def set_tensor(self, name: str, value: np.ndarray):
        for n, obj, attr in self._slots(False):
            if n == name:
                current = getattr(obj, attr)
                if current.shape != value.shape:
                    raise ShapeMismatchError(
                        f"tensor {name}: shape {value.shape} != expected {current.shape}"
                    )
                setattr(obj, attr, value.astype(current.dtype))
                return
        raise KeyError(f"model has no tensor named {name!r}")


def build_model(arch: ArchitectureConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Deterministic initialization: Glorot-uniform kernels, forget bias 1."""
    rng = np.random.default_rng(seed)
    peep_hw = (arch.frame_h, arch.frame_w) if arch.peephole else None
    blocks, bns = [], []
    in_ch = 1
    for i, (filters, k) in enumerate(arch.convlstm_blocks):
        blocks.append(init_convlstm_params(rng, in_ch, filters, k, peephole_hw=peep_hw, dtype=dtype))
        if i < len(arch.convlstm_blocks) - 1:
            bns.append(BatchNormParams.create(filters, arch.bn_epsilon, arch.bn_momentum, dtype=dtype))
        in_ch = filters
    hk = arch.head_kernel_size
    head_spec = ConvSpec(in_ch, 1, hk, hk)
    head_kernels = glorot_uniform(rng, (1, in_ch, hk, hk), in_ch * hk * hk, hk * hk, dtype)
    head_bias = np.zeros(1, dtype=dtype)
    return ModelParams(
        arch=arch,
        convlstm=blocks,
        batchnorm=bns,
        head_spec=head_spec,
        head_kernels=head_kernels,
        head_bias=head_bias,
    )


def _check_input(params: ModelParams, x: np.ndarray):
    arch = params.arch
    if x.ndim != 5 or x.shape[1] != arch.input_frames or x.shape[2] != 1:
        raise ShapeMismatchError(
            f"model input must be [N,{arch.input_frames},1,h,w], got {x.shape}"
        )
    lo, hi = float(x.min()), float(x.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"model input must be normalized to [0,1], found range [{lo}, {hi}]")


def forward(params: ModelParams, x: np.ndarray, mode: str = "train") -> tuple[np.ndarray, dict]:
    """Run the stack over the input sequence; output t predicts future frame t."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    _check_input(params, x)
    alpha = params.arch.leaky_relu_alpha
    items = []
    cur = x
    for i, blk in enumerate(params.convlstm):
        hidden, _, cl_caches = convlstm_layer_forward(cur, blk)
        item = {"convlstm": cl_caches}
        cur = hidden
        if i < len(params.batchnorm):
            cur, bn_cache = batchnorm_forward(cur, params.batchnorm[i], mode)
            item["batchnorm"] = bn_cache
            item["pre_act"] = cur
            cur = leaky_relu(cur, alpha)
        items.append(item)
    yhat, head_cache = output_head_forward(cur, params.head_spec, params.head_kernels, params.head_bias)
    caches = {"mode": mode, "items": items, "head": head_cache}
    return yhat, caches


def backward(params: ModelParams, caches: dict, d_yhat: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every trainable parameter, keyed like named_parameters()."""
    if caches["mode"] != "train":
        raise ValueError("backward requires caches from a train-mode forward")
    grads: dict[str, np.ndarray] = {}
    d_cur, d_k, d_b = output_head_backward(caches["head"], d_yhat)
    grads["head.kernels"] = d_k
    grads["head.bias"] = d_b
    alpha = params.arch.leaky_relu_alpha
    for i in reversed(range(len(params.convlstm))):
        item = caches["items"][i]
        if "batchnorm" in item:
            d_cur = leaky_relu_backward(item["pre_act"], d_cur, alpha)
            d_cur, d_gamma, d_beta = batchnorm_backward(item["batchnorm"], d_cur)
            grads[f"batchnorm{i}.gamma"] = d_gamma
            grads[f"batchnorm{i}.beta"] = d_beta
        d_cur, _, g = convlstm_layer_backward(item["convlstm"], d_cur)
        grads[f"convlstm{i}.w_x"] = g.w_x
        grads[f"convlstm{i}.w_h"] = g.w_h
        grads[f"convlstm{i}.bias"] = g.bias
        if g.w_c is not None:
            grads[f"convlstm{i}.w_c"] = g.w_c
    return grads


def init_optimizer(params: ModelParams, rho: float = 0.95, eps: float = 1e-6,
                   lr_scale: float = 1.0) -> dict[str, AdadeltaState]:
    return {
        name: AdadeltaState.zeros_like(p, rho=rho, eps=eps, lr_scale=lr_scale)
        for name, p in params.named_parameters().items()
    }


def train_step(
    params: ModelParams,
    opt_state: dict[str, AdadeltaState],
    x: np.ndarray,
    y: np.ndarray,
) -> float:
    """One forward/backward/Adadelta step on a batch. Returns the pre-update
    mean BCE. A non-finite loss aborts the step with params untouched
    (running statistics included)."""
    if x.shape[0] == 0:
        raise ValueError("train_step: empty batch")
    bn_snapshot = [(bn.running_mean.copy(), bn.running_var.copy()) for bn in params.batchnorm]
    yhat, caches = forward(params, x, mode="train")
    report = bce_loss(yhat, y)
    if not np.isfinite(report.value):
        for bn, (rm, rv) in zip(params.batchnorm, bn_snapshot):
            bn.running_mean, bn.running_var = rm, rv
        raise NonFiniteError(f"train_step: non-finite loss {report.value}, step aborted")
    grads = backward(params, caches, report.gradient)
    for name, _, _ in params._slots(True):
        new = adadelta_step(params.named_parameters()[name], grads[name], opt_state[name])
        params.set_tensor(name, new)
    return report.value


def predict(params: ModelParams, x: np.ndarray, mode: str | None = None) -> np.ndarray:
    """Inference. Direct-mapped runs one infer-mode forward; autoregressive
    rolls the stack one frame at a time, feeding each predicted last frame
    back in, output_frames times."""
    mode = mode or params.arch.inference_mode
    if mode == "direct":
        yhat, _ = forward(params, x, mode="infer")
        return yhat
    if mode == "autoregressive":
        window = x.copy()
        frames = []
        for _ in range(params.arch.output_frames):
            yhat, _ = forward(params, window, mode="infer")
            nxt = yhat[:, -1:]
            frames.append(nxt)
            window = np.concatenate([window[:, 1:], nxt], axis=1)
        return np.concatenate(frames, axis=1)
    raise ValueError(f"unknown inference mode {mode!r}")


# ---------------------------------------------------------------------------
# Checkpoint format: magic "NCKP", u16 version, u32-length-prefixed JSON
# config block, then named tensors as (u32 name length, name bytes, u32 rank,
# rank x u32 dims, payload f32 LE row-major).


@dataclass
class Checkpoint:
    version: int
    arch: ArchitectureConfig
    params: ModelParams
    opt_state: dict[str, AdadeltaState] | None
    metadata: dict = field(default_factory=dict)


def _arch_to_dict(arch: ArchitectureConfig) -> dict:
    d = asdict(arch)
    d["convlstm_blocks"] = [list(b) for b in arch.convlstm_blocks]
    return d


def _arch_from_dict(d: dict) -> ArchitectureConfig:
    d = dict(d)
    d["convlstm_blocks"] = tuple(tuple(b) for b in d["convlstm_blocks"])
    return ArchitectureConfig(**d)


def _write_tensor(fh, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    fh.write(struct.pack("<I", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(f"checkpoint truncated: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_tensor(fh, first: bytes) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", first)
    name = _read_exact(fh, name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
    count = int(np.prod(dims)) if rank else 1
    payload = _read_exact(fh, 4 * count)
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return name, arr


def save_checkpoint(
    params: ModelParams,
    path,
    opt_state: dict[str, AdadeltaState] | None = None,
    metadata: dict | None = None,
):
    header = {
        "arch": _arch_to_dict(params.arch),
        "metadata": metadata or {},
        "has_opt": opt_state is not None,
    }
    if opt_state is not None:
        any_state = next(iter(opt_state.values()))
        header["opt"] = {
            "rho": any_state.rho,
            "eps": any_state.eps,
            "lr_scale": any_state.lr_scale,
        }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, arr in sorted(params.named_tensors().items()):
            _write_tensor(fh, name, arr)
        if opt_state is not None:
            for name in sorted(opt_state):
                _write_tensor(fh, f"opt/{name}/acc_grad", opt_state[name].acc_grad)
                _write_tensor(fh, f"opt/{name}/acc_update", opt_state[name].acc_update)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointMagicError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(f"unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4))
        header = json.loads(_read_exact(fh, blob_len).decode("utf-8"))
        tensors = {}
        while True:
            first = fh.read(4)
            if not first:
                break
            if len(first) != 4:
                raise CheckpointTruncatedError("checkpoint truncated inside tensor record")
            name, arr = _read_tensor(fh, first)
            tensors[name] = arr

    arch = _arch_from_dict(header["arch"])
    params = build_model(arch, seed=0)
    for name in params.named_tensors():
        if name not in tensors:
            raise CheckpointTruncatedError(f"checkpoint missing tensor {name!r}")
        params.set_tensor(name, tensors[name])

    opt_state = None
    if header.get("has_opt"):
        hyper = header.get("opt", {})
        opt_state = {}
        for name, p in params.named_parameters().items():
            ag = tensors.get(f"opt/{name}/acc_grad")
            au = tensors.get(f"opt/{name}/acc_update")
            if ag is None or au is None:
                raise CheckpointTruncatedError(f"checkpoint missing optimizer state for {name!r}")
            opt_state[name] = AdadeltaState(
                acc_grad=ag.astype(p.dtype),
                acc_update=au.astype(p.dtype),
                rho=hyper.get("rho", 0.95),
                eps=hyper.get("eps", 1e-6),
                lr_scale=hyper.get("lr_scale", 1.0),
            )
    return Checkpoint(
        version=CHECKPOINT_VERSION,
        arch=arch,
        params=params,
        opt_state=opt_state,
        metadata=header.get("metadata", {}),
    )
