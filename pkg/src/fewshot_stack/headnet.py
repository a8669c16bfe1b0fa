"""The trainable CNN-MLP head and its hand-derived backward pass.

Layer order, in exactly this sequence:

    3x3 same-padded conv (stride 1) -> ReLU -> batch norm -> global average
    pool over the S x S grid -> dense stack (ReLU on all but the last
    layer) -> softmax

Batch norm uses batch statistics in train mode (updating running statistics
with momentum) and the running statistics in eval mode. The loss is mean
categorical cross-entropy plus ``l2 * sum(w**2)`` over the conv and dense
weight matrices (biases and the BN affine parameters are not penalized).
Gradients are exact; the test suite checks every one of them against
central finite differences in 64-bit mode.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .errors import ConfigError, DataError, ValidationError
from .stacking import StackedTensor

HEAD_MAGIC = b"FSH1"
HEAD_VERSION = 1


@dataclass(frozen=True)
class HeadConfig:
    """Shape and regularization of the head (defaults match the reference setup)."""

    input_spatial: int
    input_channels: int
    conv_filters: int = 512
    conv_kernel: int = 3
    hidden_sizes: tuple[int, ...] = (512, 256, 32)
    n_classes: int = 5
    l2_lambda: float = 0.5
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        sizes = (
            self.input_spatial,
            self.input_channels,
            self.conv_filters,
            self.n_classes,
            *self.hidden_sizes,
        )
        if any(int(s) <= 0 for s in sizes):
            raise ConfigError(f"all sizes must be positive: {self}")
        if self.conv_kernel != 3:
            raise ConfigError("only the 3x3 same-padded convolution is supported")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be >= 0")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    @property
    def dense_dims(self) -> tuple[int, ...]:
        """Layer widths of the MLP, input (= conv filters) through output."""
        return (self.conv_filters, *self.hidden_sizes, self.n_classes)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 300
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    precision: int = 32  # 32 or 64; 64-bit exists so finite differences are meaningful

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64


@dataclass
class HeadParams:
    """All head parameters; running BN statistics are state, not trainables."""

    conv_w: np.ndarray  # (3, 3, C, F)
    conv_b: np.ndarray  # (F,)
    bn_gamma: np.ndarray  # (F,)
    bn_beta: np.ndarray  # (F,)
    bn_running_mean: np.ndarray  # (F,)
    bn_running_var: np.ndarray  # (F,)
    dense_w: list[np.ndarray] = field(default_factory=list)  # (in, out) each
    dense_b: list[np.ndarray] = field(default_factory=list)  # (out,) each

    def trainables(self) -> dict[str, np.ndarray]:
        """Name -> array view of every trainable parameter, in a fixed order."""
        out = {
            "conv_w": self.conv_w,
            "conv_b": self.conv_b,
            "bn_gamma": self.bn_gamma,
            "bn_beta": self.bn_beta,
        }
        for i, (w, b) in enumerate(zip(self.dense_w, self.dense_b)):
            out[f"dense_{i}_w"] = w
            out[f"dense_{i}_b"] = b
        return out

    def weight_matrices(self) -> list[np.ndarray]:
        """The arrays the L2 penalty applies to (conv + dense weights only)."""
        return [self.conv_w, *self.dense_w]

    @property
    def dtype(self):
        return self.conv_w.dtype

    def copy(self) -> "HeadParams":
        return HeadParams(
            conv_w=self.conv_w.copy(),
            conv_b=self.conv_b.copy(),
            bn_gamma=self.bn_gamma.copy(),
            bn_beta=self.bn_beta.copy(),
            bn_running_mean=self.bn_running_mean.copy(),
            bn_running_var=self.bn_running_var.copy(),
            dense_w=[w.copy() for w in self.dense_w],
            dense_b=[b.copy() for b in self.dense_b],
        )


def init_params(config: HeadConfig, rng: np.random.Generator, dtype=np.float32) -> HeadParams:
    """He-normal weights (std = sqrt(2/fan_in)), zero biases, identity BN."""
    c, f = config.input_channels, config.conv_filters
    k = config.conv_kernel
    conv_std = np.sqrt(2.0 / (k * k * c))
    conv_w = (rng.standard_normal((k, k, c, f)) * conv_std).astype(dtype)
    dense_w, dense_b = [], []
    dims = config.dense_dims
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / d_in)
        dense_w.append((rng.standard_normal((d_in, d_out)) * std).astype(dtype))
        dense_b.append(np.zeros(d_out, dtype=dtype))
    return HeadParams(
        conv_w=conv_w,
        conv_b=np.zeros(f, dtype=dtype),
        bn_gamma=np.ones(f, dtype=dtype),
        bn_beta=np.zeros(f, dtype=dtype),
        bn_running_mean=np.zeros(f, dtype=dtype),
        bn_running_var=np.ones(f, dtype=dtype),
        dense_w=dense_w,
        dense_b=dense_b,
    )


def count_params(config: HeadConfig) -> dict[str, int]:
    """Exact per-layer scalar counts.

    ``bn`` counts the trainable gamma/beta pair; ``bn_state`` the running
    statistics (summary tables conventionally report their sum for the BN
    layer). ``total_trainable`` excludes ``bn_state``.
    """
    k, c, f = config.conv_kernel, config.input_channels, config.conv_filters
    counts: dict[str, int] = {"conv": k * k * c * f + f, "bn": 2 * f, "bn_state": 2 * f}
    dims = config.dense_dims
    n_dense = len(dims) - 1
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        name = "dense_out" if i == n_dense - 1 else f"dense_{i}"
        counts[name] = d_in * d_out + d_out
    counts["total_trainable"] = sum(
        v for k_, v in counts.items() if k_ not in ("bn_state", "total_trainable")
    )
    return counts


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def as_batch(batch, config: HeadConfig, dtype) -> np.ndarray:
    """Accept (B, S, S, C) arrays or sequences of StackedTensor."""
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        tensors = list(batch)
        if not tensors:
            raise ValidationError("empty batch")
        x = np.stack(
            [t.data if isinstance(t, StackedTensor) else np.asarray(t) for t in tensors]
        )
    s, c = config.input_spatial, config.input_channels
    if x.ndim != 4 or x.shape[1:] != (s, s, c):
        raise ValidationError(
            f"batch shape {x.shape} does not match head input ({s}, {s}, {c})"
        )
    return np.ascontiguousarray(x, dtype=dtype)


def forward(config: HeadConfig, params: HeadParams, batch, mode: str = "train"):
    """Run the head; returns (probs (B, N), cache for backward).

    Train mode uses batch statistics for BN and updates the running
    statistics in place on ``params``; eval mode is side-effect free.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    dtype = params.dtype
    x = as_batch(batch, config, dtype)
    b = x.shape[0]
    if mode == "train" and b < 2:
        raise ValidationError("train mode needs batch size >= 2 for batch statistics")
    s, f = config.input_spatial, config.conv_filters

    cols = backends.im2col3x3(x)  # (B*S*S, 9C)
    z = cols @ params.conv_w.reshape(-1, f) + params.conv_b
    z = z.reshape(b, s, s, f)
    a = np.maximum(z, 0.0)

    if mode == "train":
        mean = a.mean(axis=(0, 1, 2))
        var = a.var(axis=(0, 1, 2))  # population variance
        m = config.bn_momentum
        params.bn_running_mean *= m
        params.bn_running_mean += (1.0 - m) * mean
        params.bn_running_var *= m
        params.bn_running_var += (1.0 - m) * var
    else:
        mean = params.bn_running_mean
        var = params.bn_running_var
    inv_std = 1.0 / np.sqrt(var + config.bn_epsilon)
    xhat = (a - mean) * inv_std
    bn_out = params.bn_gamma * xhat + params.bn_beta

    pooled = bn_out.mean(axis=(1, 2))  # (B, F)

    h = pooled
    dense_inputs = []  # input to each dense layer
    pre_acts = []  # pre-activation of each dense layer
    n_dense = len(params.dense_w)
    for i, (w, bias) in enumerate(zip(params.dense_w, params.dense_b)):
        dense_inputs.append(h)
        zi = h @ w + bias
        pre_acts.append(zi)
        h = zi if i == n_dense - 1 else np.maximum(zi, 0.0)
    probs = softmax(h)

    cache = {
        "mode": mode,
        "batch_size": b,
        "cols": cols,
        "conv_z": z,
        "xhat": xhat,
        "inv_std": inv_std,
        "dense_inputs": dense_inputs,
        "pre_acts": pre_acts,
        "probs": probs,
    }
    return probs, cache


def loss_value(probs, labels, params: HeadParams, l2_lambda: float) -> float:
    """Mean CCE (probabilities clamped at 1e-12 inside the log) + L2 penalty."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape[0] != labels.shape[0]:
        raise ValidationError("probs and labels lengths differ")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValidationError(f"label out of range for {probs.shape[1]} classes")
    picked = probs[np.arange(len(labels)), labels]
    cce = float(np.mean(-np.log(np.maximum(picked, 1e-12))))
    reg = 0.0
    if l2_lambda > 0:
        reg = l2_lambda * float(
            sum(np.dot(w.ravel(), w.ravel()) for w in params.weight_matrices())
        )
    return cce + reg


def backward(config: HeadConfig, cache, labels, params: HeadParams, l2_lambda: float):
    """Exact gradients of the training loss w.r.t. every trainable parameter."""
    if cache.get("mode") != "train":
        raise ValidationError("backward needs a cache from a train-mode forward")
    labels = np.asarray(labels)
    b = cache["batch_size"]
    if labels.shape[0] != b:
        raise ValidationError("labels do not match the cached batch")
    s, f = config.input_spatial, config.conv_filters
    dtype = params.dtype
    probs = cache["probs"]

    # softmax + mean CCE
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    grads: dict[str, np.ndarray] = {}
    dh = dlogits
    n_dense = len(params.dense_w)
    for i in range(n_dense - 1, -1, -1):
        if i != n_dense - 1:
            dh = dh * (cache["pre_acts"][i] > 0)
        h_in = cache["dense_inputs"][i]
        grads[f"dense_{i}_w"] = h_in.T @ dh
        grads[f"dense_{i}_b"] = dh.sum(axis=0)
        dh = dh @ params.dense_w[i].T

    # global average pool spreads the gradient uniformly over the grid
    dbn = np.broadcast_to(dh[:, None, None, :] / (s * s), (b, s, s, f))

    xhat, inv_std = cache["xhat"], cache["inv_std"]
    grads["bn_gamma"] = (dbn * xhat).sum(axis=(0, 1, 2))
    grads["bn_beta"] = dbn.sum(axis=(0, 1, 2))
    dxhat = dbn * params.bn_gamma
    n = b * s * s
    da = (inv_std / n) * (
        n * dxhat
        - dxhat.sum(axis=(0, 1, 2))
        - xhat * (dxhat * xhat).sum(axis=(0, 1, 2))
    )

    dz = (da * (cache["conv_z"] > 0)).reshape(b * s * s, f).astype(dtype, copy=False)
    grads["conv_w"] = (cache["cols"].T @ dz).reshape(params.conv_w.shape)
    grads["conv_b"] = dz.sum(axis=0)

    if l2_lambda > 0:
        grads["conv_w"] += 2.0 * l2_lambda * params.conv_w
        for i, w in enumerate(params.dense_w):
            grads[f"dense_{i}_w"] += 2.0 * l2_lambda * w

    return {k: np.asarray(v, dtype=dtype) for k, v in grads.items()}


def predict(config: HeadConfig, params: HeadParams, inputs):
    """Eval-mode forward; argmax ties break toward the lowest class index."""
    probs, _ = forward(config, params, inputs, mode="eval")
    return probs, np.argmax(probs, axis=1)


def train_head(support, head_config: HeadConfig, train_config: TrainConfig):
    """Train from scratch on one support set, full batch, for exactly
    ``train_config.epochs`` epochs. Returns (params, per-epoch loss history).

    The whole support set is one batch per epoch, so gradients are
    order-invariant sums and "epochs" counts optimizer steps.
    """
    from .optim import AdamState, adam_step  # local import to avoid a cycle

    pairs = list(support)
    if not pairs:
        raise DataError("empty support set")
    xs, ys = zip(*pairs)
    y = np.asarray(ys, dtype=np.int64)
    x = as_batch(list(xs), head_config, train_config.dtype)
    missing = set(range(head_config.n_classes)) - set(int(v) for v in y)
    if missing:
        raise DataError(f"support set is missing class indices {sorted(missing)}")
    if y.min() < 0 or y.max() >= head_config.n_classes:
        raise ValidationError("support label out of range")

    rng = np.random.default_rng(train_config.seed)
    params = init_params(head_config, rng, dtype=train_config.dtype)
    state = AdamState.for_params(params)
    history: list[float] = []
    lam = head_config.l2_lambda
    for _ in range(train_config.epochs):
        probs, cache = forward(head_config, params, x, mode="train")
        history.append(loss_value(probs, y, params, lam))
        grads = backward(head_config, cache, y, params, lam)
        adam_step(
            state,
            params,
            grads,
            lr=train_config.learning_rate,
            beta1=train_config.adam_beta1,
            beta2=train_config.adam_beta2,
            eps=train_config.adam_epsilon,
        )
    return params, history


# -- serialization ---------------------------------------------------------

_ARRAY_ORDER = ("conv_w", "conv_b", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var")


def save_head(config: HeadConfig, params: HeadParams, path) -> None:
    """Bit-exact container: magic, version, config JSON, raw LE arrays."""
    precision = 32 if params.dtype == np.float32 else 64
    meta = {
        "input_spatial": config.input_spatial,
        "input_channels": config.input_channels,
        "conv_filters": config.conv_filters,
        "conv_kernel": config.conv_kernel,
        "hidden_sizes": list(config.hidden_sizes),
        "n_classes": config.n_classes,
        "l2_lambda": config.l2_lambda,
        "bn_epsilon": config.bn_epsilon,
        "bn_momentum": config.bn_momentum,
        "precision": precision,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    le = "<f4" if precision == 32 else "<f8"
    out = bytearray()
    out += HEAD_MAGIC
    out += struct.pack("<I", HEAD_VERSION)
    out += struct.pack("<I", len(blob))
    out += blob
    arrays = [getattr(params, name) for name in _ARRAY_ORDER]
    for w, bias in zip(params.dense_w, params.dense_b):
        arrays += [w, bias]
    for arr in arrays:
        out += np.ascontiguousarray(arr, dtype=le).tobytes()
    with open(path, "wb") as fh:
        fh.write(out)


def load_head(path):
    """Inverse of :func:`save_head`; returns (config, params)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != HEAD_MAGIC:
        raise ValidationError(f"bad head magic {buf[:4]!r}")
    version = struct.unpack("<I", buf[4:8])[0]
    if version != HEAD_VERSION:
        raise ValidationError(f"unsupported head version {version}")
    (meta_len,) = struct.unpack("<I", buf[8:12])
    meta = json.loads(buf[12 : 12 + meta_len].decode("utf-8"))
    precision = meta.pop("precision")
    config = HeadConfig(
        input_spatial=meta["input_spatial"],
        input_channels=meta["input_channels"],
        conv_filters=meta["conv_filters"],
        conv_kernel=meta["conv_kernel"],
        hidden_sizes=tuple(meta["hidden_sizes"]),
        n_classes=meta["n_classes"],
        l2_lambda=meta["l2_lambda"],
        bn_epsilon=meta["bn_epsilon"],
        bn_momentum=meta["bn_momentum"],
    )
    le = "<f4" if precision == 32 else "<f8"
    itemsize = 4 if precision == 32 else 8
    pos = 12 + meta_len

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        arr = np.frombuffer(buf, dtype=le, count=n, offset=pos).reshape(shape).copy()
        pos += n * itemsize
        return arr

    k, c, f = config.conv_kernel, config.input_channels, config.conv_filters
    conv_w = take((k, k, c, f))
    conv_b = take((f,))
    bn = [take((f,)) for _ in range(4)]
    dense_w, dense_b = [], []
    dims = config.dense_dims
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        dense_w.append(take((d_in, d_out)))
        dense_b.append(take((d_out,)))
    if pos != len(buf):
        raise ValidationError("trailing bytes in head file")
    params = HeadParams(conv_w, conv_b, bn[0], bn[1], bn[2], bn[3], dense_w, dense_b)
    return config, params


def with_dims(dim: int, spatial: int, **overrides) -> HeadConfig:
    """Build a HeadConfig for a joined feature dim at grid side S."""
    from .errors import DivisibilityError

    if spatial <= 0 or dim % (spatial * spatial) != 0:
        raise DivisibilityError(
            f"feature dim {dim} is not divisible by {spatial}x{spatial}"
        )
    return HeadConfig(
        input_spatial=spatial, input_channels=dim // (spatial * spatial), **overrides
    )
