"""Classifier families: linear SVM wrapper, MLP, and 1D CNN.

All math is float64 numpy. Dense weights are stored (in_dim, out_dim) so a
forward step is ``x @ W + b``; conv weights are (out_ch, in_ch, filter) with
``out[o, t] = b[o] + sum_{i,k} W[o, i, k] * x[i, t*stride + k]`` (valid
padding). The forward pass records an activation trace (one record per
architecture layer) for the relevance backward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import N_INPUTS

MODEL_KINDS = ("svm", "mlp", "cnn")
MLP_HIDDEN = 768
CNN_CONV_CONFIG = ((8, 2, 24), (8, 2, 24), (6, 3, 48))  # (filter, stride, out channels)


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | conv1d | relu | softmax | flatten
    in_dim: int = 0
    out_dim: int = 0
    filter_size: int = 0
    stride: int = 0
    in_channels: int = 0
    out_channels: int = 0

    def out_length(self, in_length: int) -> int:
        """Valid-padding conv output length for a given input length."""
        if self.kind != "conv1d":
            raise ValueError("out_length is only defined for conv1d layers")
        if in_length < self.filter_size:
            raise ValueError(
                f"input length {in_length} shorter than filter {self.filter_size}"
            )
        return (in_length - self.filter_size) // self.stride + 1


def dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec(kind="dense", in_dim=in_dim, out_dim=out_dim)


def conv1d(filter_size: int, stride: int, in_channels: int, out_channels: int) -> LayerSpec:
    return LayerSpec(kind="conv1d", filter_size=filter_size, stride=stride,
                     in_channels=in_channels, out_channels=out_channels)


def relu() -> LayerSpec:
    return LayerSpec(kind="relu")


def softmax() -> LayerSpec:
    return LayerSpec(kind="softmax")


def flatten() -> LayerSpec:
    return LayerSpec(kind="flatten")


def mlp_arch(n_classes: int) -> tuple[LayerSpec, ...]:
    return (
        dense(N_INPUTS, MLP_HIDDEN), relu(),
        dense(MLP_HIDDEN, MLP_HIDDEN), relu(),
        dense(MLP_HIDDEN, n_classes), softmax(),
    )


def cnn_arch(n_classes: int) -> tuple[LayerSpec, ...]:
    layers: list[LayerSpec] = []
    length = N_INPUTS
    channels = 1
    for filt, stride, out_ch in CNN_CONV_CONFIG:
        spec = conv1d(filt, stride, channels, out_ch)
        layers.extend([spec, relu()])
        length = spec.out_length(length)
        channels = out_ch
    layers.append(flatten())
    layers.append(dense(channels * length, n_classes))
    layers.append(softmax())
    return tuple(layers)


def svm_arch(n_classes: int) -> tuple[LayerSpec, ...]:
    heads = 1 if n_classes == 2 else n_classes
    return (dense(N_INPUTS, heads),)


@dataclass
class ModelParams:
    """Layer-structured parameters; treat as immutable once trained."""

    model_kind: str
    n_classes: int
    arch: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray | None, ...]
    biases: tuple[np.ndarray | None, ...]

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if len(self.weights) != len(self.arch) or len(self.biases) != len(self.arch):
            raise ValueError("weights/biases must align with the architecture")

    def copy(self) -> "ModelParams":
        return replace(
            self,
            weights=tuple(None if w is None else w.copy() for w in self.weights),
            biases=tuple(None if b is None else b.copy() for b in self.biases),
        )


@dataclass(frozen=True)
class LayerTrace:
    spec: LayerSpec
    x: np.ndarray  # layer input
    z: np.ndarray  # layer output (pre-activation for dense/conv)


@dataclass(frozen=True)
class TrainSchedule:
    """Iteration budget, batch size, and the stepwise learning-rate stages."""

    total_iters: int = 30_000
    batch_size: int = 5
    boundaries: tuple[int, ...] = (10_000, 20_000)
    rates: tuple[float, ...] = (5e-3, 1e-3, 5e-4)

    def __post_init__(self):
        if len(self.rates) != len(self.boundaries) + 1:
            raise ValueError("need one rate per stage (boundaries + 1)")
        if any(b <= 0 for b in self.boundaries) or list(self.boundaries) != sorted(self.boundaries):
            raise ValueError("boundaries must be positive and increasing")
        if any(r2 > r1 for r1, r2 in zip(self.rates, self.rates[1:])):
            raise ValueError("learning rate must be nonincreasing across stages")

    def lr_at(self, iteration: int) -> float:
        """Learning rate for a 0-based iteration index."""
        for boundary, rate in zip(self.boundaries, self.rates):
            if iteration < boundary:
                return rate
        return self.rates[-1]


def paper_schedule() -> TrainSchedule:
    return TrainSchedule()


def reduced_schedule(total_iters: int) -> TrainSchedule:
    """Same three-stage shape, proportionally shorter stages."""
    third = max(total_iters // 3, 1)
    return TrainSchedule(total_iters=total_iters,
                         boundaries=(third, 2 * third),
                         rates=(5e-3, 1e-3, 5e-4))


# ---------------------------------------------------------------------------
# Initialization


def init_params(arch: tuple[LayerSpec, ...], rng: np.random.Generator,
                model_kind: str, n_classes: int) -> ModelParams:
    """Weights ~ Normal(0, m^(-1/2)) with m the fan-in per output unit; biases 0."""
    weights: list[np.ndarray | None] = []
    biases: list[np.ndarray | None] = []
    for spec in arch:
        if spec.kind == "dense":
            sigma = spec.in_dim ** -0.5
            weights.append(rng.normal(0.0, sigma, size=(spec.in_dim, spec.out_dim)))
            biases.append(np.zeros(spec.out_dim))
        elif spec.kind == "conv1d":
            m = spec.filter_size * spec.in_channels
            sigma = m ** -0.5
            weights.append(rng.normal(0.0, sigma,
                                      size=(spec.out_channels, spec.in_channels,
                                            spec.filter_size)))
            biases.append(np.zeros(spec.out_channels))
        else:
            weights.append(None)
            biases.append(None)
    return ModelParams(model_kind=model_kind, n_classes=n_classes, arch=arch,
                       weights=tuple(weights), biases=tuple(biases))


# ---------------------------------------------------------------------------
# Forward pass


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def conv1d_valid(x: np.ndarray, spec: LayerSpec, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid 1D convolution of (channels, length) input; channels' x length' out."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != spec.in_channels:
        raise ValueError(f"expected ({spec.in_channels}, L) input, got {x.shape}")
    if x.shape[1] < spec.filter_size:
        raise ValueError(
            f"input length {x.shape[1]} shorter than filter size {spec.filter_size}"
        )
    win = np.lib.stride_tricks.sliding_window_view(x, spec.filter_size, axis=1)
    win = win[:, ::spec.stride, :]
    return np.einsum("oik,itk->ot", W, win) + b[:, None]


def forward(params: ModelParams, v: np.ndarray) -> tuple[np.ndarray, list[LayerTrace]]:
    """Run one input through the network, recording a per-layer trace.

    Returns (output, trace): class probabilities for softmax-headed models,
    margins for the linear SVM. The trace has one record per arch layer.
    """
    x = np.asarray(getattr(v, "values", v), dtype=np.float64)
    if x.shape != (N_INPUTS,):
        raise ValueError(f"expected a {N_INPUTS}-value input, got shape {x.shape}")
    trace: list[LayerTrace] = []
    current: np.ndarray = x
    for spec, W, b in zip(params.arch, params.weights, params.biases):
        if spec.kind == "dense":
            if current.ndim != 1 or current.shape[0] != spec.in_dim:
                raise ValueError(
                    f"dense layer expected {spec.in_dim} inputs, got {current.shape}"
                )
            z = current @ W + b
        elif spec.kind == "conv1d":
            if current.ndim == 1:
                current = current.reshape(spec.in_channels, -1)
            z = conv1d_valid(current, spec, W, b)
        elif spec.kind == "relu":
            z = np.maximum(current, 0.0)
        elif spec.kind == "flatten":
            z = current.reshape(-1)
        elif spec.kind == "softmax":
            z = _softmax(current)
        else:
            raise ValueError(f"unknown layer kind {spec.kind!r}")
        trace.append(LayerTrace(spec=spec, x=current, z=z))
        current = z
    return current, trace


def predict(params: ModelParams, v: np.ndarray) -> int:
    """Predicted class index; exact score ties break to the lowest index."""
    out, _ = forward(params, v)
    if params.model_kind == "svm" and params.n_classes == 2:
        return 1 if out[0] > 0.0 else 0
    return int(np.argmax(out))


def predict_matrix(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Vectorized predictions for an (n, 606) matrix."""
    if params.model_kind == "svm":
        W, b = params.weights[0], params.biases[0]
        margins = X @ W + b
        if params.n_classes == 2:
            return (margins[:, 0] > 0.0).astype(int)
        return np.argmax(margins, axis=1)
    caches = _forward_batch(params, X)
    return np.argmax(caches[-1]["z"], axis=1)


# ---------------------------------------------------------------------------
# Batched forward/backward for training


def _conv_batch(x: np.ndarray, spec: LayerSpec, W: np.ndarray, b: np.ndarray):
    """im2col convolution: one BLAS matmul per layer.

    Returns (z, col) with z shaped (batch, out_ch, out_len) and col the
    (batch*out_len, in_ch*filter) patch matrix reused by the backward pass.
    """
    batch = x.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(x, spec.filter_size, axis=2)
    win = win[:, :, ::spec.stride, :]  # (batch, in_ch, out_len, filter)
    out_len = win.shape[2]
    col = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(
        batch * out_len, spec.in_channels * spec.filter_size)
    w_mat = W.reshape(spec.out_channels, -1)
    z = (col @ w_mat.T).reshape(batch, out_len, spec.out_channels)
    z = z.transpose(0, 2, 1) + b[None, :, None]
    return z, col


def _conv_backward(dZ: np.ndarray, col: np.ndarray, W: np.ndarray, stride: int,
                   in_length: int):
    """Gradients of an im2col conv layer: (dW, db, dX)."""
    batch, out_ch, out_len = dZ.shape
    in_ch, filt = W.shape[1], W.shape[2]
    dz_mat = np.ascontiguousarray(dZ.transpose(0, 2, 1)).reshape(
        batch * out_len, out_ch)
    dW = (dz_mat.T @ col).reshape(out_ch, in_ch, filt)
    db = dz_mat.sum(axis=0)
    dcol = (dz_mat @ W.reshape(out_ch, -1)).reshape(batch, out_len, in_ch, filt)
    dX = np.zeros((batch, in_ch, in_length))
    stop = stride * (out_len - 1) + 1
    for k in range(filt):
        dX[:, :, k:k + stop:stride] += dcol[:, :, :, k].transpose(0, 2, 1)
    return dW, db, dX


def _forward_batch(params: ModelParams, X: np.ndarray) -> list[dict]:
    caches: list[dict] = []
    current = np.asarray(X, dtype=np.float64)
    for spec, W, b in zip(params.arch, params.weights, params.biases):
        cache: dict = {"spec": spec, "x": current}
        if spec.kind == "dense":
            z = current @ W + b
        elif spec.kind == "conv1d":
            if current.ndim == 2:
                current = current.reshape(current.shape[0], spec.in_channels, -1)
                cache["x"] = current
            z, col = _conv_batch(current, spec, W, b)
            cache["col"] = col
        elif spec.kind == "relu":
            z = np.maximum(current, 0.0)
        elif spec.kind == "flatten":
            z = current.reshape(current.shape[0], -1)
        elif spec.kind == "softmax":
            z = _softmax(current)
        else:
            raise ValueError(f"unknown layer kind {spec.kind!r}")
        cache["z"] = z
        caches.append(cache)
        current = z
    return caches


def l1_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean absolute difference between softmax outputs and one-hot targets."""
    return float(np.abs(probs - targets).mean())


def loss_and_grads(params: ModelParams, X: np.ndarray, Y: np.ndarray):
    """L1-through-softmax loss and its gradients for every parameterized layer.

    The subgradient of |p - y| at exact zeros of the residual is taken as 0
    (np.sign convention). Returns (loss, grads) with grads aligned to arch as
    (dW, db) pairs or None.
    """
    caches = _forward_batch(params, X)
    probs = caches[-1]["z"]
    loss = l1_loss(probs, Y)
    batch = X.shape[0]
    grad_out = np.sign(probs - Y) / (batch * params.n_classes)

    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(params.arch)
    delta = grad_out
    for idx in range(len(params.arch) - 1, -1, -1):
        cache = caches[idx]
        spec = cache["spec"]
        if spec.kind == "softmax":
            p = cache["z"]
            delta = p * (delta - (delta * p).sum(axis=1, keepdims=True))
        elif spec.kind == "dense":
            x = cache["x"]
            dW = x.T @ delta
            db = delta.sum(axis=0)
            grads[idx] = (dW, db)
            delta = delta @ params.weights[idx].T
        elif spec.kind == "relu":
            delta = delta * (cache["x"] > 0.0)
        elif spec.kind == "flatten":
            delta = delta.reshape(cache["x"].shape)
        elif spec.kind == "conv1d":
            dW, db, delta = _conv_backward(delta, cache["col"], params.weights[idx],
                                           spec.stride, cache["x"].shape[2])
            grads[idx] = (dW, db)
    return loss, grads


def sgd_train(params: ModelParams, X: np.ndarray, Y: np.ndarray,
              schedule: TrainSchedule, rng: np.random.Generator) -> ModelParams:
    """Plain SGD on the L1-softmax loss; batches drawn uniformly with replacement.

    Runs exactly ``schedule.total_iters`` updates and is a pure function of
    (params, data, schedule, rng state).
    """
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    if Y.shape != (len(X), params.n_classes):
        raise ValueError(f"targets must be one-hot with shape ({len(X)}, {params.n_classes})")
    out = params.copy()
    n = len(X)
    for iteration in range(schedule.total_iters):
        lr = schedule.lr_at(iteration)
        idx = rng.integers(0, n, size=schedule.batch_size)
        _, grads = loss_and_grads(out, X[idx], Y[idx])
        for layer, grad in enumerate(grads):
            if grad is None:
                continue
            dW, db = grad
            W, b = out.weights[layer], out.biases[layer]
            W -= lr * dW
            b -= lr * db
    return out


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(labels), n_classes))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest + raw little-endian float64 blobs


def save_model(params: ModelParams, out_dir, extra: dict | None = None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for idx, (W, b) in enumerate(zip(params.weights, params.biases)):
        for name, tensor in (("weight", W), ("bias", b)):
            if tensor is None:
                continue
            fname = f"layer{idx:02d}_{name}.f64"
            with open(out_dir / fname, "wb") as fh:
                fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
            tensors[f"layer{idx:02d}.{name}"] = {
                "file": fname,
                "shape": list(tensor.shape),
                "dtype": "<f8",
            }
    manifest = {
        "model_kind": params.model_kind,
        "n_classes": params.n_classes,
        "arch": [vars(spec) for spec in params.arch],
        "tensors": tensors,
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "model.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(in_dir) -> ModelParams:
    in_dir = Path(in_dir)
    with open(in_dir / "model.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    arch = tuple(LayerSpec(**spec) for spec in manifest["arch"])
    weights: list[np.ndarray | None] = [None] * len(arch)
    biases: list[np.ndarray | None] = [None] * len(arch)
    for key, info in manifest["tensors"].items():
        layer_name, kind = key.split(".")
        idx = int(layer_name.replace("layer", ""))
        raw = (in_dir / info["file"]).read_bytes()
        tensor = np.frombuffer(raw, dtype="<f8").reshape(info["shape"]).astype(np.float64)
        if kind == "weight":
            weights[idx] = tensor
        else:
            biases[idx] = tensor
    return ModelParams(
        model_kind=manifest["model_kind"],
        n_classes=manifest["n_classes"],
        arch=arch,
        weights=tuple(weights),
        biases=tuple(biases),
    )
