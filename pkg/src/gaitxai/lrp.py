"""Layer-wise relevance propagation: epsilon rule, flat rule, aggregation.

The epsilon rule redistributes a neuron's relevance over its inputs in
proportion to their contributions z_ij = x_i * W_ij, stabilized by
``eps * sign(z_j)`` with sign(0) := +1. The share claimed by the bias and by
the stabilizer is absorbed at the neuron and logged per layer so that

    sum(R_in) + absorbed.total == sum(R_out)

holds to float precision, making conservation audits exact. ReLU and flatten
layers pass relevance through unchanged; the CNN's first (input) conv layer
uses the flat rule, which ignores x and W and splits relevance uniformly
over each neuron's receptive field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import N_INPUTS
from .models import LayerSpec, ModelParams, forward

DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class Absorbed:
    """Relevance a layer kept back from its inputs (bias and epsilon shares)."""

    layer: int
    bias: float
    epsilon: float

    @property
    def total(self) -> float:
        return self.bias + self.epsilon


@dataclass(frozen=True)
class RelevanceMap:
    """Per-input relevance for one trial, attributed to ``target_class``."""

    values: np.ndarray
    target_class: int
    subject_id: str = ""
    session_id: str = ""
    score: float = 0.0
    absorbed: tuple[Absorbed, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (N_INPUTS,):
            raise ValueError(f"relevance map must have {N_INPUTS} values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("relevance map contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def absorbed_total(self) -> float:
        return float(sum(a.total for a in self.absorbed))


@dataclass(frozen=True)
class ClassRelevanceSummary:
    """Per-index means over all trials of one class."""

    target_class: int
    n_trials: int
    mean_signal: np.ndarray
    std_signal: np.ndarray
    mean_relevance: np.ndarray
    mean_abs_relevance: np.ndarray


def _stabilized(z: np.ndarray, eps: float) -> np.ndarray:
    if eps <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    return z + eps * np.where(z >= 0.0, 1.0, -1.0)


def lrp_epsilon_dense(x: np.ndarray, W: np.ndarray, b: np.ndarray,
                      r_out: np.ndarray, eps: float = DEFAULT_EPSILON,
                      layer: int = 0) -> tuple[np.ndarray, Absorbed]:
    """Epsilon rule through a dense layer with z = x @ W + b."""
    z = x @ W + b
    denom = _stabilized(z, eps)
    s = r_out / denom
    r_in = x * (W @ s)
    absorbed = Absorbed(layer=layer,
                        bias=float(b @ s),
                        epsilon=float((denom - z) @ s))
    return r_in, absorbed


def lrp_epsilon_conv(x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int,
                     r_out: np.ndarray, eps: float = DEFAULT_EPSILON,
                     layer: int = 0) -> tuple[np.ndarray, Absorbed]:
    """Epsilon rule through a valid conv layer, treated as a sparse linear map."""
    filter_size = W.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, filter_size, axis=1)
    win = win[:, ::stride, :]
    z = np.einsum("oik,itk->ot", W, win) + b[:, None]
    denom = _stabilized(z, eps)
    s = r_out / denom
    r_in = x * _conv_transpose(s, W, stride, x.shape[1])
    absorbed = Absorbed(layer=layer,
                        bias=float((b[:, None] * s).sum()),
                        epsilon=float(((denom - z) * s).sum()))
    return r_in, absorbed


def _conv_transpose(s: np.ndarray, W: np.ndarray, stride: int, in_length: int) -> np.ndarray:
    out_len = s.shape[1]
    acc = np.zeros((W.shape[1], in_length))
    stop = stride * (out_len - 1) + 1
    for k in range(W.shape[2]):
        acc[:, k:k + stop:stride] += np.einsum("ot,oi->it", s, W[:, :, k])
    return acc


def lrp_flat(r_out: np.ndarray, filter_size: int, stride: int,
             in_channels: int, in_length: int) -> np.ndarray:
    """Flat rule: split each neuron's relevance uniformly over its field.

    Independent of inputs and weights; conserves the relevance sum exactly.
    """
    field = filter_size * in_channels
    per_position = r_out.sum(axis=0) / field
    r_in = np.zeros((in_channels, in_length))
    out_len = r_out.shape[1]
    stop = stride * (out_len - 1) + 1
    for k in range(filter_size):
        r_in[:, k:k + stop:stride] += per_position
    return r_in


def _first_parameterized(arch: tuple[LayerSpec, ...]) -> int:
    for idx, spec in enumerate(arch):
        if spec.kind in ("dense", "conv1d"):
            return idx
    raise ValueError("architecture has no parameterized layer")


def _head_split_dense(x: np.ndarray, W: np.ndarray, b: np.ndarray,
                      r_out: np.ndarray, layer: int) -> tuple[np.ndarray, Absorbed]:
    """Exact proportional split of the output layer's relevance (no stabilizer).

    The decomposition starts from the target logit itself, so the head layer
    divides relevance by its own pre-activation exactly; stabilizing here
    would leak an absolute O(eps) share that is not proportional to the
    score. Zero pre-activations carry zero relevance.
    """
    z = x @ W + b
    s = np.zeros_like(r_out)
    np.divide(r_out, z, out=s, where=z != 0.0)
    r_in = x * (W @ s)
    return r_in, Absorbed(layer=layer, bias=float(b @ s), epsilon=0.0)


def explain_trial(params: ModelParams, v, target: int,
                  eps: float = DEFAULT_EPSILON) -> RelevanceMap:
    """Decompose the target class's pre-softmax score into input relevances.

    The output-layer relevance is initialized to the target logit (not the
    softmax probability) and propagated with the epsilon rule; the CNN's
    first conv layer uses the flat rule instead. For the linear SVM the map
    is R_i = x_i * w_i oriented toward the target class.
    """
    if eps <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    x = np.asarray(getattr(v, "values", v), dtype=np.float64)
    if not 0 <= target < params.n_classes:
        raise ValueError(f"target class {target} outside 0..{params.n_classes - 1}")
    subject = getattr(v, "subject_id", "")
    session = getattr(v, "session_id", "")

    if params.model_kind == "svm":
        W, b = params.weights[0], params.biases[0]
        if params.n_classes == 2:
            orient = 1.0 if target == 1 else -1.0
            w_col = orient * W[:, 0]
            bias = orient * float(b[0])
        else:
            w_col = W[:, target]
            bias = float(b[target])
        values = x * w_col
        score = float(values.sum() + bias)
        absorbed = (Absorbed(layer=0, bias=bias, epsilon=0.0),)
        return RelevanceMap(values=values, target_class=target, subject_id=subject,
                            session_id=session, score=score, absorbed=absorbed)

    _, trace = forward(params, x)
    softmax_idx = len(params.arch) - 1
    if params.arch[softmax_idx].kind != "softmax":
        raise ValueError("expected a softmax output head")
    logits = trace[softmax_idx].x
    score = float(logits[target])
    r = np.zeros_like(logits)
    r[target] = score

    flat_layer = _first_parameterized(params.arch) if params.model_kind == "cnn" else -1
    head_layer = softmax_idx - 1
    absorbed: list[Absorbed] = []
    for idx in range(softmax_idx - 1, -1, -1):
        spec = params.arch[idx]
        entry = trace[idx]
        if spec.kind == "dense":
            if idx == head_layer:
                r, a = _head_split_dense(entry.x, params.weights[idx],
                                         params.biases[idx], r, layer=idx)
            else:
                r, a = lrp_epsilon_dense(entry.x, params.weights[idx],
                                         params.biases[idx], r, eps, layer=idx)
            absorbed.append(a)
        elif spec.kind == "conv1d":
            if idx == flat_layer:
                r = lrp_flat(r, spec.filter_size, spec.stride, spec.in_channels,
                             entry.x.shape[1])
            else:
                r, a = lrp_epsilon_conv(entry.x, params.weights[idx],
                                        params.biases[idx], spec.stride, r, eps,
                                        layer=idx)
                absorbed.append(a)
        elif spec.kind == "relu":
            pass
        elif spec.kind == "flatten":
            r = r.reshape(entry.x.shape)
        else:
            raise ValueError(f"unexpected layer kind {spec.kind!r}")
    values = r.reshape(-1)
    return RelevanceMap(values=values, target_class=target, subject_id=subject,
                        session_id=session, score=score,
                        absorbed=tuple(reversed(absorbed)))


def class_average(maps: list[RelevanceMap], signals) -> ClassRelevanceSummary:
    """Mean/std curves over all trials of one class; std uses ddof=0."""
    if not maps:
        raise ValueError("class_average needs at least one relevance map")
    targets = {m.target_class for m in maps}
    if len(targets) != 1:
        raise ValueError(f"relevance maps mix target classes: {sorted(targets)}")
    sig = np.stack([np.asarray(getattr(s, "values", s), dtype=np.float64)
                    for s in signals])
    if len(sig) != len(maps):
        raise ValueError("signals and relevance maps must be aligned")
    rel = np.stack([m.values for m in maps])
    return ClassRelevanceSummary(
        target_class=maps[0].target_class,
        n_trials=len(maps),
        mean_signal=sig.mean(axis=0),
        std_signal=sig.std(axis=0),
        mean_relevance=rel.mean(axis=0),
        mean_abs_relevance=np.abs(rel).mean(axis=0),
    )


def total_relevance(summary_a: ClassRelevanceSummary,
                    summary_b: ClassRelevanceSummary,
                    mode: str = "abs_of_mean") -> np.ndarray:
    """Per-index total relevance of a binary task.

    ``abs_of_mean`` (default): |mean relevance of A| + |mean relevance of B|.
    ``mean_of_abs``: the alternative reading, mean over trials of |R| per
    class, summed. Figures record which mode was used.
    """
    if mode == "abs_of_mean":
        return np.abs(summary_a.mean_relevance) + np.abs(summary_b.mean_relevance)
    if mode == "mean_of_abs":
        return summary_a.mean_abs_relevance + summary_b.mean_abs_relevance
    raise ValueError(f"unknown total relevance mode {mode!r}")
