"""Differentiable kernels built on DiffArray: activations, norms, softmax, attention."""

import math
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError, DimensionError
from .diffarray import DiffArray, add, as_diff, matmul, reshape, swapaxes, unbroadcast

# added to logits of masked positions; exp() of it underflows to exactly 0
MASK_VALUE = -1e9
_GELU_C = math.sqrt(2.0 / math.pi)


def exp(x: DiffArray) -> DiffArray:
    out = np.exp(x.values)
    return DiffArray.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: DiffArray) -> DiffArray:
    return DiffArray.from_op(np.log(x.values), (x,), lambda g: (g / x.values,), "log")


def tanh(x: DiffArray) -> DiffArray:
    out = np.tanh(x.values)
    return DiffArray.from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: DiffArray) -> DiffArray:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.values))
    return DiffArray.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def gelu(x: DiffArray) -> DiffArray:
    """GELU, tanh approximation."""
    v = x.values
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def _backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return DiffArray.from_op(out, (x,), _backward, "gelu")


def l2_norm(x: DiffArray, axis: int = -1, keepdims: bool = False) -> DiffArray:
    """Euclidean norm along ``axis``; the gradient at a zero vector is zero."""
    norm = np.sqrt(np.sum(x.values ** 2, axis=axis, keepdims=True))

    def _backward(g):
        g = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(norm > 0, norm, 1.0)
        return (np.where(norm > 0, g * x.values / safe, 0.0),)

    out = norm if keepdims else np.squeeze(norm, axis=axis)
    return DiffArray.from_op(out, (x,), _backward, "l2_norm")


def normalize(x: DiffArray, axis: int = -1, eps: float = 1e-12) -> DiffArray:
    """Scale to unit L2 norm along ``axis``, guarding norms below ``eps``."""
    norm = np.sqrt(np.sum(x.values ** 2, axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    out = x.values / denom

    def _backward(g):
        radial = np.sum(g * out, axis=axis, keepdims=True)
        return (np.where(norm > eps, (g - out * radial) / denom, g / denom),)

    return DiffArray.from_op(out, (x,), _backward, "normalize")


def concat(arrays: Sequence[DiffArray], axis: int = 0) -> DiffArray:
    arrays = [as_diff(a) for a in arrays]
    try:
        out = np.concatenate([a.values for a in arrays], axis=axis)
    except ValueError:
        raise DimensionError("concat", arrays[0].shape, arrays[-1].shape)
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def _backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return DiffArray.from_op(out, arrays, _backward, "concat")


def broadcast_to(x: DiffArray, shape: Tuple[int, ...]) -> DiffArray:
    try:
        out = np.broadcast_to(x.values, shape).copy()
    except ValueError:
        raise DimensionError("broadcast_to", x.shape, tuple(shape))
    return DiffArray.from_op(out, (x,), lambda g: (unbroadcast(g, x.shape),), "broadcast_to")


def _check_axis(op: str, x: DiffArray, axis: int) -> None:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(op, x.shape, (axis,))


def softmax(x: DiffArray, axis: int = -1) -> DiffArray:
    _check_axis("softmax", x, axis)
    shifted = x.values - np.max(x.values, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return DiffArray.from_op(out, (x,), _backward, "softmax")


def log_softmax(x: DiffArray, axis: int = -1) -> DiffArray:
    _check_axis("log_softmax", x, axis)
    shifted = x.values - np.max(x.values, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def _backward(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return DiffArray.from_op(out, (x,), _backward, "log_softmax")


def linear(x: DiffArray, W: DiffArray, b: Optional[DiffArray] = None) -> DiffArray:
    """y = xW (+ b on every row)."""
    x, W = as_diff(x), as_diff(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError("linear", x.shape, W.shape)
    y = matmul(x, W)
    if b is not None:
        if b.shape != (W.shape[1],):
            raise DimensionError("linear bias", W.shape, b.shape)
        y = add(y, b)
    return y


def layer_norm(x: DiffArray, gain: DiffArray, bias: DiffArray, eps: float = 1e-5) -> DiffArray:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm", x.shape, gain.shape)
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.values + bias.values

    def _backward(g):
        gx_hat = g * gain.values
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return DiffArray.from_op(out, (x, gain, bias), _backward, "layer_norm")


class AttentionWeights(NamedTuple):
    """Query/key/value projections of one attention block."""

    wq: DiffArray
    bq: DiffArray
    wk: DiffArray
    bk: DiffArray
    wv: DiffArray
    bv: DiffArray


def _split_heads(x: DiffArray, heads: int) -> DiffArray:
    *lead, n, d = x.shape
    return swapaxes(reshape(x, (*lead, n, heads, d // heads)), -3, -2)


def _merge_heads(x: DiffArray) -> DiffArray:
    *lead, heads, n, dh = x.shape
    return reshape(swapaxes(x, -3, -2), (*lead, n, heads * dh))


def masked_attention(
    q: DiffArray,
    kv: DiffArray,
    mask: np.ndarray,
    heads: int,
    weights: AttentionWeights,
    return_weights: bool = False,
) -> Union[DiffArray, Tuple[DiffArray, np.ndarray]]:
    """Multi-head scaled dot-product attention with a boolean visibility mask.

    ``q`` is [..., n_q, d], ``kv`` is [..., n_k, d] and ``mask`` is
    [n_q, n_k] or [..., n_q, n_k] (True = may attend). The output projection
    is left to the caller.
    """
    d = q.shape[-1]
    if d % heads:
        raise ConfigError(f"width {d} not divisible by {heads} heads", field="heads")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-2:] != (q.shape[-2], kv.shape[-2]):
        raise DimensionError("masked_attention mask", mask.shape, (q.shape[-2], kv.shape[-2]))
    if not mask.any(axis=-1).all():
        raise ConfigError("attention mask leaves a query row with no visible key", field="mask")

    Q = _split_heads(linear(q, weights.wq, weights.bq), heads)
    K = _split_heads(linear(kv, weights.wk, weights.bk), heads)
    V = _split_heads(linear(kv, weights.wv, weights.bv), heads)

    logits = matmul(Q, swapaxes(K, -1, -2)) * (1.0 / math.sqrt(d // heads))
    bias = np.expand_dims(np.where(mask, 0.0, MASK_VALUE), -3)
    attn = softmax(add(logits, DiffArray(bias)), axis=-1)
    out = _merge_heads(matmul(attn, V))
    if return_weights:
        return out, attn.values
    return out
