"""Fused differentiable operations: softmax, layer norm, losses, convolution."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor

__all__ = [
    "softmax",
    "log_softmax",
    "layer_norm",
    "cross_entropy",
    "conv2d",
    "avg_pool2d",
    "LabelError",
    "ConfigurationError",
]


class LabelError(ValueError):
    """A class label is outside the valid range."""


class ConfigurationError(ValueError):
    """Layer hyperparameters are inconsistent with the input."""


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise ShapeError("softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(s, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gain`` and ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor.from_op(xhat * gain.data + bias.data, (x, gain, bias), backward, "layer_norm")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [batch, classes] logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        raise LabelError(f"record {int(bad[0])}: label {int(labels[bad[0]])} outside [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return Tensor.from_op(np.array(loss), (logits,), backward, "cross_entropy")


def _out_extent(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation (no kernel flip).

    ``x`` is ``[C, H, W]`` or batched ``[N, C, H, W]``; ``kernels`` is
    ``[F, C, kh, kw]``. Output extents follow ``(H + 2p - kh) // stride + 1``.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(f"conv2d: bad input/kernel ranks {x.shape}, {kernels.shape}")
    n, c, h, w = xd.shape
    f, kc, kh, kw = kernels.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernels expect {kc}")
    if stride < 1:
        raise ConfigurationError(f"conv2d: stride must be >= 1, got {stride}")
    ho, wo = _out_extent(h, kh, stride, padding), _out_extent(w, kw, stride, padding)
    if ho < 1 or wo < 1 or kh > h + 2 * padding or kw > w + 2 * padding:
        raise ConfigurationError(
            f"conv2d: kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kmat = kernels.data.reshape(f, -1)
    out = cols @ kmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def backward(g):
        g4 = g[None] if squeeze else g
        gm = g4.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gk = (gm.T @ cols).reshape(kernels.shape) if kernels.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gm @ kmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
            if squeeze:
                gx = gx[0]
        grads = [gx, gk]
        if bias is not None:
            grads.append(gm.sum(axis=0))
        return grads

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor.from_op(out[0] if squeeze else out, parents, backward, "conv2d")


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping ``k x k`` mean pooling over the last two axes."""
    if k == 1:
        return x
    *lead, h, w = x.shape
    if h % k or w % k:
        raise ConfigurationError(f"avg_pool2d: {h}x{w} not divisible by {k}")
    y = x.reshape(*lead, h // k, k, w // k, k)
    nl = len(lead)
    return y.mean(axis=(nl + 1, nl + 3))
