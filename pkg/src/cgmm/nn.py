"""Small layer library on top of :mod:`cgmm.numeric`."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .numeric import Tensor, layer_norm, relu, softmax, swapaxes, take
from .numeric.tensor import as_tensor

NEG_INF = -1e30


def parameter(values: np.ndarray) -> Tensor:
    return Tensor(values, requires_grad=True, op="param")


class Module:
    """Parameter container. Parameters are discovered from instance attributes
    in assignment order, which makes parameter names and ordering stable."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(d_in)
        self.weight = parameter(rng.uniform(-bound, bound, (d_in, d_out)))
        self.bias = parameter(rng.uniform(-bound, bound, d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(d))
        self.bias = parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, scale: float = 1.0):
        self.table = parameter(rng.normal(0.0, scale / math.sqrt(d), (n, d)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return take(self.table, ids, axis=0)


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over ``[batch, tokens, d_model]``.

    The most recent attention weights are kept in ``last_attention`` (plain
    array, shape ``[batch, heads, tokens, tokens]``) for inspection.
    """

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)
        self.last_attention: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        return x.reshape(b, t, self.n_heads, d // self.n_heads).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        """``key_mask`` is ``[batch, tokens]`` with True for attendable keys."""
        b, t, d = x.shape
        dh = d // self.n_heads
        q = self._split(self.q(x))
        k = self._split(self.k(x))
        v = self._split(self.v(x))
        scores = (q @ swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
        if key_mask is not None:
            scores = scores + np.where(key_mask, 0.0, NEG_INF)[:, None, None, :]
        attn = softmax(scores, axis=-1)
        self.last_attention = attn.data
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.out(ctx)


class TransformerEncoderLayer(Module):
    """Post-norm encoder layer: ``LN(x + MHA(x))`` then ``LN(x + FF(x))``."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, d_ff, rng)
        self.ff2 = Linear(d_ff, d_model, rng)
        self.norm2 = LayerNorm(d_model)

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        x = self.norm1(x + self.attn(x, key_mask))
        return self.norm2(x + self.ff2(relu(self.ff1(x))))


class TransformerEncoder(Module):
    def __init__(self, n_layers: int, d_model: int, n_heads: int, d_ff: int,
                 rng: np.random.Generator):
        self.layers = [TransformerEncoderLayer(d_model, n_heads, d_ff, rng) for _ in range(n_layers)]

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        for layer in self.layers:
            x = layer(x, key_mask)
        return x


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of ``[batch, tokens, d]`` restricted to ``mask``;
    rows with no selected token pool to zero."""
    m = np.asarray(mask, dtype=np.float64)
    count = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    return (x * as_tensor((m / count)[:, :, None])).sum(axis=1)
