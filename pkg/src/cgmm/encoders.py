"""Unimodal feature extractors: shallow CNN, small text transformer, box coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data.types import DataError, validate_box
from .nn import Embedding, Module, TransformerEncoder, masked_mean, parameter, sinusoidal_positions
from .numeric import ConfigurationError, Tensor, conv2d, relu
from .numeric.tensor import as_tensor


@dataclass
class VisualFeatureMap:
    """CNN output plus the mapping from normalized frame coordinates to
    continuous feature-map coordinates: ``col = x * width - 0.5`` and
    ``row = y * height - 0.5`` (cell centers sit at half-integers of the
    normalized grid)."""

    values: Tensor  # [C, Hf, Wf] or batched [N, C, Hf, Wf]
    stride_y: float  # input pixels per feature row
    stride_x: float

    @property
    def height(self) -> int:
        return self.values.shape[-2]

    @property
    def width(self) -> int:
        return self.values.shape[-1]

    def to_feature_coords(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x * self.width - 0.5, y * self.height - 0.5


class VisualEncoder(Module):
    """Stack of 3x3 stride-2 convolutions with ReLU."""

    def __init__(self, rng: np.random.Generator, channels=(8, 16, 32), in_channels: int = 3,
                 kernel: int = 3, stride: int = 2, bias: bool = True):
        self.stride = stride
        self.padding = kernel // 2
        self.kernels = []
        self.biases = []
        c_in = in_channels
        for c_out in channels:
            fan_in = c_in * kernel * kernel
            bound = math.sqrt(6.0 / fan_in)
            self.kernels.append(parameter(rng.uniform(-bound, bound, (c_out, c_in, kernel, kernel))))
            self.biases.append(parameter(np.zeros(c_out)) if bias else None)
            c_in = c_out

    @property
    def channels(self) -> int:
        return self.kernels[-1].shape[0]

    def output_extent(self, h: int, w: int) -> tuple[int, int]:
        for k in self.kernels:
            kh = k.shape[2]
            h = (h + 2 * self.padding - kh) // self.stride + 1
            w = (w + 2 * self.padding - kh) // self.stride + 1
        return h, w

    def pre_activations(self, frames) -> list[Tensor]:
        x = as_tensor(frames)
        out = []
        for k, b in zip(self.kernels, self.biases):
            z = conv2d(x, k, b, stride=self.stride, padding=self.padding)
            out.append(z)
            x = relu(z)
        return out

    def __call__(self, frames, min_extent: int = 1) -> VisualFeatureMap:
        frames = as_tensor(frames)
        h, w = frames.shape[-2:]
        hf, wf = self.output_extent(h, w)
        if hf < min_extent or wf < min_extent:
            raise ConfigurationError(
                f"frame {h}x{w} yields a {hf}x{wf} feature map, need at least {min_extent}")
        x = relu(self.pre_activations(frames)[-1])
        return VisualFeatureMap(x, h / hf, w / wf)


def encode_visual(encoder: VisualEncoder, frame, min_extent: int = 1) -> VisualFeatureMap:
    return encoder(frame, min_extent)


class TextEncoder(Module):
    """Token embedding + sinusoidal positions -> transformer encoder ->
    mean over non-PAD positions. PAD keys are masked out of attention."""

    def __init__(self, vocab_size: int, rng: np.random.Generator, d_text: int = 32,
                 n_layers: int = 2, n_heads: int = 4, d_ff: int = 64, max_tokens: int = 8,
                 pad_id: int = 0):
        self.vocab_size = vocab_size
        self.pad_id = pad_id
        self.d_text = d_text
        self.embed = Embedding(vocab_size, d_text, rng, scale=math.sqrt(d_text))
        self.encoder = TransformerEncoder(n_layers, d_text, n_heads, d_ff, rng)
        self._positions = sinusoidal_positions(max_tokens, d_text)

    def __call__(self, tokens) -> Tensor:
        ids = np.asarray(tokens, dtype=np.intp)
        if ids.ndim == 1:
            return self(ids[None])[0]
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            bad = int(ids[(ids < 0) | (ids >= self.vocab_size)][0])
            raise DataError(f"token id {bad} outside vocabulary of size {self.vocab_size}")
        b, length = ids.shape
        if length > self._positions.shape[0]:
            self._positions = sinusoidal_positions(length, self.d_text)
        mask = ids != self.pad_id
        x = self.embed(ids) + self._positions[:length]
        h = self.encoder(x, key_mask=mask)
        return masked_mean(h, mask)


def encode_text(encoder: TextEncoder, tokens) -> Tensor:
    return encoder(tokens)


def encode_position(box) -> np.ndarray:
    """Coordinate feature: the normalized (x0, y0, x1, y1) corners."""
    return np.array(validate_box(box), dtype=np.float64)
