"""The full multimodal classifier: encoders -> fusion -> CorrelationNet -> head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError
from .correlationnet import CorrelationNet, build_neighbor_graph, final_feature
from .data.types import LABELS, FrameSample
from .encoders import TextEncoder, VisualEncoder
from .fusion import FULL_FRAME, PatchFrameTransformer, bin_centers, fuse, roi_align_batch
from .nn import Linear, Module
from .numeric import Tensor

DROPPABLE = ("CV", "NLP", "POS", "CorrelationNet", "Contrastive")


@dataclass
class ModelConfig:
    vocab_size: int = 256
    max_tokens: int = 8
    pad_id: int = 0
    cnn_channels: list = field(default_factory=lambda: [8, 16, 32])
    cnn_bias: bool = True
    roi_size: list = field(default_factory=lambda: [3, 3])
    samples_per_bin: int = 2
    frame_pool: int = 4
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 64
    n_layers: int = 2
    d_vis: int = 32
    d_text: int = 32
    text_layers: int = 2
    text_heads: int = 4
    text_ff: int = 64
    d_corr: int = 32
    n_neighbors: int = 4

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        """Full-size widths. Far too slow for the numpy backend, kept for reference."""
        base = dict(d_model=256, n_heads=8, d_ff=256, n_layers=2, d_text=768,
                    text_layers=4, text_heads=12, text_ff=768)
        base.update(overrides)
        return cls(**base)

    def validate(self) -> None:
        if self.d_model % self.n_heads or self.d_text % self.text_heads:
            raise ConfigError("model widths must be divisible by head counts")
        if len(self.roi_size) != 2 or min(self.roi_size) < 1:
            raise ConfigError("roi_size must be [ph, pw] with positive entries")
        if self.n_neighbors < 1:
            raise ConfigError("n_neighbors must be >= 1")

    @property
    def d_fused(self) -> int:
        return self.d_vis + self.d_text


@dataclass
class Batch:
    frames: np.ndarray  # [N, 3, H, W]
    boxes: np.ndarray  # [B, 4]
    frame_index: np.ndarray  # [B]
    tokens: np.ndarray  # [B, L]
    labels: np.ndarray  # [B]
    spans: list[tuple[int, int]]  # box rows belonging to each frame

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)


def make_batch(samples: list[FrameSample]) -> Batch:
    boxes, fidx, toks, labels, spans = [], [], [], [], []
    for i, s in enumerate(samples):
        start = len(boxes)
        for b in s.boxes:
            boxes.append(b.box)
            fidx.append(i)
            toks.append(b.tokens)
            labels.append(b.label_index)
        spans.append((start, len(boxes)))
    return Batch(
        frames=np.stack([s.frame for s in samples]),
        boxes=np.asarray(boxes, dtype=np.float64),
        frame_index=np.asarray(fidx, dtype=np.intp),
        tokens=np.asarray(toks, dtype=np.intp),
        labels=np.asarray(labels, dtype=np.intp),
        spans=spans,
    )


@dataclass
class ForwardOutput:
    logits: Tensor
    fused: Tensor  # f_1 per box
    aggregated: Tensor  # f_b per box
    final: Tensor


class CGMM(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng([seed, 31337])
        self.visual = VisualEncoder(rng, tuple(config.cnn_channels), bias=config.cnn_bias)
        self.text = TextEncoder(config.vocab_size, rng, config.d_text, config.text_layers,
                                config.text_heads, config.text_ff, config.max_tokens, config.pad_id)
        self.patch_frame = PatchFrameTransformer(
            self.visual.channels, rng, config.d_model, config.n_heads, config.d_ff,
            config.n_layers, config.d_vis, config.frame_pool)
        self.correlation = CorrelationNet(config.d_fused, rng, config.d_corr)
        self.head = Linear(2 * config.d_fused, len(LABELS), rng)

    # parameters of everything below the classification head
    def encoder_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.parameters().items() if not k.startswith("head.")}

    def neighbor_arrays(self, batch: Batch, drop=frozenset()) -> tuple[np.ndarray, np.ndarray]:
        k = self.config.n_neighbors
        idx = np.zeros((batch.n_boxes, k), dtype=np.intp)
        mask = np.zeros((batch.n_boxes, k), dtype=bool)
        for start, stop in batch.spans:
            boxes = batch.boxes[start:stop]
            if "POS" in drop:
                boxes = np.tile(FULL_FRAME, (stop - start, 1))
            i, m = build_neighbor_graph(boxes, k).padded(offset=start)
            idx[start:stop, :i.shape[1]] = i
            mask[start:stop, :m.shape[1]] = m
        return idx, mask

    def encode(self, batch: Batch, drop=frozenset()) -> Tensor:
        """Per-box fused feature ``[f_vis || f_text]``, shape ``[B, d_fused]``."""
        cfg = self.config
        b = batch.n_boxes
        if "CV" in drop:
            f_vis = Tensor(np.zeros((b, cfg.d_vis)))
        else:
            fmap = self.visual(batch.frames, min_extent=max(cfg.roi_size))
            boxes = batch.boxes if "POS" not in drop else np.tile(FULL_FRAME, (b, 1))
            patch = roi_align_batch(fmap.values, boxes, batch.frame_index,
                                    tuple(cfg.roi_size), cfg.samples_per_bin)
            ftok = self.patch_frame.frame_tokens(fmap.values)
            f_vis = self.patch_frame(patch, bin_centers(boxes, tuple(cfg.roi_size)), ftok,
                                     batch.frame_index)
        if "NLP" in drop:
            f_text = Tensor(np.zeros((b, cfg.d_text)))
        else:
            f_text = self.text(batch.tokens)
        return fuse(f_vis, f_text, cfg.d_vis, cfg.d_text)

    def classify(self, batch: Batch, fused: Tensor, drop=frozenset()) -> ForwardOutput:
        if "CorrelationNet" in drop:
            agg = Tensor(np.zeros(fused.shape))
        else:
            idx, mask = self.neighbor_arrays(batch, drop)
            agg = self.correlation(fused, idx, mask)
        final = final_feature(agg, fused)
        return ForwardOutput(self.head(final), fused, agg, final)

    def __call__(self, batch: Batch, drop=frozenset()) -> ForwardOutput:
        drop = frozenset(drop)
        return self.classify(batch, self.encode(batch, drop), drop)
