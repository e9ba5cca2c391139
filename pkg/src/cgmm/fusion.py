"""Visual/positional fusion: ROIAlign, patch-frame transformer, concatenation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.types import DataError
from .encoders import VisualFeatureMap
from .nn import Linear, Module, TransformerEncoder, masked_mean, parameter
from .numeric import ConfigurationError, Tensor, avg_pool2d, concat, take
from .numeric.tensor import as_tensor

FULL_FRAME = (0.0, 0.0, 1.0, 1.0)


def roi_sampling_matrix(boxes: np.ndarray, height: int, width: int,
                        out_size: tuple[int, int] = (3, 3), samples_per_bin: int = 2) -> np.ndarray:
    """Linear map from a flattened ``height x width`` map to ROIAlign bins.

    Returns ``[n_boxes, ph * pw, height * width]``. Boxes are normalized
    ``(x0, y0, x1, y1)``; sample points are clamped to the map before
    bilinear weighting (border replication).
    """
    boxes = np.atleast_2d(np.asarray(boxes, dtype=np.float64))
    ph, pw = out_size
    s = samples_per_bin
    if ph < 1 or pw < 1 or s < 1:
        raise ConfigurationError(f"roi_align: bad out_size {out_size} / samples_per_bin {s}")
    fx0, fy0 = boxes[:, 0] * width - 0.5, boxes[:, 1] * height - 0.5
    fx1, fy1 = boxes[:, 2] * width - 0.5, boxes[:, 3] * height - 0.5
    bad = np.flatnonzero((fx1 <= fx0) | (fy1 <= fy0))
    if bad.size:
        raise DataError(f"roi_align: box {int(bad[0])} {boxes[bad[0]].tolist()} has zero area")
    nb = len(boxes)
    offs = (np.arange(s) + 0.5) / s
    gy = (np.arange(ph)[:, None] + offs[None, :]).reshape(-1)  # [ph*s]
    gx = (np.arange(pw)[:, None] + offs[None, :]).reshape(-1)
    ys = fy0[:, None] + gy[None, :] * ((fy1 - fy0) / ph)[:, None]  # [nb, ph*s]
    xs = fx0[:, None] + gx[None, :] * ((fx1 - fx0) / pw)[:, None]
    ys = np.clip(ys, 0.0, height - 1)
    xs = np.clip(xs, 0.0, width - 1)
    ylo = np.floor(ys).astype(np.intp)
    xlo = np.floor(xs).astype(np.intp)
    yhi = np.minimum(ylo + 1, height - 1)
    xhi = np.minimum(xlo + 1, width - 1)
    ly, lx = ys - ylo, xs - xlo

    # broadcast to [nb, ph, s, pw, s]
    def by(a):
        return a.reshape(nb, ph, s, 1, 1)

    def bx(a):
        return a.reshape(nb, 1, 1, pw, s)

    bins = (np.arange(ph)[:, None, None, None] * pw + np.arange(pw)[None, None, :, None])
    bins = np.broadcast_to(bins[None], (nb, ph, s, pw, s))
    base = (np.arange(nb)[:, None, None, None, None] * (ph * pw) + bins) * (height * width)
    norm = 1.0 / (s * s)
    flat_idx, flat_w = [], []
    for yi, wy in ((ylo, 1.0 - ly), (yhi, ly)):
        for xi, wx in ((xlo, 1.0 - lx), (xhi, lx)):
            flat_idx.append((base + by(yi) * width + bx(xi)).reshape(-1))
            flat_w.append((by(wy) * bx(wx) * norm).reshape(-1))
    size = nb * ph * pw * height * width
    mat = np.bincount(np.concatenate(flat_idx), np.concatenate(flat_w), minlength=size)
    return mat.reshape(nb, ph * pw, height * width)


def roi_align_batch(values: Tensor, boxes: np.ndarray, frame_index: np.ndarray,
                    out_size=(3, 3), samples_per_bin: int = 2) -> Tensor:
    """ROIAlign for many boxes over a batch of maps ``[N, C, H, W]``.
    Returns ``[n_boxes, C, ph, pw]``; differentiable w.r.t. ``values``."""
    n, c, h, w = values.shape
    mat = roi_sampling_matrix(boxes, h, w, out_size, samples_per_bin)
    flat = take(values.reshape(n, c, h * w), frame_index, axis=0)  # [B, C, HW]
    out = flat @ as_tensor(np.swapaxes(mat, 1, 2))  # [B, C, P]
    return out.reshape(len(mat), c, *out_size)


def roi_align(feature_map: VisualFeatureMap, box, out_size=(3, 3), samples_per_bin: int = 2) -> Tensor:
    """Single-box ROIAlign over an unbatched ``[C, H, W]`` feature map."""
    values = feature_map.values
    if values.ndim == 3:
        values = values.reshape(1, *values.shape)
    return roi_align_batch(values, np.asarray([box], dtype=float), np.zeros(1, dtype=np.intp),
                           out_size, samples_per_bin)[0]


def bin_centers(boxes: np.ndarray, out_size=(3, 3)) -> np.ndarray:
    """Normalized (x, y) centers of each ROI bin, ``[n_boxes, ph * pw, 2]``."""
    boxes = np.atleast_2d(np.asarray(boxes, dtype=np.float64))
    ph, pw = out_size
    fy = (np.arange(ph) + 0.5) / ph
    fx = (np.arange(pw) + 0.5) / pw
    ys = boxes[:, 1, None] + fy[None] * (boxes[:, 3] - boxes[:, 1])[:, None]
    xs = boxes[:, 0, None] + fx[None] * (boxes[:, 2] - boxes[:, 0])[:, None]
    grid_y = np.repeat(ys, pw, axis=1)
    grid_x = np.tile(xs, (1, ph))
    return np.stack([grid_x, grid_y], axis=-1)


def cell_centers(height: int, width: int) -> np.ndarray:
    """Normalized (x, y) centers of a ``height x width`` grid, row-major."""
    ys = (np.arange(height) + 0.5) / height
    xs = (np.arange(width) + 0.5) / width
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=-1)


class PatchFrameTransformer(Module):
    """Relates a box patch to its full frame.

    Patch cells and (pooled) frame cells are projected to ``d_model`` by
    separate linear maps, tagged with a learned segment embedding and a
    linear embedding of each cell's normalized center, run through a
    transformer encoder as one sequence, and the patch-token outputs are
    mean-pooled and projected to ``d_vis``.
    """

    def __init__(self, c_in: int, rng: np.random.Generator, d_model: int = 64, n_heads: int = 4,
                 d_ff: int = 64, n_layers: int = 2, d_vis: int = 32, frame_pool: int = 4):
        self.frame_pool = frame_pool
        self.patch_proj = Linear(c_in, d_model, rng)
        self.frame_proj = Linear(c_in, d_model, rng)
        self.coord_proj = Linear(2, d_model, rng)
        self.segment = parameter(rng.normal(0.0, 0.5, (2, d_model)))
        self.encoder = TransformerEncoder(n_layers, d_model, n_heads, d_ff, rng)
        self.out = Linear(d_model, d_vis, rng)

    def frame_tokens(self, values: Tensor) -> Tensor:
        """Project every frame of ``[N, C, H, W]`` to ``[N, cells, d_model]``."""
        pooled = avg_pool2d(values, self.frame_pool)
        n, c, h, w = pooled.shape
        cells = pooled.reshape(n, c, h * w).transpose(0, 2, 1)
        return self.frame_proj(cells) + self.coord_proj(as_tensor(cell_centers(h, w))) + self.segment[1]

    def __call__(self, patch: Tensor, patch_xy: np.ndarray, frame_tokens: Tensor,
                 frame_index: np.ndarray) -> Tensor:
        """``patch`` is ``[B, C, ph, pw]``, ``patch_xy`` its bin centers
        ``[B, ph*pw, 2]``; ``frame_tokens`` comes from :meth:`frame_tokens`."""
        b, c, ph, pw = patch.shape
        cells = patch.reshape(b, c, ph * pw).transpose(0, 2, 1)
        ptok = self.patch_proj(cells) + self.coord_proj(as_tensor(patch_xy)) + self.segment[0]
        ftok = take(frame_tokens, frame_index, axis=0)
        h = self.encoder(concat([ptok, ftok], axis=1))
        n_patch = ph * pw
        mask = np.zeros((b, h.shape[1]), dtype=bool)
        mask[:, :n_patch] = True
        return self.out(masked_mean(h, mask))

    @property
    def attention_maps(self) -> list[np.ndarray]:
        return [layer.attn.last_attention for layer in self.encoder.layers]


def cross_attend(module: PatchFrameTransformer, patch: Tensor, frame_map: VisualFeatureMap,
                 box) -> Tensor:
    """Single-box convenience wrapper returning ``f_vis`` of shape ``[d_vis]``."""
    values = frame_map.values
    if values.ndim == 3:
        values = values.reshape(1, *values.shape)
    if patch.ndim == 3:
        patch = patch.reshape(1, *patch.shape)
    ph, pw = patch.shape[-2:]
    xy = bin_centers(np.asarray([box], dtype=float), (ph, pw))
    return module(patch, xy, module.frame_tokens(values), np.zeros(1, dtype=np.intp))[0]


@dataclass
class FusedFeature:
    values: Tensor
    box_index: int = -1


def fuse(f_vis: Tensor, f_text: Tensor, d_vis: int | None = None, d_text: int | None = None,
         drop=frozenset()) -> Tensor:
    """``[f_vis || f_text]`` along the last axis. Dropped modalities ("CV",
    "NLP") are replaced by zeros of the same width."""
    f_vis, f_text = as_tensor(f_vis), as_tensor(f_text)
    if d_vis is not None and f_vis.shape[-1] != d_vis:
        raise ConfigurationError(f"fuse: visual width {f_vis.shape[-1]} != configured {d_vis}")
    if d_text is not None and f_text.shape[-1] != d_text:
        raise ConfigurationError(f"fuse: text width {f_text.shape[-1]} != configured {d_text}")
    if f_vis.shape[:-1] != f_text.shape[:-1]:
        raise ConfigurationError(f"fuse: leading shapes differ {f_vis.shape} vs {f_text.shape}")
    if "CV" in drop:
        f_vis = Tensor(np.zeros(f_vis.shape))
    if "NLP" in drop:
        f_text = Tensor(np.zeros(f_text.shape))
    return concat([f_vis, f_text], axis=-1)
