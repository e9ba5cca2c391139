"""Layout graph over a frame's text boxes and attention-weighted neighbor aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import NEG_INF, Linear, Module
from .numeric import ConfigurationError, Tensor, concat, relu, softmax, take
from .numeric.tensor import as_tensor


@dataclass
class NeighborGraph:
    neighbors: list[list[int]]
    n_max: int
    weights: list[np.ndarray] = field(default_factory=list)

    def padded(self, offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor indices ``[n, n_max]`` (shifted by ``offset``) and validity mask."""
        n = len(self.neighbors)
        idx = np.zeros((n, max(self.n_max, 1)), dtype=np.intp)
        mask = np.zeros_like(idx, dtype=bool)
        for j, nb in enumerate(self.neighbors):
            idx[j, :len(nb)] = np.asarray(nb, dtype=np.intp) + offset
            mask[j, :len(nb)] = True
        idx[~mask] = offset + np.arange(n)[:, None].repeat(idx.shape[1], 1)[~mask]
        return idx, mask


def box_centers(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return np.stack([(b[:, 0] + b[:, 2]) * 0.5, (b[:, 1] + b[:, 3]) * 0.5], axis=1)


def build_neighbor_graph(boxes, n_max: int = 4) -> NeighborGraph:
    """For each box, the ``n_max`` other boxes with the nearest centers
    (Euclidean); equal distances resolve to the lower box index."""
    c = box_centers(boxes)
    n = len(c)
    d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))
    k = min(n_max, n - 1)
    neighbors = []
    for j in range(n):
        order = [i for i in np.argsort(d[j], kind="stable") if i != j]
        neighbors.append([int(i) for i in order[:k]])
    return NeighborGraph(neighbors, n_max)


class CorrelationNet(Module):
    """Pair scores ``MLP(FC(f_j) - FC(f_k))`` normalized by softmax over each
    box's neighbors, then ``f_b(j) = sum_k w(j, k) f_1(k)``."""

    def __init__(self, d_fused: int, rng: np.random.Generator, d_corr: int = 32):
        self.d_fused = d_fused
        self.fc = Linear(d_fused, d_corr, rng, bias=False)
        self.mlp1 = Linear(d_corr, d_corr, rng)
        self.mlp2 = Linear(d_corr, 1, rng)
        self.last_weights: np.ndarray | None = None

    def scores(self, diff: Tensor) -> Tensor:
        return self.mlp2(relu(self.mlp1(diff)))[..., 0]

    def pair_weight(self, f_j: Tensor, f_k: Tensor) -> Tensor:
        """Unnormalized score for the directed pair (j, k)."""
        f_j, f_k = as_tensor(f_j), as_tensor(f_k)
        if f_j.shape != f_k.shape:
            raise ConfigurationError(f"pair_weight: shapes differ {f_j.shape} vs {f_k.shape}")
        return self.scores(self.fc(f_j.reshape(1, -1)) - self.fc(f_k.reshape(1, -1)))[0]

    def __call__(self, features: Tensor, neighbor_idx: np.ndarray, neighbor_mask: np.ndarray) -> Tensor:
        """``features`` is ``[B, d_fused]``; neighbor arrays are ``[B, n_max]``
        global row indices. Rows without neighbors aggregate to zero."""
        h = self.fc(features)  # [B, d_corr]
        diff = h.reshape(h.shape[0], 1, h.shape[1]) - take(h, neighbor_idx, axis=0)
        s = self.scores(diff) + np.where(neighbor_mask, 0.0, NEG_INF)
        w = softmax(s, axis=1) * neighbor_mask.astype(np.float64)
        self.last_weights = w.data
        nb = take(features, neighbor_idx, axis=0)  # [B, n_max, d]
        return (w.reshape(*w.shape, 1) * nb).sum(axis=1)


def aggregate(graph: NeighborGraph, features, j: int) -> np.ndarray:
    """Weighted sum of node ``j``'s neighbor features using ``graph.weights[j]``."""
    f = np.asarray(features.data if isinstance(features, Tensor) else features, dtype=np.float64)
    nb = graph.neighbors[j]
    if not nb:
        return np.zeros(f.shape[1])
    w = np.asarray(graph.weights[j], dtype=np.float64)
    if len(w) != len(nb) or abs(w.sum() - 1.0) > 1e-9 or (w < 0).any():
        raise RuntimeError(f"aggregate: weights of node {j} are not a normalized simplex")
    return w @ f[nb]


def final_feature(f_b: Tensor, f_1: Tensor) -> Tensor:
    """``[f_b || f_1]``: aggregated neighbors first, then the box's own feature."""
    f_b, f_1 = as_tensor(f_b), as_tensor(f_1)
    if f_b.shape != f_1.shape:
        raise ConfigurationError(f"final_feature: shapes differ {f_b.shape} vs {f_1.shape}")
    return concat([f_b, f_1], axis=-1)
