"""Positive-pair augmentation, NT-Xent loss, joint loss and contrastive pretraining."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ConfigError
from .data.types import DataError, FrameSample, SynonymTable, TextBox
from .numeric import Tensor, concat, log_softmax, sqrt
from .numeric.tensor import as_tensor

log = logging.getLogger(__name__)

MODES = ("POS", "CV", "NLP")


@dataclass
class AugmentConfig:
    modes: list = field(default_factory=lambda: ["POS", "CV", "NLP"])
    jitter: float = 0.02
    color_scale: list = field(default_factory=lambda: [0.8, 1.25])
    color_shift: list = field(default_factory=lambda: [-0.1, 0.1])
    replace_prob: float = 0.3

    def validate(self) -> None:
        if not self.modes or not set(self.modes) <= set(MODES):
            raise ConfigError(f"augment modes must be a non-empty subset of {list(MODES)}")


class ContrastiveError(ValueError):
    """An embedding cannot be normalized."""


def _jitter_box(box, delta: float, rng: np.random.Generator):
    for _attempt in range(2):
        b = np.clip(np.asarray(box) + rng.uniform(-delta, delta, 4), 0.0, 1.0)
        if b[0] < b[2] and b[1] < b[3]:
            return tuple(float(v) for v in b)
    raise DataError(f"jittered box {box} degenerated twice")


def augment(sample: FrameSample, modes, rng: np.random.Generator,
            synonyms: SynonymTable | None = None, config: AugmentConfig | None = None) -> FrameSample:
    """Build the positive view of a frame sample.

    POS jitters every coordinate uniformly by up to ``jitter``; CV applies a
    per-channel affine colour map to the whole frame; NLP replaces each token
    with probability ``replace_prob`` by another member of its synonym group.
    Modes compose; labels are carried over unchanged.
    """
    cfg = config or AugmentConfig()
    modes = set(modes)
    if not modes or not modes <= set(MODES):
        raise ConfigError(f"augment modes must be a non-empty subset of {list(MODES)}")
    if "NLP" in modes and synonyms is None:
        raise ConfigError("NLP augmentation needs a synonym table")
    frame = sample.frame
    boxes = list(sample.boxes)
    if "POS" in modes:
        boxes = [replace(b, box=_jitter_box(b.box, cfg.jitter, rng)) for b in boxes]
    if "CV" in modes:
        scale = rng.uniform(*cfg.color_scale, 3)[:, None, None]
        shift = rng.uniform(*cfg.color_shift, 3)[:, None, None]
        frame = np.clip(frame * scale + shift, 0.0, 1.0)
    if "NLP" in modes:
        boxes = [replace(b, tokens=_swap_synonyms(b, synonyms, cfg.replace_prob, rng)) for b in boxes]
    return FrameSample(frame, boxes, sample.split_tag, sample.program_id, sample.path)


def _swap_synonyms(box: TextBox, synonyms: SynonymTable, prob: float, rng) -> tuple[int, ...]:
    out = []
    for t in box.tokens:
        if t == box.pad_id:
            out.append(t)
            continue
        hit = rng.random() < prob
        group = synonyms.group_of(t)
        if hit and group is not None:
            others = [g for g in group if g != t]
            t = int(others[int(rng.integers(len(others)))])
        out.append(t)
    return tuple(out)


@dataclass
class ContrastiveBatch:
    """2N embeddings with anchor ``i`` at row ``2i`` and its positive at ``2i + 1``."""

    embeddings: Tensor
    temperature: float = 0.2

    def __post_init__(self):
        if self.embeddings.shape[0] < 4 or self.embeddings.shape[0] % 2:
            raise ConfigError(f"contrastive batch needs an even count >= 4, got {self.embeddings.shape[0]}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")

    @classmethod
    def from_pairs(cls, anchors: Tensor, positives: Tensor, temperature: float = 0.2):
        a, p = as_tensor(anchors), as_tensor(positives)
        n, d = a.shape
        inter = concat([a.reshape(n, 1, d), p.reshape(n, 1, d)], axis=1).reshape(2 * n, d)
        return cls(inter, temperature)


def contrastive_terms(batch: ContrastiveBatch) -> Tensor:
    """Per-item NT-Xent terms
    ``-log(exp(s(i, pos)/t) / sum_{k != i} exp(s(i, k)/t))`` with cosine ``s``."""
    z = batch.embeddings
    n2 = z.shape[0]
    norms = np.sqrt((z.data ** 2).sum(axis=1))
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise ContrastiveError(f"embedding {int(bad[0])} has zero norm")
    zn = z / sqrt((z * z).sum(axis=1, keepdims=True))
    sim = (zn @ zn.T) * (1.0 / batch.temperature)
    sim = sim + np.where(np.eye(n2, dtype=bool), -1e30, 0.0)
    logp = log_softmax(sim, axis=1)
    rows = np.arange(n2)
    return -logp[rows, rows ^ 1]


def contrastive_loss(batch: ContrastiveBatch) -> Tensor:
    """NT-Xent: mean of :func:`contrastive_terms` over all 2N items."""
    return contrastive_terms(batch).mean()


def nt_xent(anchors: Tensor, positives: Tensor, temperature: float = 0.2) -> Tensor:
    return contrastive_loss(ContrastiveBatch.from_pairs(anchors, positives, temperature))


def joint_loss(l_cont: Tensor, l_sup: Tensor, alpha: float) -> Tensor:
    """``alpha * l_cont + (1 - alpha) * l_sup``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return as_tensor(l_cont) * alpha + as_tensor(l_sup) * (1.0 - alpha)


def contrastive_term(model, samples: list[FrameSample], anchor_fused: Tensor, modes, rng,
                     synonyms, aug_config: AugmentConfig, temperature: float, drop=frozenset()) -> Tensor:
    """Encode augmented views of ``samples`` and score them against the anchors."""
    from .model import make_batch

    views = [augment(s, modes, rng, synonyms, aug_config) for s in samples]
    positives = model.encode(make_batch(views), drop)
    return nt_xent(anchor_fused, positives, temperature)


def pretrain(samples: list[FrameSample], synonyms: SynonymTable, model_config, train_config,
             seed: int, epochs: int | None = None, log_rows: list | None = None):
    """Contrastive-only training of the encoders and fusion layers.

    Labels are never read. Returns ``(model, checkpoint)``; per-step rows
    ``(epoch, step, loss, lr)`` are appended to ``log_rows`` when given.
    """
    from .checkpoint import Checkpoint
    from .config import to_dict
    from .model import CGMM, make_batch
    from .numeric import Adam, NonFiniteError
    from .train import TrainingDivergence, epoch_order

    epochs = train_config.pretrain_epochs if epochs is None else epochs
    aug = train_config.augment
    aug.validate()
    model = CGMM(model_config, seed)
    params = model.encoder_parameters()
    opt = Adam(params, lr=train_config.lr)
    frames = [s for s in samples if s.split_tag == "train"] or list(samples)
    for epoch in range(epochs):
        order = epoch_order(len(frames), seed, epoch, salt=11)
        bs = train_config.batch_frames
        losses = []
        for step, start in enumerate(range(0, len(order), bs)):
            chunk = [frames[i] for i in order[start:start + bs]]
            if sum(len(s.boxes) for s in chunk) < 2:
                continue
            rng = np.random.default_rng([seed, 12, epoch, step])
            try:
                anchors = model.encode(make_batch(chunk))
                loss = contrastive_term(model, chunk, anchors, aug.modes, rng, synonyms, aug,
                                        train_config.temperature)
                opt.zero_grad()
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingDivergence(f"pretrain diverged at epoch {epoch} step {step}: {exc}") from exc
            opt.step()
            losses.append(loss.item())
            if log_rows is not None:
                log_rows.append((epoch, step, loss.item(), opt.state.lr))
        log.info("pretrain epoch %d loss %.4f", epoch, float(np.mean(losses)) if losses else float("nan"))
    ckpt = Checkpoint(to_dict(model_config), {k: p.data for k, p in model.parameters().items()},
                      to_dict(train_config), opt.state, seed, {"seed": seed, "epochs_done": epochs},
                      {"phase": "pretrain"})
    return model, ckpt
