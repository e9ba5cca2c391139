"""Supervised / joint training, evaluation, ablation grid."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .config import ConfigError, from_dict, to_dict
from .contrastive import AugmentConfig, contrastive_term, joint_loss
from .data.types import LABELS, SPLITS, DataError, FrameSample, SynonymTable
from .metrics import MetricsReport, compute_metrics, metrics_rows
from .model import CGMM, DROPPABLE, ModelConfig, make_batch
from .numeric import Adam, NonFiniteError, cross_entropy, no_grad

log = logging.getLogger(__name__)

STRATEGIES = ("joint", "finetune", "supervised_only")


class TrainingDivergence(RuntimeError):
    """A loss or activation became non-finite during optimization."""


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_frames: int = 8
    lr: float = 2e-4
    strategy: str = "joint"
    alpha: float = 0.5
    temperature: float = 0.2
    pretrain_epochs: int = 5
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    average: str = "macro"
    include_others: bool = True
    macro_over: str = "all"
    eval_each_epoch: bool = True

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {list(STRATEGIES)}, got {self.strategy!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.epochs < 0 or self.pretrain_epochs < 0 or self.batch_frames < 1:
            raise ConfigError("epochs must be >= 0 and batch_frames >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        self.augment.validate()

    def metric_flags(self) -> dict:
        return {"average": self.average, "include_others": self.include_others,
                "macro_over": self.macro_over}


@dataclass
class AblationSpec:
    name: str = "full"
    drop: list = field(default_factory=list)
    strategy: str = "joint"

    def validate(self) -> None:
        bad = sorted(set(self.drop) - set(DROPPABLE))
        if bad:
            raise ConfigError(f"ablation {self.name}: unknown drop {bad}; choose from {list(DROPPABLE)}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"ablation {self.name}: unknown strategy {self.strategy!r}")

    @property
    def effective_strategy(self) -> str:
        return "supervised_only" if "Contrastive" in self.drop else self.strategy

    @property
    def model_drop(self) -> frozenset:
        return frozenset(self.drop) - {"Contrastive"}


def default_grid(strategy: str = "joint") -> list[AblationSpec]:
    grid = [AblationSpec("full", [], strategy)]
    for d in DROPPABLE:
        grid.append(AblationSpec(f"w/o {d}", [d], strategy))
    return grid


@dataclass
class TrainResult:
    model: CGMM
    checkpoint: Checkpoint
    loss_log: list  # (epoch, step, loss, lr)
    epoch_log: list  # (epoch, mean_loss, standard macro-F1 or nan)


def epoch_order(n: int, seed: int, epoch: int, salt: int = 7) -> np.ndarray:
    """Frame order for one epoch; depends only on (seed, epoch, salt)."""
    return np.random.default_rng([seed, salt, epoch]).permutation(n)


def check_classes(frames: list[FrameSample]) -> None:
    seen = {b.label for s in frames for b in s.boxes}
    missing = [lab for lab in LABELS if lab not in seen]
    if missing:
        raise DataError(f"training split has no samples of class {missing}")


def model_checkpoint(model: CGMM, train_config=None, opt_state=None, seed: int = 0,
                     rng: dict | None = None, extra: dict | None = None) -> Checkpoint:
    return Checkpoint(to_dict(model.config), {k: p.data.copy() for k, p in model.parameters().items()},
                      to_dict(train_config) if train_config is not None else {}, opt_state, seed,
                      rng or {}, extra or {})


def model_from_checkpoint(ckpt: Checkpoint) -> CGMM:
    model = CGMM(from_dict(ModelConfig, ckpt.model_config), ckpt.seed)
    load_params(model, ckpt.params)
    return model


def load_params(model: CGMM, params: dict, prefix_filter=None) -> None:
    own = model.parameters()
    for name, arr in params.items():
        if prefix_filter is not None and not prefix_filter(name):
            continue
        if name not in own:
            raise ConfigError(f"parameter {name} is not part of this model")
        if own[name].shape != arr.shape:
            raise ConfigError(f"parameter {name}: shape {arr.shape} vs model {own[name].shape}")
        own[name].data = np.array(arr, dtype=np.float64)


def _batches(frames, order, bs):
    for step, start in enumerate(range(0, len(order), bs)):
        yield step, [frames[i] for i in order[start:start + bs]]


def train(samples: list[FrameSample], synonyms: SynonymTable | None, model_config: ModelConfig,
          train_config: TrainConfig, seed: int = 0, ablation: AblationSpec | None = None,
          init: Checkpoint | None = None) -> TrainResult:
    """Train on the ``train`` split of ``samples``.

    ``strategy`` joint optimizes ``alpha * L_cont + (1 - alpha) * L_sup`` with
    augmented in-batch positives; finetune starts from ``init`` (a pretrained
    checkpoint) and optimizes ``L_sup``; supervised_only optimizes ``L_sup``
    from scratch. Per-epoch standard-split metrics are logged when that split
    is present.
    """
    ablation = ablation or AblationSpec(strategy=train_config.strategy)
    ablation.validate()
    train_config.validate()
    strategy = ablation.effective_strategy
    drop = ablation.model_drop
    if strategy == "finetune" and init is None:
        raise ConfigError("finetune strategy requires a pretrained checkpoint")
    if strategy == "joint" and train_config.alpha > 0 and {"CV", "NLP"} <= drop:
        raise ConfigError("joint strategy needs at least one of CV/NLP (embeddings would be all zero)")
    if strategy == "joint" and "NLP" in train_config.augment.modes and synonyms is None:
        raise ConfigError("NLP augmentation needs a synonym table")
    frames = [s for s in samples if s.split_tag == "train"]
    if not frames:
        raise DataError("no frames in the train split")
    check_classes(frames)
    standard = [s for s in samples if s.split_tag == "standard"]

    model = CGMM(model_config, seed)
    if init is not None and strategy == "finetune":
        load_params(model, init.params, lambda n: not n.startswith("head."))
    opt = Adam(model.parameters(), lr=train_config.lr)
    aug = train_config.augment
    loss_log, epoch_log = [], []
    t0 = time.perf_counter()
    for epoch in range(train_config.epochs):
        order = epoch_order(len(frames), seed, epoch)
        losses = []
        for step, chunk in _batches(frames, order, train_config.batch_frames):
            batch = make_batch(chunk)
            try:
                out = model(batch, drop)
                loss = cross_entropy(out.logits, batch.labels)
                if strategy == "joint" and batch.n_boxes >= 2:
                    rng = np.random.default_rng([seed, 13, epoch, step])
                    l_cont = contrastive_term(model, chunk, out.fused, aug.modes, rng, synonyms, aug,
                                              train_config.temperature, drop)
                    loss = joint_loss(l_cont, loss, train_config.alpha)
                opt.zero_grad()
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingDivergence(f"training diverged at epoch {epoch} step {step}: {exc}") from exc
            opt.step()
            losses.append(loss.item())
            loss_log.append((epoch, step, loss.item(), opt.state.lr))
        f1 = float("nan")
        if train_config.eval_each_epoch and standard:
            f1 = evaluate(model, standard, "standard", drop, **train_config.metric_flags()).macro_f1
        epoch_log.append((epoch, float(np.mean(losses)), f1))
        log.info("epoch %d loss %.4f standard-F1 %.4f (%.0fs)", epoch, epoch_log[-1][1], f1,
                 time.perf_counter() - t0)
    ckpt = model_checkpoint(model, train_config, opt.state, seed,
                            {"seed": seed, "epochs_done": train_config.epochs},
                            {"phase": "train", "strategy": strategy, "drop": sorted(ablation.drop),
                             "ablation": ablation.name})
    return TrainResult(model, ckpt, loss_log, epoch_log)


def predict(model: CGMM, samples: list[FrameSample], drop=frozenset(), batch_frames: int = 16):
    """Ground-truth and argmax label indices for every box of ``samples``."""
    truth, pred = [], []
    with no_grad():
        for start in range(0, len(samples), batch_frames):
            batch = make_batch(samples[start:start + batch_frames])
            logits = model(batch, drop).logits.data
            truth.append(batch.labels)
            pred.append(np.argmax(logits, axis=1))
    if not truth:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    return np.concatenate(truth), np.concatenate(pred)


def check_compatible(config: ModelConfig, samples: list[FrameSample]) -> None:
    for s in samples:
        for b in s.boxes:
            if len(b.tokens) != config.max_tokens:
                raise ConfigError(f"{s.path or 'frame'}: {len(b.tokens)} tokens per box, "
                                  f"model expects {config.max_tokens}")
            if max(b.tokens) >= config.vocab_size:
                raise ConfigError(f"{s.path or 'frame'}: token id {max(b.tokens)} outside "
                                  f"model vocabulary of {config.vocab_size}")


def evaluate(model_or_ckpt, samples: list[FrameSample], split: str, drop=frozenset(),
             **flags) -> MetricsReport:
    """Metrics on the frames of ``samples`` tagged ``split``."""
    model = model_or_ckpt
    if isinstance(model_or_ckpt, Checkpoint):
        model = model_from_checkpoint(model_or_ckpt)
        if not drop:
            drop = frozenset(model_or_ckpt.extra.get("drop", [])) - {"Contrastive"}
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; choose from {list(SPLITS)}")
    frames = [s for s in samples if s.split_tag == split]
    check_compatible(model.config, frames)
    truth, pred = predict(model, frames, frozenset(drop))
    return compute_metrics(truth, pred, split, **flags)


def ablate(samples: list[FrameSample], synonyms: SynonymTable | None, model_config: ModelConfig,
           train_config: TrainConfig, grid: list[AblationSpec], seed: int = 0,
           splits=("standard", "generalization"), pretrained: Checkpoint | None = None,
           run_prefix: str = "") -> tuple[list[dict], dict]:
    """Train + evaluate each spec with the same seed and data order.

    Returns CSV rows and ``{spec name: {split: MetricsReport}}``; a failing
    run yields a ``failed`` row per split and the grid continues.
    """
    if not grid:
        raise ConfigError("ablation grid is empty")
    rows, reports = [], {}
    for spec in grid:
        run_id = f"{run_prefix}{seed}-{spec.name}"
        try:
            result = train(samples, synonyms, model_config, train_config, seed, spec, pretrained)
            reports[spec.name] = {}
            for split in splits:
                rep = evaluate(result.model, samples, split, spec.model_drop, **train_config.metric_flags())
                reports[spec.name][split] = rep
                rows += metrics_rows(rep, run_id, spec.name)
        except (ConfigError, DataError, TrainingDivergence) as exc:
            log.error("ablation %s failed: %s", spec.name, exc)
            for split in splits:
                rows.append({"run_id": run_id, "split": split, "ablation": spec.name, "class": "failed",
                             "precision": "", "recall": "", "f1": "", "support": 0})
    return rows, reports


def write_loss_csv(path: str | Path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "step", "loss", "lr"])
        for epoch, step, loss, lr in rows:
            w.writerow([epoch, step, repr(float(loss)), repr(float(lr))])
    return path


def grid_from_dicts(items) -> list[AblationSpec]:
    return [from_dict(AblationSpec, d, f"grid[{i}]") for i, d in enumerate(items)]
