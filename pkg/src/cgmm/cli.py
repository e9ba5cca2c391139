"""Command-line entry point: ``cgmm <command> ...``.

Exit codes: 0 success, 1 I/O or file-format error, 2 invalid configuration
or usage, 3 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, dump_json, from_dict, to_dict
from .contrastive import ContrastiveError, pretrain
from .data import (
    DataError,
    DatasetConfig,
    DatasetLoadError,
    PPMFormatError,
    generate_dataset,
    load_dataset,
    load_synonyms,
    load_vocab,
)
from .gradsuite import SUITES, format_report, timed_suite
from .metrics import metrics_rows, write_metrics_csv
from .model import ModelConfig
from .train import (
    TrainConfig,
    TrainingDivergence,
    ablate,
    default_grid,
    evaluate,
    grid_from_dicts,
    train,
    write_loss_csv,
)

log = logging.getLogger("cgmm")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
SEED_ENV = "CGMM_SEED"


@dataclass
class RunConfig:
    command: str = ""  # filled in on echo; informational only
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    splits: list = field(default_factory=lambda: ["standard", "generalization"])
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: list = field(default_factory=lambda: [to_dict(g) for g in default_grid()])


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(RunConfig, data)


def resolve_seed(cfg: RunConfig, flag: int | None = None) -> RunConfig:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
        cfg.seed = seed
        cfg.seeds = [seed]
    if flag is not None:
        cfg.seed = flag
    return cfg


def _echo(cfg: RunConfig, out: Path, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg.command = command
    dump_json(to_dict(cfg), out / "config.json")


def _load_data(cfg: RunConfig, data_dir: str):
    samples = load_dataset(data_dir)
    synonyms = load_synonyms(data_dir)
    vocab, max_tokens = load_vocab(data_dir)
    # the model's input widths always follow the dataset
    cfg.model.vocab_size = len(vocab.words)
    cfg.model.max_tokens = max_tokens
    return samples, synonyms


def _validate(cfg: RunConfig) -> None:
    cfg.model.validate()
    cfg.train.validate()
    grid_from_dicts(cfg.grid)


def cmd_gen_data(args) -> int:
    cfg = resolve_seed(load_run_config(args.config), args.seed)
    cfg.dataset.validate()
    out = Path(args.out)
    _echo(cfg, out, "gen-data")
    manifest = generate_dataset(cfg.dataset, out, cfg.seed)
    print(f"wrote {sum(c['boxes'] for c in manifest['counts'].values())} boxes to {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = resolve_seed(load_run_config(args.config))
    samples, synonyms = _load_data(cfg, args.data)
    _validate(cfg)
    out = Path(args.out)
    _echo(cfg, out, "pretrain")
    rows = []
    _, ckpt = pretrain(samples, synonyms, cfg.model, cfg.train, cfg.seed, log_rows=rows)
    write_loss_csv(out / "loss.csv", rows)
    save_checkpoint(ckpt, out / "checkpoint")
    print(f"pretrained checkpoint written to {out / 'checkpoint'}")
    return EXIT_OK


def _write_epochs(path: Path, epoch_log) -> None:
    with path.open("w") as fh:
        fh.write("epoch,mean_loss,standard_macro_f1\n")
        for epoch, loss, f1 in epoch_log:
            fh.write(f"{epoch},{loss!r},{f1!r}\n")


def cmd_train(args) -> int:
    cfg = resolve_seed(load_run_config(args.config))
    if cfg.train.strategy == "finetune" and not args.checkpoint:
        raise ConfigError("finetune strategy requires a pretrained checkpoint (--checkpoint)")
    samples, synonyms = _load_data(cfg, args.data)
    _validate(cfg)
    init = load_checkpoint(args.checkpoint) if args.checkpoint else None
    out = Path(args.out)
    _echo(cfg, out, "train")
    result = train(samples, synonyms, cfg.model, cfg.train, cfg.seed, init=init)
    write_loss_csv(out / "loss.csv", result.loss_log)
    _write_epochs(out / "epochs.csv", result.epoch_log)
    save_checkpoint(result.checkpoint, out / "checkpoint")
    print(f"trained checkpoint written to {out / 'checkpoint'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_seed(load_run_config(args.config))
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint")
    samples = load_dataset(args.data)
    _validate(cfg)
    ckpt = load_checkpoint(args.checkpoint)
    cfg.model = from_dict(ModelConfig, ckpt.model_config)
    out = Path(args.out)
    _echo(cfg, out, "eval")
    run_id = f"{ckpt.seed}-{ckpt.extra.get('ablation', 'full')}"
    for split in cfg.splits:
        rep = evaluate(ckpt, samples, split, **cfg.train.metric_flags())
        write_metrics_csv(out / f"metrics_{split}.csv", metrics_rows(rep, run_id, ckpt.extra.get("ablation", "full")))
        print(f"{split}: {rep.summary()}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_seed(load_run_config(args.config))
    samples, synonyms = _load_data(cfg, args.data)
    _validate(cfg)
    grid = grid_from_dicts(cfg.grid)
    needs_init = any(g.effective_strategy == "finetune" for g in grid)
    if needs_init and not args.checkpoint:
        raise ConfigError("finetune ablations require a pretrained checkpoint (--checkpoint)")
    pretrained = load_checkpoint(args.checkpoint) if args.checkpoint else None
    out = Path(args.out)
    _echo(cfg, out, "ablate")
    rows = []
    for seed in cfg.seeds:
        r, reports = ablate(samples, synonyms, cfg.model, cfg.train, grid, seed, tuple(cfg.splits), pretrained)
        rows += r
        for name, per_split in reports.items():
            print(f"seed {seed} {name:20s} " + " ".join(f"{s}={rep.macro_f1:.4f}" for s, rep in per_split.items()))
    write_metrics_csv(out / "ablation.csv", rows)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    if args.tol <= 0:
        raise ConfigError("--tol must be positive")
    results, elapsed = timed_suite(args.module, args.trials, args.tol, args.seed)
    print(format_report(results, args.tol, elapsed))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgmm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    for name, func, help_ in (("pretrain", cmd_pretrain, "contrastive pretraining"),
                              ("train", cmd_train, "train one model"),
                              ("eval", cmd_eval, "evaluate a checkpoint"),
                              ("ablate", cmd_ablate, "train and evaluate the ablation grid")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config")
        p.add_argument("--data", required=True)
        p.add_argument("--checkpoint")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--module", required=True, choices=sorted(SUITES) + ["all"])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, DatasetLoadError, PPMFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DataError, ContrastiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
