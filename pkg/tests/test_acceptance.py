"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion.

Criteria 5 and 6 train real models and take tens of minutes on one core.
Set CGMM_SKIP_SLOW=1 to skip them.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import correlation_oracle, roi_align_oracle

from cgmm.checkpoint import load_checkpoint, save_checkpoint
from cgmm.cli import main as cli_main
from cgmm.contrastive import ContrastiveBatch, contrastive_loss, joint_loss
from cgmm.correlationnet import CorrelationNet, aggregate, build_neighbor_graph, final_feature
from cgmm.data import DatasetConfig, generate_dataset, load_dataset, load_synonyms, load_vocab
from cgmm.encoders import VisualFeatureMap
from cgmm.fusion import roi_align
from cgmm.gradsuite import run_suite
from cgmm.model import CGMM, ModelConfig, make_batch
from cgmm.numeric import Tensor, cross_entropy, no_grad
from cgmm.train import AblationSpec, TrainConfig, default_grid, evaluate, model_checkpoint, model_from_checkpoint, train

slow = pytest.mark.skipif(os.environ.get("CGMM_SKIP_SLOW") == "1", reason="CGMM_SKIP_SLOW=1")


def record(n, ok, detail):
    ACCEPTANCE.append((n, bool(ok), detail))
    assert ok, f"criterion {n}: {detail}"


# --- 1 --------------------------------------------------------------------

def test_c1_gradient_suite():
    t0 = time.perf_counter()
    results = run_suite("all", trials=100, tol=1e-4, seed=0, h=1e-5)
    elapsed = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.max_rel_err)
    failed = [r.op for r in results if not r.passed]
    has_e2e = any(r.op == "model.cgmm_end_to_end" for r in results)
    ok = not failed and has_e2e and elapsed < 120
    record(1, ok, f"{len(results)} ops, {sum(r.trials for r in results)} trials, worst {worst.op} "
                  f"{worst.max_rel_err:.2e} < 1e-4, failed={failed}, {elapsed:.1f}s < 120s")


# --- 2 --------------------------------------------------------------------

def test_c2_roi_align_oracle():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        c, h, w = int(rng.integers(1, 4)), int(rng.integers(3, 10)), int(rng.integers(3, 10))
        vals = rng.standard_normal((c, h, w))
        x = np.sort(rng.uniform(0, 1, 2))
        y = np.sort(rng.uniform(0, 1, 2))
        if x[1] - x[0] < 1e-3 or y[1] - y[0] < 1e-3:
            x[1], y[1] = min(x[0] + 0.05, 1.0), min(y[0] + 0.05, 1.0)
        box = (x[0], y[0], x[1], y[1])
        out = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        spb = int(rng.integers(1, 3))
        got = roi_align(VisualFeatureMap(Tensor(vals), 1.0, 1.0), box, out, spb).data
        worst = max(worst, float(np.abs(got - roi_align_oracle(vals, box, out, spb)).max()))
    record(2, worst <= 1e-12, f"200 instances, max abs diff {worst:.1e} <= 1e-12")


# --- 3 --------------------------------------------------------------------

def test_c3_closed_form_losses():
    ce = cross_entropy(Tensor(np.zeros((5, 4))), np.array([0, 1, 2, 3, 1])).item()
    nt = contrastive_loss(ContrastiveBatch(Tensor(np.tile([0.4, -0.2, 1.0], (4, 1))))).item()
    rng = np.random.default_rng(3)
    exact = True
    for _ in range(100):
        lc, ls = Tensor(rng.standard_normal() * 3), Tensor(rng.standard_normal() * 3)
        exact &= joint_loss(lc, ls, 0.0).item() == ls.item() and joint_loss(lc, ls, 1.0).item() == lc.item()
    ok = abs(ce - math.log(4)) <= 1e-9 and abs(nt - math.log(3)) <= 1e-9 and exact
    record(3, ok, f"CE(uniform,K=4)-ln4={ce - math.log(4):.1e}, NT-Xent(identical,N=2)-ln3={nt - math.log(3):.1e}, "
                  f"joint boundaries bit-exact={exact}")


# --- 4 --------------------------------------------------------------------

def test_c4_aggregation_equivalence():
    rng = np.random.default_rng(4)
    d = 6
    worst_net = worst_agg = worst_sum = 0.0
    lengths_ok = True
    for _ in range(100):
        n = int(rng.integers(1, 10))
        c = rng.uniform(0.1, 0.9, (n, 2))
        half = rng.uniform(0.02, 0.08, (n, 2))
        boxes = np.concatenate([c - half, c + half], axis=1)
        feats = rng.standard_normal((n, d))
        net = CorrelationNet(d, rng, d_corr=5)
        g = build_neighbor_graph(boxes, 4)
        idx, mask = g.padded()
        out = net(Tensor(feats), idx, mask).data
        oracle = correlation_oracle(net, feats, g.neighbors)
        worst_net = max(worst_net, float(np.abs(out - oracle).max()))
        g.weights = [net.last_weights[j, :len(nb)] for j, nb in enumerate(g.neighbors)]
        for j in range(n):
            worst_agg = max(worst_agg, float(np.abs(aggregate(g, feats, j) - oracle[j]).max()))
            if g.neighbors[j]:
                worst_sum = max(worst_sum, abs(float(g.weights[j].sum()) - 1.0))
        lengths_ok &= final_feature(Tensor(out), Tensor(feats)).shape == (n, 2 * d)
    ok = worst_net <= 1e-12 and worst_agg <= 1e-12 and worst_sum <= 1e-9 and lengths_ok
    record(4, ok, f"100 frames: module vs oracle {worst_net:.1e}, aggregate vs oracle {worst_agg:.1e} (<=1e-12); "
                  f"weight sums off by {worst_sum:.1e} (<=1e-9); final length 2*d_fused={lengths_ok}")


# --- 5 / 6 ----------------------------------------------------------------
# Both use the default generator at seed 0. The optimizer runs at LR (see README).

LR = 1e-3


@pytest.fixture(scope="module")
def default_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("default_ds")
    generate_dataset(DatasetConfig(), root, seed=0)
    vocab, max_tokens = load_vocab(root)
    return load_dataset(root), load_synonyms(root), ModelConfig(vocab_size=len(vocab), max_tokens=max_tokens)


@slow
def test_c5_end_to_end(default_data):
    samples, synonyms, model_cfg = default_data
    cfg = TrainConfig(epochs=30, lr=LR, strategy="joint", eval_each_epoch=False)
    t0 = time.perf_counter()
    res = train(samples, synonyms, model_cfg, cfg, seed=0)
    elapsed = time.perf_counter() - t0
    std = evaluate(res.model, samples, "standard").macro_f1
    gen = evaluate(res.model, samples, "generalization").macro_f1
    ok = std >= 0.90 and gen >= 0.80 and elapsed < 600
    record(5, ok, f"joint, 30 epochs, seed 0: standard macro-F1 {std:.4f} >= 0.90, generalization {gen:.4f} >= 0.80, "
                  f"{elapsed:.0f}s < 600s")


ABLATION_SEEDS = (0, 1, 2)
ABLATION_EPOCHS = 12
ABLATION_DATA = dict(n_train=1000)


@slow
def test_c6_ablation_direction(tmp_path_factory):
    root = tmp_path_factory.mktemp("ablation_ds")
    generate_dataset(DatasetConfig(**ABLATION_DATA), root, seed=0)
    samples, synonyms = load_dataset(root), load_synonyms(root)
    vocab, max_tokens = load_vocab(root)
    model_cfg = ModelConfig(vocab_size=len(vocab), max_tokens=max_tokens)
    cfg = TrainConfig(epochs=ABLATION_EPOCHS, lr=LR, eval_each_epoch=False)
    scores = {}
    for spec in default_grid():
        per_seed = []
        for seed in ABLATION_SEEDS:
            res = train(samples, synonyms, model_cfg, cfg, seed, spec)
            f = [evaluate(res.model, samples, s, spec.model_drop).macro_f1 for s in ("standard", "generalization")]
            per_seed.append(np.mean(f))
        scores[spec.name] = float(np.mean(per_seed))
    full = scores["full"]
    beats = {k: full > scores[k] for k in ("w/o CorrelationNet", "w/o Contrastive", "w/o POS")}
    ablations = {k: v for k, v in scores.items() if k != "full"}
    worst = min(ablations, key=ablations.get)
    ok = all(beats.values()) and worst == "w/o NLP"
    table = ", ".join(f"{k}={v:.4f}" for k, v in scores.items())
    record(6, ok, f"mean macro-F1 over seeds {ABLATION_SEEDS} and both splits: {table}; "
                  f"full beats {beats}; worst ablation {worst!r}")


# --- 7 --------------------------------------------------------------------

TINY_RUN = {
    "seed": 3,
    "seeds": [3],
    "dataset": {"n_train": 60, "n_standard": 20, "n_generalization": 20, "n_templates": 2,
                "n_generalization_templates": 1},
    "model": {"cnn_channels": [4, 4, 4], "d_model": 8, "n_heads": 2, "d_ff": 8, "n_layers": 1, "d_vis": 8,
              "d_text": 8, "text_layers": 1, "text_heads": 2, "text_ff": 8, "d_corr": 8},
    "train": {"epochs": 1, "pretrain_epochs": 1, "lr": 0.001},
    "grid": [{"name": "full", "drop": []}, {"name": "w/o POS", "drop": ["POS"]}],
}


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c7_rerun_from_echoed_config(tmp_path, monkeypatch):
    monkeypatch.delenv("CGMM_SEED", raising=False)
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(TINY_RUN))
    data = tmp_path / "data"
    assert cli_main(["gen-data", "--config", str(cfg), "--out", str(data)]) == 0
    assert cli_main(["gen-data", "--config", str(data / "config.json"), "--out", str(tmp_path / "data2")]) == 0
    same = {"gen-data": _tree_bytes(data) == _tree_bytes(tmp_path / "data2")}
    runs = [("pretrain", []), ("train", []), ("ablate", [])]
    for cmd, extra in runs:
        first, second = tmp_path / f"{cmd}1", tmp_path / f"{cmd}2"
        assert cli_main([cmd, "--config", str(cfg), "--data", str(data), "--out", str(first)] + extra) == 0
        assert cli_main([cmd, "--config", str(first / "config.json"), "--data", str(data),
                         "--out", str(second)] + extra) == 0
        same[cmd] = _tree_bytes(first) == _tree_bytes(second)
    ckpt = str(tmp_path / "train1" / "checkpoint")
    for out in ("eval1", "eval2"):
        src = cfg if out == "eval1" else tmp_path / "eval1" / "config.json"
        assert cli_main(["eval", "--config", str(src), "--data", str(data), "--checkpoint", ckpt,
                         "--out", str(tmp_path / out)]) == 0
    same["eval"] = _tree_bytes(tmp_path / "eval1") == _tree_bytes(tmp_path / "eval2")
    record(7, all(same.values()), f"bit-identical outputs (CSVs, checkpoints, echoed configs) on re-run: {same}")


# --- 8 --------------------------------------------------------------------

def test_c8_checkpoint_round_trip(tmp_path, small_samples, tiny_config):
    model = CGMM(tiny_config, 11)
    path = save_checkpoint(model_checkpoint(model, seed=11), tmp_path / "ckpt")
    back = model_from_checkpoint(load_checkpoint(path))
    rng = np.random.default_rng(8)
    exact = 0
    with no_grad():
        for _ in range(20):
            idx = rng.choice(len(small_samples), size=int(rng.integers(1, 5)), replace=False)
            batch = make_batch([small_samples[i] for i in idx])
            exact += model(batch).logits.data.tobytes() == back(batch).logits.data.tobytes()
    record(8, exact == 20, f"{exact}/20 random batches bit-exact after save -> load -> forward")
