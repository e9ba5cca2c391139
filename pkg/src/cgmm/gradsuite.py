"""Finite-difference gradient suites, one per package module.

Every entry maps an op name to a factory ``rng -> (graph, inputs)`` building
fresh random inputs; :func:`run_suite` cycles trials over the entries.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .contrastive import ContrastiveBatch, contrastive_loss, joint_loss
from .correlationnet import CorrelationNet, build_neighbor_graph, final_feature
from .data.types import FrameSample, TextBox
from .encoders import TextEncoder, VisualEncoder, VisualFeatureMap
from .fusion import PatchFrameTransformer, cross_attend, fuse, roi_align, roi_align_batch
from .model import CGMM, ModelConfig, make_batch
from .nn import MultiHeadAttention
from .numeric import (
    Tensor,
    avg_pool2d,
    concat,
    conv2d,
    cross_entropy,
    grad_check,
    layer_norm,
    log,
    log_softmax,
    relu,
    softmax,
    sqrt,
    stack,
    take,
    tanh,
)


def _t(rng, *shape, lo=None):
    if lo is None:
        return Tensor(rng.standard_normal(shape), requires_grad=True)
    return Tensor(rng.uniform(lo, lo + 1.5, shape), requires_grad=True)


def _away_from_zero(rng, *shape):
    # keep relu inputs off the kink so central differences stay smooth
    v = rng.uniform(0.2, 1.5, shape) * rng.choice([-1.0, 1.0], shape)
    return Tensor(v, requires_grad=True)


def _box(rng):
    x = np.sort(rng.uniform(0.05, 0.95, 2))
    y = np.sort(rng.uniform(0.05, 0.95, 2))
    return (x[0], y[0], x[1] + 0.02, y[1] + 0.02)


def _simple(make, fn):
    def factory(rng):
        inputs = make(rng)
        return (lambda: fn(inputs)), inputs
    return factory


NUMERIC = {
    "add": _simple(lambda r: {"a": _t(r, 3, 4), "b": _t(r, 4)}, lambda i: i["a"] + i["b"]),
    "sub": _simple(lambda r: {"a": _t(r, 3, 1), "b": _t(r, 1, 4)}, lambda i: i["a"] - i["b"]),
    "mul": _simple(lambda r: {"a": _t(r, 2, 3), "b": _t(r, 2, 3)}, lambda i: i["a"] * i["b"]),
    "div": _simple(lambda r: {"a": _t(r, 2, 3), "b": _t(r, 3, lo=0.5)}, lambda i: i["a"] / i["b"]),
    "pow": _simple(lambda r: {"a": _t(r, 4, lo=0.5)}, lambda i: i["a"] ** 1.7),
    "exp": _simple(lambda r: {"a": _t(r, 3)}, lambda i: i["a"].exp()),
    "log": _simple(lambda r: {"a": _t(r, 5, lo=0.5)}, lambda i: log(i["a"])),
    "sqrt": _simple(lambda r: {"a": _t(r, 5, lo=0.5)}, lambda i: sqrt(i["a"])),
    "tanh": _simple(lambda r: {"a": _t(r, 5)}, lambda i: tanh(i["a"])),
    "relu": _simple(lambda r: {"a": _away_from_zero(r, 6)}, lambda i: relu(i["a"])),
    "sum": _simple(lambda r: {"a": _t(r, 3, 4)}, lambda i: i["a"].sum(axis=1)),
    "mean": _simple(lambda r: {"a": _t(r, 3, 4)}, lambda i: i["a"].mean(axis=0)),
    "reshape": _simple(lambda r: {"a": _t(r, 3, 4)}, lambda i: i["a"].reshape(2, 6)),
    "transpose": _simple(lambda r: {"a": _t(r, 2, 3, 4)}, lambda i: i["a"].transpose(2, 0, 1)),
    "getitem": _simple(lambda r: {"a": _t(r, 4, 5)}, lambda i: i["a"][1:3, ::2]),
    "take": _simple(lambda r: {"a": _t(r, 4, 3)}, lambda i: take(i["a"], np.array([0, 3, 3]), axis=0)),
    "concat": _simple(lambda r: {"a": _t(r, 2, 3), "b": _t(r, 2, 1)}, lambda i: concat([i["a"], i["b"]], axis=1)),
    "stack": _simple(lambda r: {"a": _t(r, 2, 3), "b": _t(r, 2, 3)}, lambda i: stack([i["a"], i["b"]])),
    "matmul": _simple(lambda r: {"a": _t(r, 2, 3, 4), "b": _t(r, 4, 2)}, lambda i: i["a"] @ i["b"]),
    "softmax": _simple(lambda r: {"a": _t(r, 3, 5)}, lambda i: softmax(i["a"], axis=1)),
    "log_softmax": _simple(lambda r: {"a": _t(r, 3, 5)}, lambda i: log_softmax(i["a"], axis=1)),
    "layer_norm": _simple(lambda r: {"x": _t(r, 3, 6), "g": _t(r, 6), "b": _t(r, 6)},
                          lambda i: layer_norm(i["x"], i["g"], i["b"])),
    "cross_entropy": _simple(lambda r: {"z": _t(r, 5, 4)},
                             lambda i: cross_entropy(i["z"], np.array([0, 3, 1, 1, 2]))),
    "conv2d": _simple(lambda r: {"x": _t(r, 1, 2, 7, 7), "k": _t(r, 3, 2, 3, 3), "b": _t(r, 3)},
                      lambda i: conv2d(i["x"], i["k"], i["b"], stride=2, padding=1)),
    "avg_pool2d": _simple(lambda r: {"a": _t(r, 2, 4, 6)}, lambda i: avg_pool2d(i["a"], 2)),
}


def _visual(rng):
    enc = VisualEncoder(rng, channels=(3, 4, 4))
    frame = Tensor(rng.random((3, 16, 16)), requires_grad=True)
    inputs = {"frame": frame, "kernel0": enc.kernels[0], "kernel2": enc.kernels[2], "bias1": enc.biases[1]}
    return (lambda: enc(frame).values), inputs


def _text(rng):
    enc = TextEncoder(12, rng, d_text=6, n_layers=1, n_heads=2, d_ff=8, max_tokens=5)
    tokens = np.array([[3, 7, 1, 0, 0], [2, 2, 9, 11, 4]])
    layer = enc.encoder.layers[0]
    inputs = {"embed": enc.embed.table, "q": layer.attn.q.weight, "ff": layer.ff1.weight}
    return (lambda: enc(tokens)), inputs


def _attention(rng):
    mha = MultiHeadAttention(6, 2, rng)
    x = _t(rng, 2, 4, 6)
    mask = np.array([[True, True, True, False], [True, True, True, True]])
    return (lambda: mha(x, key_mask=mask)), {"x": x, "k": mha.k.weight, "out": mha.out.weight}


ENCODERS = {"visual_cnn": _visual, "text_transformer": _text, "attention": _attention}


def _roi(rng):
    values = _t(rng, 2, 5, 6)
    box = _box(rng)
    return (lambda: roi_align(VisualFeatureMap(values, 1.0, 1.0), box, (3, 3), 2)), {"map": values}


def _roi_batch(rng):
    values = _t(rng, 2, 2, 5, 5)
    boxes = np.array([_box(rng) for _ in range(3)])
    fidx = np.array([0, 1, 1])
    return (lambda: roi_align_batch(values, boxes, fidx, (2, 2), 2)), {"maps": values}


def _patch_frame(rng):
    mod = PatchFrameTransformer(4, rng, d_model=8, n_heads=2, d_ff=8, n_layers=1, d_vis=6, frame_pool=2)
    values = _t(rng, 4, 4, 6)
    box = _box(rng)

    def graph():
        fmap = VisualFeatureMap(values, 8, 8)
        return cross_attend(mod, roi_align(fmap, box), fmap, box)

    inputs = {"map": values, "patch_proj": mod.patch_proj.weight, "frame_proj": mod.frame_proj.weight,
              "coord_proj": mod.coord_proj.weight, "segment": mod.segment, "out": mod.out.weight}
    return graph, inputs


FUSION = {
    "roi_align": _roi,
    "roi_align_batch": _roi_batch,
    "patch_frame_transformer": _patch_frame,
    "fuse": _simple(lambda r: {"v": _t(r, 3, 4), "t": _t(r, 3, 2)}, lambda i: fuse(i["v"], i["t"])),
}


def _correlation(rng):
    n = int(rng.integers(2, 7))
    net = CorrelationNet(6, rng, d_corr=5)
    c = rng.uniform(0.1, 0.9, (n, 2))
    boxes = np.concatenate([c - 0.03, c + 0.03], axis=1)
    idx, mask = build_neighbor_graph(boxes, 4).padded()
    feats = _t(rng, n, 6)
    inputs = {"features": feats, "fc": net.fc.weight, "mlp1": net.mlp1.weight, "mlp2": net.mlp2.weight}
    return (lambda: net(feats, idx, mask)), inputs


CORRELATIONNET = {
    "correlation": _correlation,
    "final_feature": _simple(lambda r: {"b": _t(r, 3, 4), "f": _t(r, 3, 4)},
                             lambda i: final_feature(i["b"], i["f"])),
}


CONTRASTIVE = {
    "nt_xent": _simple(lambda r: {"z": _t(r, 6, 5)}, lambda i: contrastive_loss(ContrastiveBatch(i["z"], 0.2))),
    "joint_loss": _simple(lambda r: {"c": _t(r, 1), "s": _t(r, 1)}, lambda i: joint_loss(i["c"], i["s"], 0.3)),
}


def tiny_model_config() -> ModelConfig:
    return ModelConfig(vocab_size=16, max_tokens=4, cnn_channels=[4, 4, 4], frame_pool=1, d_model=8,
                       n_heads=2, d_ff=8, n_layers=1, d_vis=6, d_text=6, text_layers=1, text_heads=2,
                       text_ff=8, d_corr=5, n_neighbors=4)


def three_box_frame(rng, size: int = 32) -> FrameSample:
    boxes = []
    for i, label in enumerate(("caption", "person_info", "subtitle")):
        y = 0.1 + 0.3 * i + rng.uniform(0, 0.05)
        x = rng.uniform(0.05, 0.3)
        tokens = tuple(int(t) for t in rng.integers(1, 16, 3)) + (0,)
        boxes.append(TextBox((x, y, x + rng.uniform(0.3, 0.6), y + 0.15), tokens, "", label))
    return FrameSample(rng.random((3, size, size)), boxes, "train", 0)


def _end_to_end(rng):
    model = CGMM(tiny_model_config(), int(rng.integers(1 << 30)))
    batch = make_batch([three_box_frame(rng)])
    params = model.parameters()
    return (lambda: cross_entropy(model(batch).logits, batch.labels)), params


MODEL = {"cgmm_end_to_end": _end_to_end}

SUITES = {
    "numeric": NUMERIC,
    "encoders": ENCODERS,
    "fusion": FUSION,
    "correlationnet": CORRELATIONNET,
    "contrastive": CONTRASTIVE,
    "model": MODEL,
}


@dataclass
class OpResult:
    op: str
    trials: int
    max_rel_err: float
    passed: bool


def run_suite(module: str, trials: int = 100, tol: float = 1e-4, seed: int = 0, h: float = 1e-5,
              n_coords: int = 6) -> list[OpResult]:
    """Run ``trials`` randomized checks, cycling over the ops of ``module``
    (``"all"`` cycles over every suite). Each op gets at least one trial.

    Large inputs are probed on ``n_coords`` random coordinates per tensor.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if module == "all":
        ops = [(f"{m}.{k}", f) for m, suite in SUITES.items() for k, f in suite.items()]
    elif module in SUITES:
        ops = list(SUITES[module].items())
    else:
        raise ConfigError(f"unknown module {module!r}; choose from {sorted(SUITES) + ['all']}")
    rng = np.random.default_rng(seed)
    results = {name: OpResult(name, 0, 0.0, True) for name, _ in ops}
    for t in range(max(trials, len(ops))):
        name, factory = ops[t % len(ops)]
        graph, inputs = factory(rng)
        rep = grad_check(graph, inputs, h=h, tol=tol, n_coords=n_coords, rng=rng)
        res = results[name]
        res.trials += 1
        res.max_rel_err = max(res.max_rel_err, rep.max_rel_err)
        res.passed = res.passed and rep.passed
    return list(results.values())


def format_report(results: list[OpResult], tol: float, elapsed: float | None = None) -> str:
    width = max(len(r.op) for r in results)
    lines = [f"{r.op:<{width}}  trials={r.trials:<3d} max_rel_err={r.max_rel_err:.3e}  "
             f"{'PASS' if r.passed else 'FAIL'}" for r in results]
    ok = all(r.passed for r in results)
    tail = f"{'PASS' if ok else 'FAIL'}: {sum(r.passed for r in results)}/{len(results)} ops within tol={tol:g}"
    if elapsed is not None:
        tail += f" ({elapsed:.1f}s)"
    return "\n".join(lines + [tail])


def timed_suite(module: str, trials: int, tol: float, seed: int = 0):
    t0 = time.perf_counter()
    results = run_suite(module, trials, tol, seed)
    return results, time.perf_counter() - t0
