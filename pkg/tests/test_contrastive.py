import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from cgmm.config import ConfigError
from cgmm.contrastive import (
    AugmentConfig,
    ContrastiveBatch,
    ContrastiveError,
    augment,
    contrastive_loss,
    contrastive_terms,
    contrastive_term,
    joint_loss,
    nt_xent,
    pretrain,
)
from cgmm.data import DataError, FrameSample, SynonymTable, TextBox
from cgmm.model import CGMM, ModelConfig, make_batch
from cgmm.numeric import Tensor, grad_check
from cgmm.train import TrainConfig

from conftest import tiny
from oracles import nt_xent_oracle


def _sample(rng, n_boxes=3, tokens=(2, 3, 4, 0)):
    boxes = [TextBox((0.1, 0.1 + 0.25 * i, 0.6, 0.2 + 0.25 * i), tokens, "t", "caption") for i in range(n_boxes)]
    return FrameSample(rng.random((3, 8, 8)), boxes, "train", 0)


SYN = SynonymTable([(2, 5), (3, 6, 7), (4, 8)])


# --- augment ----------------------------------------------------------------

def test_null_augmentation_is_identity(rng):
    s = _sample(rng)
    cfg = AugmentConfig(jitter=0.0, color_scale=[1.0, 1.0], color_shift=[0.0, 0.0], replace_prob=0.0)
    out = augment(s, ["POS", "CV", "NLP"], rng, SYN, cfg)
    assert np.array_equal(out.frame, s.frame)
    assert out.boxes == s.boxes


def test_pos_only_keeps_pixels_and_tokens(rng):
    s = _sample(rng)
    out = augment(s, ["POS"], rng)
    assert np.array_equal(out.frame, s.frame)
    for a, b in zip(s.boxes, out.boxes):
        assert a.tokens == b.tokens and a.label == b.label
        assert a.box != b.box
        assert np.abs(np.subtract(a.box, b.box)).max() <= 0.02


def test_cv_only_keeps_boxes_and_tokens(rng):
    s = _sample(rng)
    out = augment(s, ["CV"], rng)
    assert out.boxes == s.boxes
    assert not np.array_equal(out.frame, s.frame)
    assert out.frame.min() >= 0.0 and out.frame.max() <= 1.0


def test_cv_is_per_channel_affine(rng):
    s = _sample(rng)
    out = augment(s, ["CV"], rng)
    for ch in range(3):
        x, y = s.frame[ch].ravel(), out.frame[ch].ravel()
        inside = (y > 0) & (y < 1)
        c, b = np.polyfit(x[inside], y[inside], 1)
        assert 0.8 <= c <= 1.25 and -0.1 <= b <= 0.1


def test_nlp_replacement_fraction():
    # counting oracle: every token has a group, replacement picks another member
    toks = (2, 3, 4, 5, 6, 7, 8, 2, 3, 4)
    s = FrameSample(np.zeros((3, 4, 4)), [TextBox((0, 0, 1, 1), toks, "t", "others")], "train", 0)
    rng = np.random.default_rng(99)
    changed = 0
    for _ in range(1000):
        out = augment(s, ["NLP"], rng, SYN)
        new = out.boxes[0].tokens
        changed += sum(a != b for a, b in zip(toks, new))
        assert all(b in SYN.group_of(a) for a, b in zip(toks, new))
    assert abs(changed / 10_000 - 0.3) <= 0.05


def test_nlp_leaves_ungrouped_tokens(rng):
    s = _sample(rng, tokens=(9, 10, 0, 0))
    out = augment(s, ["NLP"], rng, SYN, AugmentConfig(replace_prob=1.0))
    assert out.boxes == s.boxes


def test_augment_preconditions(rng):
    s = _sample(rng)
    with pytest.raises(ConfigError):
        augment(s, [], rng)
    with pytest.raises(ConfigError):
        augment(s, ["NLP"], rng)
    with pytest.raises(ConfigError):
        augment(s, ["XY"], rng)


class _ScriptedRng:
    """Returns queued offsets from ``uniform``."""

    def __init__(self, *draws):
        self.draws = list(draws)

    def uniform(self, lo, hi, n):
        return np.asarray(self.draws.pop(0))


def test_degenerate_jitter_retried_once_then_error():
    box = TextBox((0.5, 0.5, 0.51, 0.51), (2,), "t", "caption")
    s = FrameSample(np.zeros((3, 4, 4)), [box], "train", 0)
    bad = [0.02, 0.0, -0.02, 0.0]
    ok = [0.01, 0.0, 0.01, 0.0]
    out = augment(s, ["POS"], _ScriptedRng(bad, ok))
    assert out.boxes[0].box == pytest.approx((0.51, 0.5, 0.52, 0.51))
    with pytest.raises(DataError):
        augment(s, ["POS"], _ScriptedRng(bad, bad))


def test_augment_is_deterministic(rng):
    s = _sample(rng)
    a = augment(s, ["POS", "CV", "NLP"], np.random.default_rng(5), SYN)
    b = augment(s, ["POS", "CV", "NLP"], np.random.default_rng(5), SYN)
    assert np.array_equal(a.frame, b.frame) and a.boxes == b.boxes


# --- contrastive loss -------------------------------------------------------

def test_identical_embeddings_give_log_2n_minus_1():
    for n in (2, 3, 5):
        z = Tensor(np.tile([0.3, -1.2, 2.0], (2 * n, 1)))
        assert abs(contrastive_loss(ContrastiveBatch(z, 0.2)).item() - math.log(2 * n - 1)) < 1e-9
    assert abs(contrastive_loss(ContrastiveBatch(Tensor(np.ones((4, 2))))).item() - 1.098612) < 1e-6


def test_separated_pairs_limit():
    z = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
    assert contrastive_loss(ContrastiveBatch(Tensor(z), 0.01)).item() < 1e-40


def test_matches_scalar_oracle(rng):
    for _ in range(10):
        z = rng.standard_normal((4, 5))
        got = contrastive_loss(ContrastiveBatch(Tensor(z), 0.2)).item()
        assert abs(got - nt_xent_oracle(z, 0.2)) < 1e-9


def test_pairs_are_interleaved(rng):
    a, p = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    z = np.empty((6, 4))
    z[0::2], z[1::2] = a, p
    assert abs(nt_xent(Tensor(a), Tensor(p), 0.5).item() - nt_xent_oracle(z, 0.5)) < 1e-12


def test_loss_gradient(rng):
    z = Tensor(rng.standard_normal((4, 5)))
    rep = grad_check(lambda: contrastive_loss(ContrastiveBatch(z, 0.2)), {"z": z})
    assert rep.passed, rep.summary()


def test_zero_norm_names_item(rng):
    z = rng.standard_normal((4, 3))
    z[2] = 0.0
    with pytest.raises(ContrastiveError, match="embedding 2"):
        contrastive_loss(ContrastiveBatch(Tensor(z)))


def test_batch_preconditions():
    with pytest.raises(ConfigError):
        ContrastiveBatch(Tensor(np.ones((2, 3))))
    with pytest.raises(ConfigError):
        ContrastiveBatch(Tensor(np.ones((4, 3))), temperature=0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 4))
def test_rotation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2 * n, 4))
    q = ortho_group.rvs(4, random_state=seed)
    a = contrastive_loss(ContrastiveBatch(Tensor(z))).item()
    b = contrastive_loss(ContrastiveBatch(Tensor(z @ q))).item()
    assert abs(a - b) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.05, 0.95))
def test_moving_positive_toward_anchor_lowers_anchor_term(seed, t):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((6, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    moved = z.copy()
    moved[1] = (1 - t) * z[1] + t * z[0]
    if np.linalg.norm(moved[1]) < 1e-6:
        return
    before = contrastive_terms(ContrastiveBatch(Tensor(z))).data[0]
    after = contrastive_terms(ContrastiveBatch(Tensor(moved))).data[0]
    assert after < before


# --- joint loss -------------------------------------------------------------

def test_joint_loss_boundaries_bit_exact(rng):
    for _ in range(20):
        lc, ls = Tensor(rng.random() * 5), Tensor(rng.random() * 5)
        assert joint_loss(lc, ls, 0.0).item() == ls.item()
        assert joint_loss(lc, ls, 1.0).item() == lc.item()
    assert joint_loss(Tensor(2.0), Tensor(1.0), 0.5).item() == 1.5
    with pytest.raises(ConfigError):
        joint_loss(Tensor(1.0), Tensor(1.0), 1.5)
    with pytest.raises(ConfigError):
        joint_loss(Tensor(1.0), Tensor(1.0), -0.1)


# --- model-level contrastive behaviour ----------------------------------------

_tiny_config = tiny


def test_cv_mode_only_touches_embeddings_of_present_tokens(small_samples, small_synonyms, small_model_config):
    frames = [s for s in small_samples if s.split_tag == "train"][:4]
    toks = frames[0].boxes[0].tokens
    crafted = [FrameSample(s.frame, [replace(b, tokens=toks) for b in s.boxes], s.split_tag, s.program_id)
               for s in frames]
    model = CGMM(_tiny_config(small_model_config), 0)
    anchors = model.encode(make_batch(crafted))
    loss = contrastive_term(model, crafted, anchors, ["CV"], np.random.default_rng(0), small_synonyms,
                            AugmentConfig(modes=["CV"]), 0.2)
    loss.backward()
    g = model.text.embed.table.grad
    present = sorted(set(toks))
    assert np.all(np.delete(g, present, axis=0) == 0.0)


def _pretrain_frames(samples, n=20):
    return [s for s in samples if s.split_tag == "train"][:n]


def test_pretrain_lowers_loss_and_is_deterministic(small_samples, small_synonyms, small_model_config):
    frames = _pretrain_frames(small_samples)
    cfg = _tiny_config(small_model_config)
    tc = TrainConfig(lr=3e-3, batch_frames=4)
    log_a, log_b = [], []
    _, ck_a = pretrain(frames, small_synonyms, cfg, tc, seed=1, epochs=2, log_rows=log_a)
    _, ck_b = pretrain(frames, small_synonyms, cfg, tc, seed=1, epochs=2, log_rows=log_b)
    assert log_a == log_b
    first = np.mean([r[2] for r in log_a if r[0] == 0])
    last = np.mean([r[2] for r in log_a if r[0] == 1])
    assert last < first
    assert all(np.array_equal(ck_a.params[k], ck_b.params[k]) for k in ck_a.params)
    assert all(r[3] == 3e-3 for r in log_a)


def test_pretrain_ignores_labels(small_samples, small_synonyms, small_model_config):
    frames = _pretrain_frames(small_samples, 8)
    rng = np.random.default_rng(0)
    labels = ["caption", "subtitle", "person_info", "others"]
    shuffled = [FrameSample(s.frame, [replace(b, label=labels[int(rng.integers(4))]) for b in s.boxes],
                            s.split_tag, s.program_id) for s in frames]
    cfg = _tiny_config(small_model_config)
    tc = TrainConfig(lr=3e-3, batch_frames=4)
    _, a = pretrain(frames, small_synonyms, cfg, tc, seed=2, epochs=1)
    _, b = pretrain(shuffled, small_synonyms, cfg, tc, seed=2, epochs=1)
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_pretrain_leaves_head_untouched(small_samples, small_synonyms, small_model_config):
    cfg = _tiny_config(small_model_config)
    model, ck = pretrain(_pretrain_frames(small_samples, 8), small_synonyms, cfg,
                         TrainConfig(lr=3e-3, batch_frames=4), seed=3, epochs=1)
    fresh = CGMM(cfg, 3)
    assert np.array_equal(ck.params["head.weight"], fresh.head.weight.data)
    assert not np.array_equal(ck.params["text.embed.table"], fresh.text.embed.table.data)
