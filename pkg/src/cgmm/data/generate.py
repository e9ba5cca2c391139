"""Synthetic news-frame generator.

Each program (template) fixes a vertical layout with caption above person
information above subtitle, per-class box tints, box heights and alignment, a
background palette and topic emphasis over the vocabulary. Frames sample from
their program with bounded jitter. Caption and subtitle share most of their
vocabulary so text alone cannot always separate them; person information uses
name tokens and "others" boxes carry uniformly random filler tokens at
uniformly random positions, mostly dressed in the look of one of the
program's text classes. Every frame is shifted vertically by up to
``frame_offset``, so absolute height overlaps between caption and subtitle
across frames while their order within a frame is fixed; large tint jitter
makes colour a weak cue.

The standard and training splits use programs ``0..n_templates-1``; the
generalization split uses held-out programs numbered after them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ConfigError, to_dict
from .ppm import encode_ppm, quantize
from .types import LABELS, LAYOUT_ORDER, MAX_BOXES, SPLITS, LayoutTemplate, SynonymTable
from .vocab import PAD, UNK, Vocab

FORMAT_VERSION = 1
_SPLIT_CODE = {name: i for i, name in enumerate(SPLITS)}
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_GLYPH = 16


@dataclass
class DatasetConfig:
    height: int = 96
    width: int = 128
    n_train: int = 2000
    n_standard: int = 600
    n_generalization: int = 600
    n_templates: int = 8
    n_generalization_templates: int = 3
    class_proportions: dict = field(default_factory=lambda: {
        "caption": 0.25, "subtitle": 0.25, "person_info": 0.2, "others": 0.3})
    vocab_size: int = 256
    max_tokens: int = 8
    text_overlap: float = 0.85
    synonym_primary: float = 0.7
    max_others_per_frame: int = 3
    others_mimic: float = 0.9
    band_sigma: float = 0.005
    frame_offset: float = 0.2
    tint_jitter: float = 0.5
    noise: float = 0.03

    def validate(self) -> None:
        if self.height < 16 or self.width < 16:
            raise ConfigError(f"frame {self.height}x{self.width} is too small")
        for name in ("n_train", "n_standard", "n_generalization"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_train + self.n_standard + self.n_generalization <= 0:
            raise ConfigError("at least one split needs boxes")
        if self.n_templates < 1:
            raise ConfigError("n_templates must be >= 1")
        if self.n_generalization > 0 and self.n_generalization_templates < 1:
            raise ConfigError("generalization split needs held-out templates "
                              "(>= 2 templates in total)")
        if set(self.class_proportions) != set(LABELS):
            raise ConfigError(f"class_proportions must name exactly {list(LABELS)}")
        props = np.array([self.class_proportions[k] for k in LABELS], dtype=float)
        if (props < 0).any() or not math.isclose(props.sum(), 1.0, abs_tol=1e-9):
            raise ConfigError("class_proportions must be non-negative and sum to 1")
        if self.vocab_size < 64:
            raise ConfigError("vocab_size must be >= 64")
        if not 1 <= self.max_tokens:
            raise ConfigError("max_tokens must be >= 1")
        if not 0.0 <= self.text_overlap <= 1.0:
            raise ConfigError("text_overlap must lie in [0, 1]")
        if not 1 <= self.max_others_per_frame <= MAX_BOXES - len(LAYOUT_ORDER):
            raise ConfigError("max_others_per_frame out of range")
        if not 0.0 <= self.others_mimic <= 1.0:
            raise ConfigError("others_mimic must lie in [0, 1]")


# --------------------------------------------------------------- vocabulary
@dataclass
class Lexicon:
    vocab: Vocab
    pools: dict[str, list[int]]
    synonyms: SynonymTable


def _word(i: int) -> str:
    syll = [c + v for c in _CONSONANTS for v in _VOWELS]
    n = len(syll)
    return syll[i % n] + syll[(i // n) % n] + (syll[(i * 7 + 3) % n] if i >= n * n else "")


def build_lexicon(vocab_size: int) -> Lexicon:
    """Deterministic closed vocabulary partitioned into class pools."""
    n = vocab_size - 2
    shares = {"shared": 0.30, "caption": 0.15, "subtitle": 0.15, "names": 0.20, "titles": 0.05}
    sizes = {k: max(6, int(n * v)) for k, v in shares.items()}
    sizes["filler"] = n - sum(sizes.values())
    words = [PAD, UNK]
    pools: dict[str, list[int]] = {}
    for pool, size in sizes.items():
        ids = []
        for _ in range(size):
            w = _word(len(words))
            words.append(w.capitalize() if pool == "names" else w)
            ids.append(len(words) - 1)
        pools[pool] = ids
    groups = []
    for pool, k in (("shared", 3), ("caption", 3), ("subtitle", 3), ("titles", 2), ("filler", 2)):
        ids = pools[pool]
        chunks = [ids[i:i + k] for i in range(0, len(ids), k)]
        if len(chunks) > 1 and len(chunks[-1]) < 2:
            last = chunks.pop()
            chunks[-1] = chunks[-1] + last
        groups.extend(tuple(c) for c in chunks if len(c) >= 2)
    return Lexicon(Vocab(words), pools, SynonymTable(groups))


def _pool_distribution(lex: Lexicon, pool: str, vocab_size: int, rng, primary: float) -> np.ndarray:
    """Topic-weighted distribution over one pool; within each synonym group a
    randomly chosen member carries ``primary`` of the group mass."""
    p = np.zeros(vocab_size)
    ids = lex.pools[pool]
    groups = [g for g in lex.synonyms.groups if g[0] in ids] or [(i,) for i in ids]
    topic = rng.gamma(2.0, 1.0, len(groups))
    topic /= topic.sum()
    for w, g in zip(topic, groups):
        if len(g) == 1:
            p[g[0]] += w
            continue
        lead = int(rng.integers(len(g)))
        for i, t in enumerate(g):
            p[t] += w * (primary if i == lead else (1 - primary) / (len(g) - 1))
    return p


# ----------------------------------------------------------------- templates
def make_template(program_id: int, cfg: DatasetConfig, lex: Lexicon, seed: int) -> LayoutTemplate:
    rng = np.random.default_rng([seed, 7919, program_id])
    sigma = cfg.band_sigma
    heights = {
        "caption": float(rng.uniform(0.09, 0.12)),
        "person_info": float(rng.uniform(0.07, 0.10)),
        "subtitle": float(rng.uniform(0.08, 0.11)),
    }
    hmax = max(heights.values())
    gap = 4 * sigma + hmax + 0.04
    lo = 0.5 * hmax + 2 * sigma + cfg.frame_offset + 0.01
    hi = 1.0 - lo
    free = hi - lo - 2 * gap
    if free <= 0:
        raise ConfigError("band_sigma/frame_offset too large to fit three ordered bands")
    u = np.sort(rng.uniform(0.0, free, 3)) + np.array([0.0, gap, 2 * gap]) + lo
    bands = {label: (float(m), sigma) for label, m in zip(LAYOUT_ORDER, u)}

    def colour(lo_, hi_):
        return tuple(float(v) for v in rng.uniform(lo_, hi_, 3))

    tints = {label: colour(0.05, 0.95) for label in LAYOUT_ORDER}
    text_colors = {label: colour(0.0, 1.0) for label in LAYOUT_ORDER}
    for label in LAYOUT_ORDER:  # keep glyphs readable against the tint
        t = np.array(tints[label])
        c = np.array(text_colors[label])
        if np.abs(t - c).mean() < 0.35:
            text_colors[label] = tuple(float(v) for v in np.where(t > 0.5, 0.05, 0.95))
    v = cfg.vocab_size
    shared = _pool_distribution(lex, "shared", v, rng, cfg.synonym_primary)
    weights = {}
    for label in ("caption", "subtitle"):
        own = _pool_distribution(lex, label, v, rng, cfg.synonym_primary)
        weights[label] = cfg.text_overlap * shared + (1 - cfg.text_overlap) * own
    weights["person_info"] = _pool_distribution(lex, "names", v, rng, 1.0)
    weights["others"] = np.zeros(v)
    weights["others"][lex.pools["filler"]] = 1.0 / len(lex.pools["filler"])
    tpl = LayoutTemplate(
        program_id=program_id,
        bands=bands,
        heights=heights,
        tints=tints,
        text_colors=text_colors,
        background=colour(0.0, 0.6),
        token_weights=weights,
        frame_offset=cfg.frame_offset,
        tint_jitter=cfg.tint_jitter,
        alignment={label: ("left" if rng.random() < 0.5 else "center") for label in LAYOUT_ORDER},
        margin=float(rng.uniform(0.03, 0.12)),
    )
    tpl.validate()
    return tpl


def template_summary(t: LayoutTemplate) -> dict:
    return {
        "program_id": t.program_id,
        "bands": {k: list(v) for k, v in t.bands.items()},
        "heights": t.heights,
        "tints": {k: list(v) for k, v in t.tints.items()},
        "alignment": t.alignment,
    }


# ------------------------------------------------------------------- texts
def sample_text(label: str, tpl: LayoutTemplate, lex: Lexicon, rng) -> list[int]:
    if label in ("caption", "subtitle"):
        n = int(rng.integers(2, 8))
        return list(rng.choice(len(tpl.token_weights[label]), size=n, p=tpl.token_weights[label]))
    if label == "person_info":
        n = int(rng.integers(1, 3))
        ids = list(rng.choice(len(tpl.token_weights[label]), size=n, p=tpl.token_weights[label]))
        if rng.random() < 0.5:
            ids.append(int(rng.choice(lex.pools["titles"])))
        return ids
    n = int(rng.integers(1, 6))
    return list(rng.choice(len(tpl.token_weights["others"]), size=n, p=tpl.token_weights["others"]))


# ------------------------------------------------------------------ raster
def _glyph_bank(vocab_size: int) -> np.ndarray:
    rng = np.random.default_rng(12345)
    return rng.random((vocab_size, _GLYPH, _GLYPH)) < 0.45


def _text_width_px(words: list[str]) -> int:
    return sum(2 + min(len(w), 10) for w in words) + 2 * (len(words) - 1) + 4


def _draw_box(img, x0, y0, x1, y1, tint, text_color, token_ids, words, glyphs):
    if tint is not None:
        img[:, y0:y1, x0:x1] = np.asarray(tint)[:, None, None]
    inner_y0, inner_y1 = y0 + 1, y1 - 1
    x = x0 + 2
    h = max(inner_y1 - inner_y0, 1)
    col = np.asarray(text_color)[:, None, None]
    for tid, w in zip(token_ids, words):
        ww = 2 + min(len(w), 10)
        if x + ww > x1 - 1:
            break
        mask = glyphs[tid, :h, :ww]
        region = img[:, inner_y0:inner_y0 + h, x:x + ww]
        region[:, mask[:region.shape[1], :region.shape[2]]] = col[:, :, 0]
        x += ww + 2


def _overlaps(a, b) -> bool:
    return not (a[2] <= b[0] or b[2] <= a[0] or a[3] <= b[1] or b[3] <= a[1])


def render_frame(cfg: DatasetConfig, tpl: LayoutTemplate, labels: list[str], lex: Lexicon,
                 glyphs: np.ndarray, rng: np.random.Generator):
    """Return (raster, boxes) with boxes as (pixel rect, token ids, label)."""
    H, W = cfg.height, cfg.width
    img = np.empty((3, H, W))
    bg = np.asarray(tpl.background)
    ramp = np.linspace(-0.1, 0.1, H)[None, :, None]
    img[:] = bg[:, None, None] + ramp
    for _ in range(int(rng.integers(2, 5))):  # scene clutter
        ry0, rx0 = int(rng.integers(0, H - 4)), int(rng.integers(0, W - 4))
        ry1, rx1 = int(rng.integers(ry0 + 3, H + 1)), int(rng.integers(rx0 + 3, W + 1))
        c = rng.uniform(0.0, 1.0, 3)
        img[:, ry0:ry1, rx0:rx1] = 0.5 * img[:, ry0:ry1, rx0:rx1] + 0.5 * c[:, None, None]
    img += rng.normal(0.0, cfg.noise, img.shape)

    offset = rng.uniform(-tpl.frame_offset, tpl.frame_offset)
    placed = []
    for label in [l for l in LAYOUT_ORDER if l in labels]:
        ids = sample_text(label, tpl, lex, rng)
        words = [lex.vocab.words[i] for i in ids]
        mu, sigma = tpl.bands[label]
        yc = mu + offset + float(np.clip(rng.normal(0.0, sigma), -2 * sigma, 2 * sigma))
        hp = max(5, int(round(tpl.heights[label] * H)))
        y0 = int(round(yc * H - hp / 2))
        y0 = min(max(y0, 0), H - hp)
        wp = min(_text_width_px(words), W - 2)
        jitter = int(round(rng.uniform(-0.02, 0.02) * W))
        if tpl.alignment[label] == "left":
            x0 = int(round(tpl.margin * W)) + jitter
        else:
            x0 = (W - wp) // 2 + jitter
        x0 = min(max(x0, 0), W - wp)
        tint = np.clip(np.asarray(tpl.tints[label]) + rng.uniform(-tpl.tint_jitter, tpl.tint_jitter, 3), 0, 1)
        placed.append(((x0, y0, x0 + wp, y0 + hp), ids, words, label, tint, tpl.text_colors[label]))

    for _ in range(labels.count("others")):
        ids = sample_text("others", tpl, lex, rng)
        words = [lex.vocab.words[i] for i in ids]
        # most "others" borrow the look of one of the program's text classes
        style = LAYOUT_ORDER[int(rng.integers(3))] if rng.random() < cfg.others_mimic else None
        if style is None:
            hp = max(5, int(round(rng.uniform(0.05, 0.09) * H)))
            tint = rng.uniform(0.0, 1.0, 3) if rng.random() < 0.5 else None
            tcol = tuple(rng.uniform(0.0, 1.0, 3))
        else:
            hp = max(5, int(round(tpl.heights[style] * H)))
            tint = np.clip(np.asarray(tpl.tints[style]) + rng.uniform(-tpl.tint_jitter, tpl.tint_jitter, 3), 0, 1)
            tcol = tpl.text_colors[style]
        wp = min(_text_width_px(words), W - 2)
        rect = None
        for _attempt in range(50):
            x0 = int(rng.integers(0, W - wp + 1))
            y0 = int(rng.integers(0, H - hp + 1))
            rect = (x0, y0, x0 + wp, y0 + hp)
            if not any(_overlaps(rect, p[0]) for p in placed):
                break
        placed.append((rect, ids, words, "others", tint, tcol))

    for rect, ids, words, label, tint, tcol in sorted(placed, key=lambda p: p[3] != "others"):
        _draw_box(img, *rect, tint, tcol, ids, words, glyphs)
    order = rng.permutation(len(placed))
    boxes = [(placed[i][0], placed[i][1], placed[i][3]) for i in order]
    return quantize(img), boxes


# -------------------------------------------------------------------- plan
def class_counts(n_boxes: int, proportions: dict) -> dict[str, int]:
    """Largest-remainder apportionment of ``n_boxes`` over the classes."""
    raw = np.array([proportions[k] * n_boxes for k in LABELS])
    base = np.floor(raw).astype(int)
    rest = n_boxes - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return {k: int(v) for k, v in zip(LABELS, base)}


def plan_frames(counts: dict[str, int], max_others: int, rng) -> list[list[str]]:
    """Distribute exact class counts over frames: at most one caption,
    person_info and subtitle per frame, at most ``max_others`` others."""
    main = max(counts[k] for k in LAYOUT_ORDER)
    n_frames = max(math.ceil(main / 0.85), math.ceil(counts["others"] / max_others), 1)
    frames: list[list[str]] = [[] for _ in range(n_frames)]
    for label in LAYOUT_ORDER:
        for i in rng.choice(n_frames, size=counts[label], replace=False):
            frames[int(i)].append(label)
    remaining = counts["others"]
    for f in frames:
        if remaining and not f:
            f.append("others")
            remaining -= 1
    while remaining:
        open_ = [i for i, f in enumerate(frames) if f.count("others") < max_others]
        frames[int(rng.choice(open_))].append("others")
        remaining -= 1
    return [f for f in frames if f]


# -------------------------------------------------------------------- main
def generate_dataset(config: DatasetConfig, out_dir: str | Path, seed: int) -> dict:
    """Write a dataset directory and return its manifest."""
    config.validate()
    out = Path(out_dir)
    try:
        (out / "frames").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc

    lex = build_lexicon(config.vocab_size)
    glyphs = _glyph_bank(config.vocab_size)
    seen_ids = list(range(config.n_templates))
    held_ids = list(range(config.n_templates, config.n_templates + config.n_generalization_templates))
    templates = {pid: make_template(pid, config, lex, seed) for pid in seen_ids + held_ids}
    programs = {"train": seen_ids, "standard": seen_ids, "generalization": held_ids}
    sizes = {"train": config.n_train, "standard": config.n_standard,
             "generalization": config.n_generalization}

    records = []
    counts = {}
    for split in SPLITS:
        if sizes[split] == 0:
            counts[split] = {"frames": 0, "boxes": 0, "per_class": {k: 0 for k in LABELS}}
            continue
        want = class_counts(sizes[split], config.class_proportions)
        plan = plan_frames(want, config.max_others_per_frame,
                           np.random.default_rng([seed, _SPLIT_CODE[split], 104729]))
        for i, labels in enumerate(plan):
            rng = np.random.default_rng([seed, _SPLIT_CODE[split], i])
            pid = int(rng.choice(programs[split]))
            raster, boxes = render_frame(config, templates[pid], labels, lex, glyphs, rng)
            rel = f"frames/{split}_{i:05d}.ppm"
            (out / rel).write_bytes(encode_ppm(raster))
            for (x0, y0, x1, y1), ids, label in boxes:
                records.append({
                    "frame": rel,
                    "box": [x0 / config.width, y0 / config.height,
                            x1 / config.width, y1 / config.height],
                    "text": " ".join(lex.vocab.words[t] for t in ids),
                    "label": label,
                    "split": split,
                    "program_id": pid,
                })
        counts[split] = {"frames": len(plan), "boxes": sizes[split], "per_class": want}

    with open(out / "annotations.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    (out / "vocab.json").write_text(json.dumps(
        {**lex.vocab.to_json(), "max_tokens": config.max_tokens}, sort_keys=True) + "\n")
    (out / "synonyms.json").write_text(json.dumps(
        {"groups": [list(g) for g in lex.synonyms.groups]}, sort_keys=True) + "\n")
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "config": to_dict(config),
        "counts": counts,
        "programs": programs,
        "templates": [template_summary(templates[p]) for p in sorted(templates)],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
