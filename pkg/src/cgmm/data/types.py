"""Frame / box / label data model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LABELS = ("caption", "subtitle", "person_info", "others")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}
SPLITS = ("train", "standard", "generalization")
LAYOUT_ORDER = ("caption", "person_info", "subtitle")  # top to bottom
MAX_BOXES = 16


class DataError(ValueError):
    """A record violates the data model."""


def validate_box(box) -> tuple[float, float, float, float]:
    if len(box) != 4:
        raise DataError(f"box needs 4 coordinates, got {len(box)}")
    x0, y0, x1, y1 = (float(v) for v in box)
    if not (0.0 <= x0 < x1 <= 1.0):
        raise DataError(f"box x-range invalid: x0={x0}, x1={x1}")
    if not (0.0 <= y0 < y1 <= 1.0):
        raise DataError(f"box y-range invalid: y0={y0}, y1={y1}")
    return x0, y0, x1, y1


@dataclass(frozen=True)
class TextBox:
    box: tuple[float, float, float, float]
    tokens: tuple[int, ...]
    raw_text: str
    label: str
    pad_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "box", validate_box(self.box))
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not any(t != self.pad_id for t in self.tokens):
            raise DataError(f"text box has no tokens: {self.raw_text!r}")
        if self.label not in LABEL_INDEX:
            raise DataError(f"unknown label {self.label!r}")

    @property
    def label_index(self) -> int:
        return LABEL_INDEX[self.label]

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)


@dataclass
class FrameSample:
    frame: np.ndarray  # [3, H, W] in [0, 1]
    boxes: list[TextBox]
    split_tag: str
    program_id: int
    path: str = ""

    def __post_init__(self):
        if self.frame.ndim != 3 or self.frame.shape[0] != 3:
            raise DataError(f"frame must be 3xHxW, got {self.frame.shape}")
        if not 1 <= len(self.boxes) <= MAX_BOXES:
            raise DataError(f"frame has {len(self.boxes)} boxes, expected 1..{MAX_BOXES}")
        if self.split_tag not in SPLITS:
            raise DataError(f"unknown split {self.split_tag!r}")

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label_index for b in self.boxes], dtype=np.intp)


@dataclass
class LayoutTemplate:
    """Per-program layout: vertical bands, tints, vocabulary emphasis, jitter."""

    program_id: int
    bands: dict[str, tuple[float, float]]  # label -> (mean y-center, sigma)
    heights: dict[str, float]
    tints: dict[str, tuple[float, float, float]]
    text_colors: dict[str, tuple[float, float, float]]
    background: tuple[float, float, float]
    token_weights: dict[str, np.ndarray] = field(default_factory=dict)
    frame_offset: float = 0.05
    tint_jitter: float = 0.05
    alignment: dict[str, str] = field(default_factory=dict)
    margin: float = 0.05

    def validate(self) -> None:
        # Per-frame y-centers are clipped to mean +- 2 sigma plus a shared offset,
        # so non-overlapping clipped bands guarantee the ordering in every frame.
        for upper, lower in zip(LAYOUT_ORDER, LAYOUT_ORDER[1:]):
            mu_u, s_u = self.bands[upper]
            mu_l, s_l = self.bands[lower]
            if not mu_u + 2 * s_u < mu_l - 2 * s_l:
                raise DataError(
                    f"template {self.program_id}: band {upper} ({mu_u:.3f}+-{2 * s_u:.3f}) "
                    f"must lie above {lower} ({mu_l:.3f}+-{2 * s_l:.3f})")
        for label in LAYOUT_ORDER:
            mu, s = self.bands[label]
            half = 0.5 * self.heights[label]
            if mu - 2 * s - self.frame_offset - half < 0 or mu + 2 * s + self.frame_offset + half > 1:
                raise DataError(f"template {self.program_id}: band {label} leaves the frame")


@dataclass
class SynonymTable:
    groups: list[tuple[int, ...]]

    def __post_init__(self):
        seen: set[int] = set()
        for g in self.groups:
            if len(g) < 2:
                raise DataError(f"synonym group {g} has fewer than 2 members")
            if seen & set(g):
                raise DataError(f"synonym group {g} overlaps an earlier group")
            seen |= set(g)
        self._lookup = {t: g for g in self.groups for t in g}

    def group_of(self, token: int) -> tuple[int, ...] | None:
        return self._lookup.get(int(token))
