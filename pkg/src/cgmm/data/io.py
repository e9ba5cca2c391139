"""Loading a generated dataset directory."""

from __future__ import annotations

import json
from pathlib import Path

from .ppm import PPMFormatError, read_frame
from .types import SPLITS, DataError, FrameSample, SynonymTable, TextBox
from .vocab import Vocab, tokenize


class DatasetLoadError(ValueError):
    """The dataset directory is inconsistent; messages name the file and line."""


def load_vocab(root: str | Path) -> tuple[Vocab, int]:
    data = json.loads((Path(root) / "vocab.json").read_text())
    return Vocab.from_json(data), int(data["max_tokens"])


def load_synonyms(root: str | Path) -> SynonymTable:
    data = json.loads((Path(root) / "synonyms.json").read_text())
    return SynonymTable([tuple(g) for g in data["groups"]])


def load_dataset(root: str | Path, splits=None) -> list[FrameSample]:
    """Parse ``annotations.jsonl`` (one record per box), validate every box
    and attach the referenced frames. Frames keep first-appearance order."""
    root = Path(root)
    ann = root / "annotations.jsonl"
    if not ann.exists():
        raise DatasetLoadError(f"{ann}: annotations file missing")
    lines = ann.read_text().splitlines()
    if not any(line.strip() for line in lines):
        return []
    try:
        vocab, max_tokens = load_vocab(root)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DatasetLoadError(f"{root / 'vocab.json'}: {exc}") from exc

    grouped: dict[str, dict] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"annotations.jsonl:{lineno}"
        try:
            rec = json.loads(line)
            tokens = tokenize(rec["text"], vocab, max_tokens)
            box = TextBox(tuple(rec["box"]), tokens, rec["text"], rec["label"], vocab.pad_id)
            split, pid, frame = rec["split"], int(rec["program_id"]), rec["frame"]
        except (json.JSONDecodeError, KeyError, TypeError, DataError, ValueError) as exc:
            raise DatasetLoadError(f"{where}: {type(exc).__name__}: {exc}") from exc
        if split not in SPLITS:
            raise DatasetLoadError(f"{where}: unknown split {split!r}")
        entry = grouped.setdefault(frame, {"split": split, "program_id": pid, "boxes": [], "line": lineno})
        if entry["split"] != split or entry["program_id"] != pid:
            raise DatasetLoadError(f"{where}: frame {frame} has inconsistent split/program_id")
        entry["boxes"].append(box)

    samples = []
    for frame, entry in grouped.items():
        if splits is not None and entry["split"] not in splits:
            continue
        path = root / frame
        if not path.exists():
            raise DatasetLoadError(f"annotations.jsonl:{entry['line']}: missing frame file {frame}")
        try:
            raster = read_frame(path)
            samples.append(FrameSample(raster, entry["boxes"], entry["split"], entry["program_id"], frame))
        except (PPMFormatError, DataError) as exc:
            raise DatasetLoadError(f"annotations.jsonl:{entry['line']}: {frame}: {exc}") from exc
    return samples


def split_samples(samples: list[FrameSample], split: str) -> list[FrameSample]:
    return [s for s in samples if s.split_tag == split]
