"""Closed vocabulary and whitespace tokenizer."""

from __future__ import annotations

from dataclasses import dataclass, field

PAD = "<pad>"
UNK = "<unk>"


@dataclass
class Vocab:
    words: list[str]
    pad_id: int = 0
    unk_id: int = 1
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary words must be unique")
        self._index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        return self._index.get(word, self.unk_id)

    def decode(self, ids) -> str:
        return " ".join(self.words[i] for i in ids if i != self.pad_id)

    def to_json(self) -> dict:
        return {"words": list(self.words), "pad_id": self.pad_id, "unk_id": self.unk_id}

    @classmethod
    def from_json(cls, data: dict) -> "Vocab":
        return cls(list(data["words"]), int(data["pad_id"]), int(data["unk_id"]))


def tokenize(raw_text: str, vocab: Vocab, max_tokens: int) -> list[int]:
    ids = [vocab.id_of(w) for w in raw_text.split()][:max_tokens]
    return ids + [vocab.pad_id] * (max_tokens - len(ids))
