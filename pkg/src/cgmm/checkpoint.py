"""Checkpoint format: ``manifest.json`` + little-endian float64 ``tensors.bin``.

The manifest records the format version, configs, seed/progress and, per
tensor, its name, shape, byte offset and byte length. Both files are written
into a temporary directory that is then renamed into place.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import AdamState

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "tensors.bin"


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint; messages name the tensor."""


@dataclass
class Checkpoint:
    model_config: dict
    params: dict[str, np.ndarray]
    train_config: dict = field(default_factory=dict)
    optimizer: AdamState | None = None
    seed: int = 0
    rng: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _tensors(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    items = [(f"model/{k}", v) for k, v in ckpt.params.items()]
    if ckpt.optimizer is not None:
        items += [(f"adam.m/{k}", v) for k, v in ckpt.optimizer.first_moment.items()]
        items += [(f"adam.v/{k}", v) for k, v in ckpt.optimizer.second_moment.items()]
    return items


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, arr in _tensors(ckpt):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    opt = None
    if ckpt.optimizer is not None:
        o = ckpt.optimizer
        opt = {"lr": o.lr, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps, "step_count": o.step_count}
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "optimizer": opt,
        "seed": ckpt.seed,
        "rng": ckpt.rng,
        "extra": ckpt.extra,
        "blob_bytes": offset,
        "tensors": entries,
    }
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        (tmp / BLOB).write_bytes(b"".join(chunks))
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    return path


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path / MANIFEST}: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}, "
                              f"expected {FORMAT_VERSION}")
    return manifest


def load_checkpoint(path: str | Path, expected_shapes: dict[str, tuple] | None = None) -> Checkpoint:
    """Read a checkpoint. With ``expected_shapes`` (parameter name -> shape),
    the manifest is checked against it before any tensor data is read."""
    path = Path(path)
    manifest = read_manifest(path)
    entries = manifest["tensors"]
    offset = 0
    for e in entries:
        size = 8 * int(np.prod(e["shape"], dtype=np.int64))
        if e["nbytes"] != size or e["offset"] != offset:
            raise CheckpointError(f"tensor {e['name']}: shape {e['shape']} disagrees with "
                                  f"recorded extent (offset {e['offset']}, {e['nbytes']} bytes)")
        offset += size
    if expected_shapes is not None:
        present = {e["name"][len("model/"):]: tuple(e["shape"])
                   for e in entries if e["name"].startswith("model/")}
        for name, shape in expected_shapes.items():
            if name not in present:
                raise CheckpointError(f"tensor model/{name}: missing from checkpoint")
            if tuple(present[name]) != tuple(shape):
                raise CheckpointError(f"tensor model/{name}: shape {list(present[name])} "
                                      f"does not match model shape {list(shape)}")
        extra = sorted(set(present) - set(expected_shapes))
        if extra:
            raise CheckpointError(f"tensor model/{extra[0]}: not a parameter of this model")

    blob = (path / BLOB).read_bytes() if (path / BLOB).exists() else b""
    params, m, v = {}, {}, {}
    for e in entries:
        end = e["offset"] + e["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"tensor {e['name']}: blob truncated "
                                  f"({len(blob)} bytes, need {end})")
        arr = np.frombuffer(blob, dtype="<f8", count=e["nbytes"] // 8, offset=e["offset"])
        arr = arr.astype(np.float64).reshape(e["shape"])
        kind, name = e["name"].split("/", 1)
        {"model": params, "adam.m": m, "adam.v": v}[kind][name] = arr
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointError(f"{path / BLOB}: {len(blob)} bytes, manifest records {manifest['blob_bytes']}")
    opt = None
    if manifest.get("optimizer"):
        o = manifest["optimizer"]
        opt = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
                        step_count=o["step_count"], first_moment=m, second_moment=v)
    return Checkpoint(manifest["model_config"], params, manifest.get("train_config", {}), opt,
                      manifest.get("seed", 0), manifest.get("rng", {}), manifest.get("extra", {}))
