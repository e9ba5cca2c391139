# Checkpoints: manifest + raw little-endian float64 blob, bit-exact round trip.

import json
import tempfile
from pathlib import Path

import numpy as np

from cgmm.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from cgmm.gradsuite import three_box_frame, tiny_model_config
from cgmm.model import CGMM, make_batch
from cgmm.train import model_checkpoint, model_from_checkpoint

model = CGMM(tiny_model_config(), seed=5)
path = save_checkpoint(model_checkpoint(model, seed=5), Path(tempfile.mkdtemp()) / "ckpt")
manifest = json.loads((path / "manifest.json").read_text())
print("tensors:", len(manifest["tensors"]), "blob bytes:", manifest["blob_bytes"])
print(manifest["tensors"][0])

batch = make_batch([three_box_frame(np.random.default_rng(0))])
again = model_from_checkpoint(load_checkpoint(path))
print("bit-exact logits:", model(batch).logits.data.tobytes() == again(batch).logits.data.tobytes())

blob = path / "tensors.bin"
blob.write_bytes(blob.read_bytes()[:1000])
try:
    load_checkpoint(path)
except CheckpointError as exc:
    print("truncated:", exc)
