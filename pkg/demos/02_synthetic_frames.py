# The synthetic news-frame generator: programs, splits and what a frame holds.

import json
import tempfile
from collections import Counter
from pathlib import Path

from cgmm.data import DatasetConfig, generate_dataset, load_dataset, load_synonyms

out = Path(tempfile.mkdtemp()) / "frames"
cfg = DatasetConfig(n_train=200, n_standard=60, n_generalization=60, n_templates=3, n_generalization_templates=2)
manifest = generate_dataset(cfg, out, seed=0)

print("files:", sorted(p.name for p in out.iterdir()))
print("programs per split:", manifest["programs"])
print(json.dumps(manifest["counts"]["train"], indent=1))

samples = load_dataset(out)
by_split = Counter(s.split_tag for s in samples)
print("frames per split:", dict(by_split))

# One frame, top to bottom. Caption sits above person info above subtitle;
# "others" boxes land anywhere and usually borrow one of those looks.
frame = samples[0]
print("frame", frame.path, frame.frame.shape)
for b in sorted(frame.boxes, key=lambda b: b.box[1]):
    print(f"  {b.label:12s} y={b.box[1]:.2f}..{b.box[3]:.2f}  {b.raw_text}")

syn = load_synonyms(out)
print("first synonym groups:", syn.groups[:3])

# Same seed, same bytes.
again = Path(tempfile.mkdtemp()) / "frames"
generate_dataset(cfg, again, seed=0)
print("annotations identical:", (out / "annotations.jsonl").read_bytes() == (again / "annotations.jsonl").read_bytes())
