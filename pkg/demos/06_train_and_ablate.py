# Train the full model and two ablations on a small generated set.
# Takes a couple of minutes on one core.

import tempfile
from dataclasses import replace
from pathlib import Path

from cgmm.data import DatasetConfig, generate_dataset, load_dataset, load_synonyms, load_vocab
from cgmm.model import ModelConfig
from cgmm.train import AblationSpec, TrainConfig, ablate

root = Path(tempfile.mkdtemp()) / "ds"
generate_dataset(DatasetConfig(n_train=400, n_standard=120, n_generalization=120, n_templates=4,
                               n_generalization_templates=2), root, seed=0)
samples, syn = load_dataset(root), load_synonyms(root)
vocab, max_tokens = load_vocab(root)
model_cfg = ModelConfig(vocab_size=len(vocab), max_tokens=max_tokens)
model_cfg = replace(model_cfg, cnn_channels=[4, 8, 8], d_model=16, n_heads=2, d_ff=16, n_layers=1,
                    d_vis=16, d_text=16, text_layers=1, text_heads=2, text_ff=16, d_corr=16)
train_cfg = TrainConfig(epochs=6, lr=2e-3, eval_each_epoch=False)

grid = [AblationSpec("full"), AblationSpec("w/o NLP", ["NLP"]), AblationSpec("w/o CorrelationNet", ["CorrelationNet"])]
rows, reports = ablate(samples, syn, model_cfg, train_cfg, grid, seed=0)
for name, per_split in reports.items():
    print(f"{name:20s}", "  ".join(f"{s} F1={r.macro_f1:.3f}" for s, r in per_split.items()))
print(reports["full"]["standard"].summary())
