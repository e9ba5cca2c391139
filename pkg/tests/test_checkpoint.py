import json

import numpy as np
import pytest

from cgmm.checkpoint import CheckpointError, load_checkpoint, read_manifest, save_checkpoint
from cgmm.model import CGMM, make_batch
from cgmm.numeric import AdamState, no_grad
from cgmm.train import model_checkpoint, model_from_checkpoint


@pytest.fixture
def saved(tmp_path, tiny_config):
    model = CGMM(tiny_config, 7)
    params = model.parameters()
    opt = AdamState(lr=1e-3, first_moment={k: np.full(p.shape, 0.5) for k, p in params.items()},
                    second_moment={k: np.full(p.shape, 0.25) for k, p in params.items()}, step_count=3)
    ckpt = model_checkpoint(model, opt_state=opt, seed=7, rng={"epochs_done": 2}, extra={"phase": "train"})
    path = save_checkpoint(ckpt, tmp_path / "ckpt")
    return model, ckpt, path


def test_round_trip_forward_bit_exact(saved, small_samples):
    model, _, path = saved
    back = model_from_checkpoint(load_checkpoint(path))
    rng = np.random.default_rng(0)
    with no_grad():
        for _ in range(20):
            idx = rng.choice(len(small_samples), size=int(rng.integers(1, 4)), replace=False)
            batch = make_batch([small_samples[i] for i in idx])
            a = model(batch).logits.data
            b = back(batch).logits.data
            assert a.tobytes() == b.tobytes()


def test_round_trip_fields(saved):
    _, ckpt, path = saved
    back = load_checkpoint(path)
    assert back.seed == 7 and back.rng == {"epochs_done": 2} and back.extra == {"phase": "train"}
    assert back.model_config == ckpt.model_config
    assert back.optimizer.step_count == 3
    for k, v in ckpt.params.items():
        assert back.params[k].tobytes() == v.tobytes()
        assert np.all(back.optimizer.first_moment[k] == 0.5)


def test_save_is_deterministic(saved, tmp_path):
    _, ckpt, path = saved
    other = save_checkpoint(ckpt, tmp_path / "again")
    for name in ("manifest.json", "tensors.bin"):
        assert (path / name).read_bytes() == (other / name).read_bytes()


def test_overwrite_replaces(saved):
    _, ckpt, path = saved
    save_checkpoint(ckpt, path)
    load_checkpoint(path)


def test_truncated_blob_names_first_unreadable_tensor(saved):
    _, _, path = saved
    manifest = read_manifest(path)
    blob = (path / "tensors.bin").read_bytes()
    victim = manifest["tensors"][3]
    (path / "tensors.bin").write_bytes(blob[:victim["offset"] + 4])
    with pytest.raises(CheckpointError, match=f"tensor {victim['name']}: blob truncated"):
        load_checkpoint(path)


def test_edited_shape_rejected_before_loading(saved):
    _, _, path = saved
    manifest = json.loads((path / "manifest.json").read_text())
    entry = manifest["tensors"][1]
    entry["shape"] = entry["shape"][:-1] + [entry["shape"][-1] + 1]
    (path / "manifest.json").write_text(json.dumps(manifest))
    (path / "tensors.bin").unlink()  # nothing may be read
    with pytest.raises(CheckpointError, match=entry["name"]):
        load_checkpoint(path)


def test_expected_shapes_checked_before_blob(saved, tiny_config):
    from dataclasses import replace
    _, _, path = saved
    (path / "tensors.bin").unlink()
    other = CGMM(replace(tiny_config, d_corr=4), 0)
    with pytest.raises(CheckpointError, match="correlation"):
        load_checkpoint(path, {k: p.shape for k, p in other.parameters().items()})


def test_version_mismatch(saved):
    _, _, path = saved
    manifest = json.loads((path / "manifest.json").read_text())
    manifest["format_version"] = 99
    (path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(path)


def test_blob_is_little_endian_float64(saved):
    _, ckpt, path = saved
    manifest = read_manifest(path)
    first = manifest["tensors"][0]
    raw = (path / "tensors.bin").read_bytes()[first["offset"]:first["offset"] + first["nbytes"]]
    name = first["name"].split("/", 1)[1]
    np.testing.assert_array_equal(np.frombuffer(raw, "<f8"), ckpt.params[name].ravel())
