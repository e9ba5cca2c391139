import numpy as np
import pytest

from cgmm.data import DatasetConfig, generate_dataset, load_dataset, load_synonyms, load_vocab
from cgmm.model import ModelConfig


def small_dataset_config(**overrides):
    base = dict(n_train=120, n_standard=40, n_generalization=40, n_templates=3,
                n_generalization_templates=2)
    base.update(overrides)
    return DatasetConfig(**base)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A small generated dataset directory shared by the whole session."""
    root = tmp_path_factory.mktemp("small_ds")
    generate_dataset(small_dataset_config(), root, seed=3)
    return root


@pytest.fixture(scope="session")
def small_samples(small_dataset):
    return load_dataset(small_dataset)


@pytest.fixture(scope="session")
def small_synonyms(small_dataset):
    return load_synonyms(small_dataset)


@pytest.fixture(scope="session")
def small_model_config(small_dataset):
    vocab, max_tokens = load_vocab(small_dataset)
    return ModelConfig(vocab_size=len(vocab), max_tokens=max_tokens)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def tiny(model_config):
    """Narrow widths for fast training tests."""
    from dataclasses import replace
    return replace(model_config, cnn_channels=[4, 8, 8], d_model=16, n_heads=2, d_ff=16, n_layers=1,
                   d_vis=8, d_text=8, text_layers=1, text_heads=2, text_ff=16, d_corr=8)


@pytest.fixture(scope="session")
def tiny_config(small_model_config):
    return tiny(small_model_config)


# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
