"""Shared fixtures. Session-scoped where construction is expensive."""

import numpy as np
import pytest

from mdbench.data import Dataset, Label, Record, Scheme
from mdbench.encoder import EncoderConfig, init_model
from mdbench.synthetic import make_separable
from mdbench.tokenization import Vocab, build_vocab


@pytest.fixture(scope="session")
def separable():
    return make_separable()


@pytest.fixture(scope="session")
def separable_vocab(separable):
    return build_vocab((" ".join(r.words) for r in separable.records), merges=60)


@pytest.fixture(scope="session")
def tiny_cfg(separable_vocab):
    return EncoderConfig(
        layers=2, heads=2, hidden=16, ff_dim=32, max_len=32,
        vocab_size=len(separable_vocab), dropout_rate=0.0, seed=0,
    )


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg):
    return init_model(tiny_cfg, num_classes=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def binary_record(rid, words, aspect, value, dataset="unit"):
    return Record(
        id=rid,
        words=tuple(words.split()),
        aspect_index=aspect,
        label=Label(scheme=Scheme.BINARY_MOH, value=value),
        dataset=dataset,
    )


@pytest.fixture
def tiny_dataset():
    return Dataset(
        name="unit",
        scheme=Scheme.BINARY_MOH,
        records=(
            binary_record("r1", "he absorbed the knowledge of his tribe", 1, 1),
            binary_record("r2", "the sponge absorbed the spilled water", 2, 0),
            binary_record("r3", "her husband often abuses alcohol", 3, 1),
            binary_record("r4", "the court abused its power", 2, 1),
            binary_record("r5", "she opened the old wooden door", 4, 0),
            binary_record("r6", "he devoured the last slice", 1, 0),
        ),
    )
