from __future__ import annotations

from pathlib import Path

import pytest

from logveil import synthetic
from logveil.corpus import load_dataset_dir
from logveil.regexbank import builtin_bank
from logveil.tagger import TrainConfig, train
from logveil.tokenize import derive_net_corpus

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def bank():
    return builtin_bank()


@pytest.fixture(scope="session")
def bank_by_id(bank):
    return {p.id: p for p in bank}


@pytest.fixture(scope="session")
def mini_ds():
    return load_dataset_dir(DATA / "mini")


@pytest.fixture(scope="session")
def macfix_ds():
    return load_dataset_dir(DATA / "macfix")


@pytest.fixture(scope="session")
def small_corpus():
    """Mixed-dialect synthetic lines used by tagger and CLI tests."""
    return synthetic.mixed_corpus(900, seed=11)


@pytest.fixture(scope="session")
def trained_models(small_corpus):
    """A small but usable coarse + net model pair (shared; read-only)."""
    cfg = TrainConfig(epochs=3, eval_every=400, seed=3)
    coarse = train(small_corpus[:800], cfg, heldout=small_corpus[800:])
    net_lines, issues = derive_net_corpus(small_corpus[:800])
    assert not issues
    net = train(net_lines, cfg)
    return coarse, net
