from __future__ import annotations

import random
from pathlib import Path

import pytest

from logveil_backend.config import BridgeConfig
from logveil_backend.testing import make_tiny_base
from logveil_backend.train import backend_train

NAMES = ["webmaster", "alice", "bob", "carol", "deploy", "nagios", "erin", "trent"]
WORDS = ["probe", "sync", "flush", "mount", "renew", "drain", "spool", "track"]


def synth_rows(n: int, seed: int) -> list[tuple[list[str], list[str]]]:
    """Simple labeled log lines in the coarse scheme (self-generated)."""
    rng = random.Random(seed)
    lines = []
    for _ in range(n):
        roll = rng.randrange(4)
        ip = ".".join(str(rng.randint(1, 254)) for _ in range(4))
        if roll == 0:
            toks = ["Invalid", "user", rng.choice(NAMES), "from", ip]
            labs = ["O", "O", "B-USERNAME", "O", "B-NET"]
        elif roll == 1:
            port = str(rng.randint(80, 65000))
            toks = [rng.choice(WORDS), f"{ip}:{port}", "ok"]
            labs = ["O", "B-NET", "O"]
        elif roll == 2:
            path = "/" + "/".join(rng.choice(WORDS) for _ in range(2)) + ".log"
            toks = [rng.choice(WORDS), path, "done"]
            labs = ["O", "B-FILEPATH", "O"]
        else:
            toks = [rng.choice(WORDS), str(rng.randint(0, 9999)), "retries"]
            labs = ["O", "O", "O"]
        lines.append((toks, labs))
    return lines


def write_ann(lines, path: Path, with_sidecar: bool = True) -> Path:
    rows = []
    for toks, labs in lines:
        rows.append("# raw: " + " ".join(toks))
        for tok, lab in zip(toks, labs):
            if with_sidecar and lab == "B-NET":
                sub = "IP,PORT" if ":" in tok else "IP"
                rows.append(f"{tok}\t{lab}\t{sub}")
            else:
                rows.append(f"{tok}\t{lab}")
        rows.append("")
    path.write_text("\n".join(rows), encoding="latin-1")
    return path


@pytest.fixture(scope="session")
def tiny_base(tmp_path_factory) -> Path:
    return make_tiny_base(tmp_path_factory.mktemp("base"))


@pytest.fixture(scope="session")
def smoke_cfg(tiny_base) -> BridgeConfig:
    # the published recipe tunes a pretrained encoder; this randomly
    # initialized miniature needs a larger step and a few more passes
    return BridgeConfig(
        base_checkpoint=str(tiny_base),
        learning_rate=5e-4,
        epochs=12,
        eval_every=50,
        batch_size=8,
        seed=0,
    )


@pytest.fixture(scope="session")
def coarse_checkpoint(tmp_path_factory, smoke_cfg) -> Path:
    root = tmp_path_factory.mktemp("ckpt")
    corpus = write_ann(synth_rows(200, seed=1), root / "train.ann.tsv")
    return backend_train(corpus, smoke_cfg, root / "model")
