"""Fine-tune a token-classification encoder on an annotated corpus.

A single classification head over the encoder projects each token's
representation onto the IOB label space; loss is cross-entropy on the
token-level annotations.  Whitespace tokens map to their *first* subword for
both labeling and prediction, so every token receives exactly one label
regardless of how the subword tokenizer splits it.

Checkpoints are written every ``eval_every`` optimizer steps together with a
validation pass; the weights with the lowest validation loss are what ends
up in the output directory, alongside ``bridge-meta.json`` (provenance) and
``metrics.json`` (the loss curve).
"""
from __future__ import annotations

import json
import random
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .config import BridgeConfig
from .data import MODE_LABELS, infer_mode, read_ann_tsv, validate_labels

META_FILE = "bridge-meta.json"


class BackendError(RuntimeError):
    pass


def _load_base(name: str, num_labels: int):
    from transformers import AutoModelForTokenClassification, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModelForTokenClassification.from_pretrained(
            name, num_labels=num_labels, ignore_mismatched_sizes=True
        )
    except Exception as e:  # download failure, missing dir, bad weights
        raise BackendError(f"cannot load base checkpoint {name!r}: {e}") from e
    return tokenizer, model


def _encode(tokenizer, tokens: list[str], labels: list[str] | None,
            label_to_id: dict[str, int], max_length: int):
    enc = tokenizer(
        tokens,
        is_split_into_words=True,
        truncation=True,
        max_length=max_length,
    )
    if labels is not None:
        ids = []
        prev_word = None
        for word in enc.word_ids():
            if word is None or word == prev_word:
                ids.append(-100)  # specials and continuation subwords
            else:
                ids.append(label_to_id[labels[word]])
            prev_word = word
        enc["labels"] = ids
    return enc


class _Collator:
    def __init__(self, tokenizer):
        self.tokenizer = tokenizer

    def __call__(self, batch):
        labels = [ex["labels"] for ex in batch]
        features = [{k: v for k, v in ex.items() if k != "labels"} for ex in batch]
        padded = self.tokenizer.pad(features, return_tensors="pt")
        width = padded["input_ids"].shape[1]
        padded["labels"] = torch.tensor(
            [row + [-100] * (width - len(row)) for row in labels], dtype=torch.long
        )
        return padded


@torch.no_grad()
def _validation_loss(model, loader, device) -> float:
    model.eval()
    total, n = 0.0, 0
    for batch in loader:
        batch = {k: v.to(device) for k, v in batch.items()}
        out = model(**batch)
        total += float(out.loss) * batch["input_ids"].shape[0]
        n += batch["input_ids"].shape[0]
    model.train()
    return total / max(n, 1)


def backend_train(
    corpus_path: str | Path,
    cfg: BridgeConfig,
    out_dir: str | Path,
    mode: str | None = None,
) -> Path:
    """Train on one annotated file and write the best checkpoint to out_dir."""
    from transformers import get_linear_schedule_with_warmup

    corpus = read_ann_tsv(corpus_path)
    if not corpus:
        raise BackendError(f"{corpus_path}: corpus is empty")
    if mode is None:
        mode = infer_mode(corpus, str(corpus_path))
    labels = MODE_LABELS[mode]
    validate_labels(corpus, mode, str(corpus_path))
    label_to_id = {l: i for i, l in enumerate(labels)}

    torch.manual_seed(cfg.seed)
    tokenizer, model = _load_base(cfg.base_checkpoint, len(labels))
    model.config.id2label = dict(enumerate(labels))
    model.config.label2id = label_to_id
    device = torch.device("cpu")
    model.to(device)
    model.train()

    order = list(range(len(corpus)))
    random.Random(cfg.seed).shuffle(order)
    n_val = max(1, int(len(corpus) * cfg.val_fraction))
    val_idx = set(order[:n_val])
    encode = lambda i: _encode(
        tokenizer, corpus[i][0], corpus[i][1], label_to_id, cfg.max_length
    )
    train_set = [encode(i) for i in range(len(corpus)) if i not in val_idx]
    val_set = [encode(i) for i in sorted(val_idx)]

    collate = _Collator(tokenizer)
    gen = torch.Generator().manual_seed(cfg.seed)
    train_loader = DataLoader(
        train_set, batch_size=cfg.batch_size, shuffle=True,
        generator=gen, collate_fn=collate,
    )
    val_loader = DataLoader(val_set, batch_size=cfg.batch_size, collate_fn=collate)

    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    total_steps = max(1, len(train_loader) * cfg.epochs)
    scheduler = get_linear_schedule_with_warmup(optimizer, 0, total_steps)

    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    best = (float("inf"), None)
    curve: list[dict] = []
    step = 0

    def evaluate(at_step: int) -> None:
        nonlocal best
        loss = _validation_loss(model, val_loader, device)
        curve.append({"step": at_step, "val_loss": loss})
        model.save_pretrained(ckpt_dir / f"step-{at_step}")
        if loss < best[0]:
            state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best = (loss, state)

    for _ in range(cfg.epochs):
        for batch in train_loader:
            batch = {k: v.to(device) for k, v in batch.items()}
            out = model(**batch)
            out.loss.backward()
            optimizer.step()
            scheduler.step()
            optimizer.zero_grad()
            step += 1
            if step % cfg.eval_every == 0:
                evaluate(step)
    if not curve or curve[-1]["step"] != step:
        evaluate(step)

    model.load_state_dict(best[1])
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    (out_dir / META_FILE).write_text(
        json.dumps(
            {
                "protocol": 1,
                "mode": mode,
                "labels": labels,
                "model_description": (
                    f"token-classification head on {cfg.base_checkpoint} "
                    f"({mode} mode, {len(labels)} labels)"
                ),
                "config": cfg.to_dict(),
                "training_lines": len(corpus),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    (out_dir / "metrics.json").write_text(
        json.dumps({"validation_loss": curve, "best": best[0]}, indent=2) + "\n"
    )
    return out_dir
