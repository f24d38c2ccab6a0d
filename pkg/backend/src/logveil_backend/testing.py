"""Offline test scaffolding: build a tiny randomly initialized base model.

The resulting directory is a regular checkpoint loadable with the Auto
classes, so the training code exercises the exact same path it would with a
published encoder - just without any network access.  The tokenizer is a
character-level WordPiece (every printable ASCII char plus its continuation
piece), which guarantees multi-subword words and therefore a real test of
first-subword alignment.
"""
from __future__ import annotations

import string
from pathlib import Path

CHARS = string.ascii_letters + string.digits + string.punctuation


def make_tiny_base(
    out_dir: str | Path,
    hidden_size: int = 64,
    layers: int = 2,
    max_length: int = 256,
) -> Path:
    import torch
    from transformers import BertConfig, BertForTokenClassification, BertTokenizerFast

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += list(CHARS)
    vocab += ["##" + c for c in CHARS]
    (out_dir / "vocab.txt").write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(out_dir / "vocab.txt"), do_lower_case=True)
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=hidden_size,
        num_hidden_layers=layers,
        num_attention_heads=max(2, hidden_size // 32),
        intermediate_size=hidden_size * 2,
        max_position_embeddings=max_length,
    )
    model = BertForTokenClassification(config)
    tokenizer.save_pretrained(out_dir)
    model.save_pretrained(out_dir)
    return out_dir
