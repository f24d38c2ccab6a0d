"""Serve a trained checkpoint over bridge wire protocol v1 (stdio).

One JSON object per line.  The client opens with ``{"hello": 1}``; the
backend answers with its protocol version, a model description, and the
label vocabulary of the mode it serves.  Each request is answered before the
next is read; malformed requests produce an error object and the process
stays alive.  A handshake version mismatch is refused with a message.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import torch

from .train import META_FILE, BackendError

PROTOCOL_VERSION = 1


class _Labeler:
    def __init__(self, checkpoint: str | Path):
        from transformers import AutoModelForTokenClassification, AutoTokenizer

        checkpoint = Path(checkpoint)
        meta_path = checkpoint / META_FILE
        if not meta_path.is_file():
            raise BackendError(f"{checkpoint}: missing {META_FILE}")
        self.meta = json.loads(meta_path.read_text())
        self.mode: str = self.meta["mode"]
        self.labels: list[str] = list(self.meta["labels"])
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
            self.model = AutoModelForTokenClassification.from_pretrained(checkpoint)
        except Exception as e:
            raise BackendError(f"cannot load checkpoint {checkpoint}: {e}") from e
        self.model.eval()
        # words per window: worst case every word explodes into subwords, so
        # chunk conservatively and relabel long lines window by window
        self.max_length = int(self.meta.get("config", {}).get("max_length", 256))
        self.window = max(8, self.max_length // 4)

    @torch.no_grad()
    def label(self, tokens: list[str]) -> list[str]:
        out: list[str] = []
        for start in range(0, len(tokens), self.window):
            chunk = tokens[start : start + self.window]
            enc = self.tokenizer(
                chunk,
                is_split_into_words=True,
                truncation=True,
                max_length=self.max_length,
                return_tensors="pt",
            )
            pred = self.model(**enc).logits[0].argmax(-1).tolist()
            word_ids = enc.word_ids()
            chunk_labels = ["O"] * len(chunk)
            prev = None
            for pos, word in enumerate(word_ids):
                if word is None or word == prev:
                    continue
                chunk_labels[word] = self.labels[pred[pos]]
                prev = word
            out.extend(chunk_labels)
        return out


def backend_serve(checkpoint: str | Path, stdin=None, stdout=None) -> int:
    """Run the request loop; returns a process exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    labeler = _Labeler(checkpoint)

    hello_line = stdin.readline()
    try:
        hello = json.loads(hello_line)
    except ValueError:
        hello = None
    if not isinstance(hello, dict) or hello.get("hello") != PROTOCOL_VERSION:
        emit(
            {
                "error": (
                    f"protocol version mismatch: this backend speaks "
                    f"{PROTOCOL_VERSION}, client sent {hello_line.strip()!r}"
                )
            }
        )
        return 2
    emit(
        {
            "hello": PROTOCOL_VERSION,
            "model": labeler.meta.get("model_description", "token classifier"),
            "modes": {labeler.mode: labeler.labels},
        }
    )

    for line in stdin:
        try:
            req = json.loads(line)
        except ValueError:
            emit({"error": "request is not valid JSON"})
            continue
        if not isinstance(req, dict):
            emit({"error": "request must be a JSON object"})
            continue
        rid = req.get("id")
        mode = req.get("mode")
        tokens = req.get("tokens")
        if mode != labeler.mode:
            emit({"id": rid, "error": f"this backend serves mode {labeler.mode!r}, not {mode!r}"})
            continue
        if (
            not isinstance(tokens, list)
            or not tokens
            or not all(isinstance(t, str) and t for t in tokens)
        ):
            emit({"id": rid, "error": "tokens must be a non-empty list of non-empty strings"})
            continue
        try:
            labels = labeler.label(tokens)
        except Exception as e:  # stay alive per protocol contract
            emit({"id": rid, "error": f"labeling failed: {e}"})
            continue
        emit({"id": rid, "labels": labels})
    return 0
