"""Annotated-TSV corpus reading and label vocabularies.

The corpus format is the one the logveil toolkit reads and writes: blocks of
``token<TAB>label[<TAB>subkinds]`` rows separated by blank lines, optional
``# raw:`` comment per block.  Only tokens and labels matter here; the
sub-annotation column and raw comment are carried by the file format but not
needed for training a single-mode labeler.
"""
from __future__ import annotations

from pathlib import Path

# Wire-protocol label vocabularies (closed sets, one per mode).
COARSE_LABELS = ["O"] + [
    f"{p}-{k}"
    for k in ("NET", "MAC", "FILEPATH", "ID", "URL", "USERNAME", "CONFIG")
    for p in ("B", "I")
]
NET_LABELS = ["O"] + [
    f"{p}-{k}" for k in ("IP", "PORT", "HOSTNAME") for p in ("B", "I")
]
MODE_LABELS = {"coarse": COARSE_LABELS, "net": NET_LABELS}


class CorpusError(ValueError):
    """Malformed corpus file, with file/line coordinates."""


def read_ann_tsv(path: str | Path) -> list[tuple[list[str], list[str]]]:
    """Read annotated lines as (tokens, labels) pairs."""
    path = Path(path)
    lines: list[tuple[list[str], list[str]]] = []
    tokens: list[str] = []
    labels: list[str] = []
    for lineno, row in enumerate(
        path.read_text(encoding="latin-1").split("\n"), start=1
    ):
        if row == "":
            if tokens:
                lines.append((tokens, labels))
                tokens, labels = [], []
            continue
        if row.startswith("#") and ("\t" not in row or row.startswith("# raw:")):
            continue
        cells = row.split("\t")
        if len(cells) < 2 or not cells[0] or not cells[1]:
            raise CorpusError(f"{path}:{lineno}: expected token<TAB>label, got {row!r}")
        tokens.append(cells[0])
        labels.append(cells[1])
    if tokens:
        lines.append((tokens, labels))
    return lines


def infer_mode(corpus: list[tuple[list[str], list[str]]], path: str = "<corpus>") -> str:
    """Pick the label mode from the labels present in the corpus."""
    seen = {lab for _, labels in corpus for lab in labels}
    if seen <= set(NET_LABELS) and any(lab != "O" for lab in seen):
        return "net"
    unknown = seen - set(COARSE_LABELS)
    if unknown:
        raise CorpusError(f"{path}: labels outside both vocabularies: {sorted(unknown)[:4]}")
    return "coarse"


def validate_labels(corpus, mode: str, path: str = "<corpus>") -> None:
    vocab = set(MODE_LABELS[mode])
    for tokens, labels in corpus:
        if len(tokens) != len(labels):
            raise CorpusError(f"{path}: token/label count mismatch")
        bad = [l for l in labels if l not in vocab]
        if bad:
            raise CorpusError(f"{path}: label {bad[0]!r} not in the {mode} vocabulary")
