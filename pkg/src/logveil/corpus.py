"""Corpus ingestion: raw logs, annotated TSV files, dataset statistics.

File formats
------------
Raw log file
    one log line per physical line; decoded byte-per-character (latin-1) so
    spans are byte offsets and write-back is byte exact.

Annotated corpus (``.ann.tsv``)
    CoNLL-style blocks separated by blank lines, one token per row::

        # raw: BLOCK* ask 10.250.18.114:50010 to delete  blk_-5140072410813878235
        BLOCK*<TAB>O
        ask<TAB>O
        10.250.18.114:50010<TAB>B-NET<TAB>IP,PORT
        ...

    The optional third column is the net sub-annotation sidecar: one kind per
    split part of the NET token (``O`` marks a non-sensitive part).  The
    ``# raw:`` comment row is optional; when present the token column must
    agree with whitespace tokenization of the raw line.

Dataset manifest
    a directory per dataset holding ``<name>.log`` and ``<name>.ann.tsv``,
    plus an optional ``<name>.templates.txt`` with one template string per
    log line (used for template-grouped statistics).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .model import (
    AnnotatedLine,
    AttributeKind,
    IobLabel,
    IobViolation,
    LogLine,
    NetSubKind,
    SubParts,
    parent_kind,
    parse_label,
    validate_iob,
)
from .tokenize import tokenize

ENCODING = "latin-1"  # one char per byte; spans stay byte offsets


class CorpusFormatError(ValueError):
    """Malformed corpus file; carries file/line coordinates."""

    def __init__(self, path: str | os.PathLike, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


@dataclass(frozen=True, slots=True)
class Dataset:
    """An annotated dataset; immutable and shareable once loaded."""

    id: str
    lines: tuple[AnnotatedLine, ...]
    templates: tuple[str, ...] | None = None
    line_templates: tuple[int, ...] | None = None  # template index per line

    def __post_init__(self) -> None:
        for ann in self.lines:
            if ann.line.dataset_id != self.id:
                raise ValueError(
                    f"line {ann.line.line_no} belongs to {ann.line.dataset_id!r}, "
                    f"not {self.id!r}"
                )
        if (self.templates is None) != (self.line_templates is None):
            raise ValueError("templates and line_templates must be given together")
        if self.line_templates is not None and len(self.line_templates) != len(self.lines):
            raise ValueError("line_templates length must match lines")

    def __len__(self) -> int:
        return len(self.lines)


def _parse_sidecar(cell: str, path, lineno) -> SubParts:
    parts: list[NetSubKind | None] = []
    for name in cell.split(","):
        name = name.strip()
        if name == "O":
            parts.append(None)
            continue
        try:
            kind = parse_label("B-" + name).kind
        except ValueError:
            raise CorpusFormatError(path, lineno, f"unknown net sub-kind {name!r}")
        if not isinstance(kind, NetSubKind):
            raise CorpusFormatError(path, lineno, f"{name!r} is not a net sub-kind")
        parts.append(kind)
    return tuple(parts)


@dataclass(slots=True)
class _Block:
    raw: str | None = None
    rows: list[tuple[str, str, str | None]] = field(default_factory=list)
    first_lineno: int = 0


def _iter_blocks(text: str, path) -> Iterable[_Block]:
    block = _Block()
    for lineno, row in enumerate(text.split("\n"), start=1):
        if row == "":
            if block.rows or block.raw is not None:
                yield block
                block = _Block()
            continue
        if row.startswith("# raw:"):
            if block.rows:
                raise CorpusFormatError(path, lineno, "# raw: must precede token rows")
            raw = row[len("# raw:") :]
            block.raw = raw[1:] if raw.startswith(" ") else raw
            block.first_lineno = block.first_lineno or lineno
            continue
        if row.startswith("#") and "\t" not in row:
            continue  # free comment
        cells = row.split("\t")
        if len(cells) < 2 or len(cells) > 3 or not cells[0] or not cells[1]:
            raise CorpusFormatError(
                path, lineno, f"expected token<TAB>label[<TAB>subkinds], got {row!r}"
            )
        if not block.rows and block.raw is None:
            block.first_lineno = lineno
        block.rows.append((cells[0], cells[1], cells[2] if len(cells) == 3 else None))
    if block.rows or block.raw is not None:
        yield block


def _build_line(
    block: _Block, dataset_id: str, line_no: int, path
) -> tuple[AnnotatedLine, list[IobViolation]]:
    lineno = block.first_lineno
    labels: list[IobLabel] = []
    sidecars: list[SubParts | None] = []
    for tok_text, lab_text, sub in block.rows:
        try:
            lab = parse_label(lab_text)
        except ValueError as e:
            raise CorpusFormatError(path, lineno, f"unknown label {lab_text!r} ({e})")
        if sub is not None:
            if lab.tag == "O" or parent_kind(lab.kind) is not AttributeKind.NET:
                raise CorpusFormatError(
                    path, lineno, f"sub-annotation on non-NET row {tok_text!r}"
                )
            sidecars.append(_parse_sidecar(sub, path, lineno))
        else:
            sidecars.append(None)
        labels.append(lab)

    token_texts = [t for t, _, _ in block.rows]
    if block.raw is not None:
        raw = block.raw
        tokens = tokenize(raw)
        if [t.text for t in tokens] != token_texts:
            raise CorpusFormatError(
                path, lineno, "token rows do not match whitespace tokenization of raw"
            )
    else:
        raw = " ".join(token_texts)
        tokens = tokenize(raw)

    violations = validate_iob(labels)
    if violations:
        # caller decides whether to raise or collect
        return None, violations  # type: ignore[return-value]
    line = LogLine(raw, dataset_id, line_no)
    ann = AnnotatedLine(
        line,
        tokens,
        tuple(labels),
        tuple(sidecars) if any(s is not None for s in sidecars) else None,
    )
    return ann, []


def load_annotated(path: str | os.PathLike, dataset_id: str | None = None) -> Dataset:
    """Load an annotated TSV file into a validated :class:`Dataset`."""
    path = Path(path)
    if dataset_id is None:
        dataset_id = path.name.split(".")[0]
    text = path.read_text(encoding=ENCODING)
    lines: list[AnnotatedLine] = []
    for block in _iter_blocks(text, path):
        ann, violations = _build_line(block, dataset_id, len(lines), path)
        if violations:
            v = violations[0]
            raise CorpusFormatError(
                path, block.first_lineno, f"IOB violation at token {v.index}: {v.reason}"
            )
        lines.append(ann)
    return Dataset(dataset_id, tuple(lines))


def scan_annotated(path: str | os.PathLike) -> list[tuple[int, IobViolation]]:
    """Lenient pass over an annotated file, returning IOB violations as
    ``(block file line, violation)`` pairs instead of raising on the first."""
    path = Path(path)
    text = path.read_text(encoding=ENCODING)
    found: list[tuple[int, IobViolation]] = []
    n = 0
    for block in _iter_blocks(text, path):
        _, violations = _build_line(block, "scan", n, path)
        found.extend((block.first_lineno, v) for v in violations)
        n += 1
    return found


def save_annotated(ds: Dataset | Sequence[AnnotatedLine], path: str | os.PathLike) -> None:
    """Serialize annotated lines; ``load_annotated`` round-trips the result."""
    lines = ds.lines if isinstance(ds, Dataset) else ds
    rows: list[str] = []
    for ann in lines:
        rows.append("# raw: " + ann.line.raw)
        for i, (tok, lab) in enumerate(zip(ann.tokens, ann.labels)):
            cells = [tok.text, lab.text]
            sub = None if ann.net_parts is None else ann.net_parts[i]
            if sub is not None:
                cells.append(",".join("O" if k is None else k.name for k in sub))
            rows.append("\t".join(cells))
        rows.append("")
    Path(path).write_text("\n".join(rows), encoding=ENCODING)


def load_raw(path: str | os.PathLike, dataset_id: str | None = None) -> list[LogLine]:
    """Read a raw log file, one :class:`LogLine` per physical line."""
    path = Path(path)
    if dataset_id is None:
        dataset_id = path.name.split(".")[0]
    text = path.read_text(encoding=ENCODING)
    if text.endswith("\n"):
        text = text[:-1]
    if text == "":
        return []
    return [LogLine(raw, dataset_id, i) for i, raw in enumerate(text.split("\n"))]


def load_dataset_dir(path: str | os.PathLike) -> Dataset:
    """Load one manifest entry: ``<dir>/<name>.ann.tsv`` (+ optional templates)."""
    path = Path(path)
    name = path.name
    ann_path = path / f"{name}.ann.tsv"
    if not ann_path.is_file():
        raise FileNotFoundError(ann_path)
    ds = load_annotated(ann_path, dataset_id=name)
    tpl_path = path / f"{name}.templates.txt"
    if tpl_path.is_file():
        tpl_rows = tpl_path.read_text(encoding=ENCODING).splitlines()
        if len(tpl_rows) != len(ds.lines):
            raise CorpusFormatError(
                tpl_path, 1, f"{len(tpl_rows)} templates for {len(ds.lines)} lines"
            )
        uniq: dict[str, int] = {}
        mapping = []
        for t in tpl_rows:
            mapping.append(uniq.setdefault(t, len(uniq)))
        ds = Dataset(ds.id, ds.lines, tuple(uniq), tuple(mapping))
    return ds


def load_manifest(root: str | os.PathLike) -> list[Dataset]:
    """Load every dataset directory under a manifest root, sorted by name."""
    root = Path(root)
    out = []
    for child in sorted(root.iterdir()):
        if child.is_dir() and (child / f"{child.name}.ann.tsv").is_file():
            out.append(load_dataset_dir(child))
    if not out:
        raise FileNotFoundError(f"no dataset directories under {root}")
    return out


@dataclass(frozen=True, slots=True)
class DatasetStats:
    """Share of units (templates or lines) containing sensitive attributes."""

    dataset_id: str
    unit: str  # "templates" | "lines"
    n_units: int
    pct_sensitive: float
    pct_by_kind: dict[AttributeKind, float]

    def __post_init__(self) -> None:
        if not 0.0 <= self.pct_sensitive <= 100.0:
            raise ValueError("pct_sensitive out of range")
        for k, v in self.pct_by_kind.items():
            if v - self.pct_sensitive > 1e-9:
                raise ValueError(f"{k.name} percent exceeds overall sensitive percent")


def compute_stats(ds: Dataset, group_by_template: bool = False) -> DatasetStats:
    """Percent of templates (or lines) with >=1 entity, overall and per kind."""
    if group_by_template and ds.templates is None:
        raise ValueError(f"dataset {ds.id!r} has no templates to group by")
    if group_by_template:
        n_units = len(ds.templates)
        unit_kinds: list[set[AttributeKind]] = [set() for _ in range(n_units)]
        for ann, tpl in zip(ds.lines, ds.line_templates):
            for ent in ann.entities():
                unit_kinds[tpl].add(parent_kind(ent.kind))
        unit = "templates"
    else:
        n_units = len(ds.lines)
        unit_kinds = [
            {parent_kind(e.kind) for e in ann.entities()} for ann in ds.lines
        ]
        unit = "lines"

    def pct(count: int) -> float:
        return 100.0 * count / n_units if n_units else 0.0

    sensitive = sum(1 for ks in unit_kinds if ks)
    by_kind = {
        kind: pct(sum(1 for ks in unit_kinds if kind in ks)) for kind in AttributeKind
    }
    return DatasetStats(ds.id, unit, n_units, pct(sensitive), by_kind)


class ReserveError(ValueError):
    """Not enough sensitive lines to fill the requested fine-tuning set."""


def reserve_finetune_split(
    ds: Dataset, n: int, pool_size: int = 100
) -> tuple[list[AnnotatedLine], list[AnnotatedLine]]:
    """Reserve the first ``pool_size`` sensitive lines; fine-tune on the first
    ``n`` of them and test on everything outside the pool.

    The test split is fixed regardless of ``n``, so different fine-tuning
    sizes stay comparable.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > pool_size:
        raise ValueError(f"n={n} exceeds the reserved pool size {pool_size}")
    sensitive = [i for i, ann in enumerate(ds.lines) if ann.has_entity()]
    if len(sensitive) < n:
        raise ReserveError(
            f"dataset {ds.id!r} has only {len(sensitive)} sensitive lines, "
            f"{n} requested ({n - len(sensitive)} short)"
        )
    pool = set(sensitive[:pool_size])
    finetune = [ds.lines[i] for i in sensitive[:n]]
    test = [ann for i, ann in enumerate(ds.lines) if i not in pool]
    return finetune, test
