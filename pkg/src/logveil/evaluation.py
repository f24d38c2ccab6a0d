"""Token-overlap metrics, cross-validation drivers, and annotation agreement.

Scoring counts whole tokens: a gold token of kind X is a true positive when
some detection of kind X overlaps its span; a token that is not gold-X but is
overlapped by an X detection is a false positive for X (one per token, not
per match); gold-X tokens nobody found are false negatives.  A match-level
counting mode exists for sensitivity analysis.

Three kind views cover the different experiment shapes:

``parent``
    IP/PORT/HOSTNAME collapse into NET on both sides (default; matches the
    coarse benchmark labeling).
``exact``
    kinds compared as-is (for scoring the net-variant corpus).
``split``
    gold NET tokens are divided into their net-split parts using the
    sub-annotation sidecar, so sub-kind detectors are scored per component.

Micro-aggregation sums TP/FP/FN over lines and datasets before deriving
precision/recall/F1 (one unified confusion, not an average of averages).
Zero-denominator cells are undefined, reported as None and rendered "-".
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

from .model import (
    AnnotatedLine,
    AttributeKind,
    DetectionSpan,
    IobLabel,
    Kind,
    NetSubKind,
    entity_spans,
    parent_kind,
)
from .tokenize import DEFAULT_NET_SPLIT, NetSplitRule, net_split

DETECTION_KEY = "SENSITIVE"

_CANONICAL_ORDER = (
    [DETECTION_KEY] + [k.name for k in AttributeKind] + [k.name for k in NetSubKind]
)
_ORDER_INDEX = {name: i for i, name in enumerate(_CANONICAL_ORDER)}


def kind_sort_key(name: str) -> tuple[int, str]:
    return (_ORDER_INDEX.get(name, len(_ORDER_INDEX)), name)


@dataclass(slots=True)
class Counts:
    """TP/FP/FN cell with derived metrics; None means undefined (0 denominator)."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other: "Counts") -> "Counts":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        return 2 * p * r / (p + r) if p + r else 0.0


PerKind = dict[str, Counts]


@dataclass(slots=True)
class MetricReport:
    """Per-kind counts plus their micro sum."""

    per_kind: PerKind = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def overall(self) -> Counts:
        total = Counts()
        for c in self.per_kind.values():
            total += c
        return total

    def kinds(self) -> list[str]:
        return sorted(self.per_kind, key=kind_sort_key)


def _normalize_kind(kind: Kind, view: str) -> str:
    return parent_kind(kind).name if view == "parent" else kind.name


def scoring_units(
    gold: AnnotatedLine, view: str, rule: NetSplitRule = DEFAULT_NET_SPLIT
) -> list[tuple[int, int, str | None]]:
    """Gold reference units for one line: ``(start, end, kind name or None)``.

    In the split view a NET token with a sidecar contributes one unit per
    part; without a sidecar it stays whole with kind NET.
    """
    if view not in ("parent", "exact", "split"):
        raise ValueError(f"unknown view {view!r}")
    units: list[tuple[int, int, str | None]] = []
    for i, (tok, lab) in enumerate(zip(gold.tokens, gold.labels)):
        if lab.tag == "O":
            units.append((tok.start, tok.end, None))
            continue
        if (
            view == "split"
            and lab.kind is AttributeKind.NET
            and gold.net_parts is not None
            and gold.net_parts[i] is not None
        ):
            parts = net_split(tok, rule)
            sidecar = gold.net_parts[i]
            if len(parts) == len(sidecar):
                for part, sub in zip(parts, sidecar):
                    units.append(
                        (part.start, part.end, None if sub is None else sub.name)
                    )
                continue
        units.append((tok.start, tok.end, _normalize_kind(lab.kind, view)))
    return units


def _spans_from_labels(gold: AnnotatedLine, labels: Sequence[IobLabel]) -> list[DetectionSpan]:
    if len(labels) != len(gold.tokens):
        raise ValueError(
            f"{len(labels)} predicted labels for {len(gold.tokens)} tokens"
        )
    spans = []
    for ent in entity_spans(labels):
        spans.append(
            DetectionSpan(
                gold.tokens[ent.start].start,
                gold.tokens[ent.end - 1].end,
                ent.kind,
                "labels",
            )
        )
    return spans


def score_tokens(
    gold: AnnotatedLine,
    predicted: Sequence[DetectionSpan] | Sequence[IobLabel],
    *,
    mode: str = "category",
    view: str = "parent",
    granularity: str = "token",
    rule: NetSplitRule = DEFAULT_NET_SPLIT,
) -> PerKind:
    """Token-overlap counts for one line.

    ``mode="detection"`` collapses every kind into one sensitive-vs-not cell;
    ``mode="category"`` keeps per-kind cells.  ``granularity="match"`` counts
    false/true positives per detection instead of per token.
    """
    if mode not in ("category", "detection"):
        raise ValueError(f"unknown mode {mode!r}")
    if granularity not in ("token", "match"):
        raise ValueError(f"unknown granularity {granularity!r}")
    preds: list[DetectionSpan]
    if predicted and isinstance(predicted[0], IobLabel):
        preds = _spans_from_labels(gold, predicted)  # type: ignore[arg-type]
    else:
        preds = list(predicted)  # type: ignore[arg-type]
    n = len(gold.line.raw)
    for p in preds:
        if p.end > n:
            raise ValueError(f"detection [{p.start},{p.end}) outside line of length {n}")

    units = scoring_units(gold, view, rule)

    def pkind(p: DetectionSpan) -> str:
        if mode == "detection":
            return DETECTION_KEY
        return _normalize_kind(p.kind, view)

    def gkind(g: str | None) -> str | None:
        if g is None:
            return None
        return DETECTION_KEY if mode == "detection" else g

    counts: PerKind = {}

    def cell(kind: str) -> Counts:
        return counts.setdefault(kind, Counts())

    if granularity == "token":
        for start, end, gold_kind in units:
            g = gkind(gold_kind)
            hit_kinds = {
                pkind(p) for p in preds if p.start < end and p.end > start
            }
            if g is not None:
                if g in hit_kinds:
                    cell(g).tp += 1
                else:
                    cell(g).fn += 1
                hit_kinds.discard(g)
            for k in hit_kinds:
                cell(k).fp += 1
    else:
        for p in preds:
            k = pkind(p)
            overlapped = [
                gkind(g) for s, e, g in units if p.start < e and p.end > s
            ]
            if k in overlapped:
                cell(k).tp += 1
            else:
                cell(k).fp += 1
        for start, end, gold_kind in units:
            g = gkind(gold_kind)
            if g is None:
                continue
            if not any(
                pkind(p) == g and p.start < end and p.end > start for p in preds
            ):
                cell(g).fn += 1
    return counts


def merge_counts(into: PerKind, other: Mapping[str, Counts]) -> PerKind:
    for k, c in other.items():
        into.setdefault(k, Counts())
        into[k] += Counts(c.tp, c.fp, c.fn)
    return into


def score_lines(
    gold_lines: Sequence[AnnotatedLine],
    predictions: Sequence[Sequence[DetectionSpan] | Sequence[IobLabel]],
    **kwargs: Any,
) -> PerKind:
    """Micro-summed :func:`score_tokens` over parallel lines."""
    if len(gold_lines) != len(predictions):
        raise ValueError("gold/prediction line counts differ")
    total: PerKind = {}
    for gold, preds in zip(gold_lines, predictions):
        merge_counts(total, score_tokens(gold, preds, **kwargs))
    return total


def aggregate(
    reports: Iterable[Mapping[str, Counts] | MetricReport],
    meta: Mapping[str, Any] | None = None,
) -> MetricReport:
    """Micro-aggregate: sum counts across reports, then derive metrics."""
    total: PerKind = {}
    for rep in reports:
        per_kind = rep.per_kind if isinstance(rep, MetricReport) else rep
        merge_counts(total, per_kind)
    return MetricReport(total, dict(meta or {}))


# --------------------------------------------------------------------------
# report serialization


def _cell_dict(c: Counts) -> dict[str, Any]:
    return {
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn,
        "support": c.support,
        "precision": c.precision,
        "recall": c.recall,
        "f1": c.f1,
    }


REPORT_SCHEMA = 1


def report_to_dict(report: MetricReport) -> dict[str, Any]:
    return {
        "schema": REPORT_SCHEMA,
        "kinds": {k: _cell_dict(report.per_kind[k]) for k in report.kinds()},
        "overall": _cell_dict(report.overall),
        "meta": dict(sorted(report.meta.items())),
    }


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def _fmt(v: float | None) -> str:
    return "    -" if v is None else f"{100 * v:5.1f}"


def render_report(report: MetricReport, title: str = "") -> str:
    rows = [f"{'kind':<12} {'P%':>5} {'R%':>5} {'F1%':>5} {'tp':>6} {'fp':>6} {'fn':>6}"]
    if title:
        rows.insert(0, title)
    for k in report.kinds():
        c = report.per_kind[k]
        rows.append(
            f"{k:<12} {_fmt(c.precision)} {_fmt(c.recall)} {_fmt(c.f1)}"
            f" {c.tp:>6} {c.fp:>6} {c.fn:>6}"
        )
    o = report.overall
    rows.append(
        f"{'overall':<12} {_fmt(o.precision)} {_fmt(o.recall)} {_fmt(o.f1)}"
        f" {o.tp:>6} {o.fp:>6} {o.fn:>6}"
    )
    return "\n".join(rows)


# --------------------------------------------------------------------------
# cross-validation drivers


@dataclass(frozen=True, slots=True)
class FoldPlan:
    """Train/test dataset-id pairs; test sets partition the dataset list."""

    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for train_ids, test_ids in self.folds:
            overlap = set(train_ids) & set(test_ids)
            if overlap:
                raise ValueError(f"fold trains and tests on {sorted(overlap)}")
            dup = seen & set(test_ids)
            if dup:
                raise ValueError(f"datasets {sorted(dup)} tested twice")
            seen.update(test_ids)


class FoldError(RuntimeError):
    """Trainer or scorer failure, tagged with the fold it happened in."""

    def __init__(self, fold: str, message: str):
        super().__init__(f"fold {fold!r}: {message}")
        self.fold = fold


def loocv_plan(ids: Sequence[str]) -> FoldPlan:
    return FoldPlan(
        tuple(
            (tuple(x for x in ids if x != held), (held,)) for held in ids
        )
    )


def kfold_plan(ids: Sequence[str], k: int, seed: int) -> FoldPlan:
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds {len(ids)} datasets")
    order = list(ids)
    random.Random(seed).shuffle(order)
    base, extra = divmod(len(order), k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        test = tuple(order[pos : pos + size])
        pos += size
        folds.append((tuple(x for x in order if x not in test), test))
    return FoldPlan(tuple(folds))


Trainer = Callable[[Sequence[Any]], Any]
Scorer = Callable[[Any, Any], Mapping[str, Counts]]


def _run_plan(
    plan: FoldPlan, datasets: Sequence[Any], trainer: Trainer, scorer: Scorer
) -> tuple[dict[str, MetricReport], MetricReport]:
    by_id = {ds.id: ds for ds in datasets}
    per_dataset: dict[str, MetricReport] = {}
    for train_ids, test_ids in plan.folds:
        fold_name = ",".join(test_ids)
        try:
            model = trainer([by_id[i] for i in train_ids])
        except Exception as e:
            raise FoldError(fold_name, f"trainer failed: {e}") from e
        for tid in test_ids:
            try:
                counts = scorer(model, by_id[tid])
            except Exception as e:
                raise FoldError(fold_name, f"scorer failed on {tid!r}: {e}") from e
            per_dataset[tid] = MetricReport(dict(counts), {"dataset": tid})
    overall = aggregate(per_dataset.values())
    return per_dataset, overall


def loocv(
    datasets: Sequence[Any], trainer: Trainer, scorer: Scorer
) -> tuple[dict[str, MetricReport], MetricReport]:
    """Train on all datasets but one, score the held-out one; repeat for all."""
    if len(datasets) < 2:
        raise ValueError("leave-one-out needs at least 2 datasets")
    plan = loocv_plan([ds.id for ds in datasets])
    return _run_plan(plan, datasets, trainer, scorer)


def kfold(
    datasets: Sequence[Any], k: int, seed: int, trainer: Trainer, scorer: Scorer
) -> tuple[dict[str, MetricReport], MetricReport]:
    """Seeded k-fold cross-validation over datasets."""
    plan = kfold_plan([ds.id for ds in datasets], k, seed)
    return _run_plan(plan, datasets, trainer, scorer)


# --------------------------------------------------------------------------
# fine-tuning experiment


@dataclass(slots=True)
class FinetuneTable:
    """Per-dataset, per-size reports from the fixed-test-set experiment."""

    cells: dict[tuple[str, int], MetricReport]
    overall: dict[int, MetricReport]
    skipped: list[tuple[str, str]]
    sizes: tuple[int, ...]


def finetune_experiment(
    base_models: Mapping[str, Any],
    datasets: Sequence[Any],
    sizes: Sequence[int],
    finetuner: Callable[[Any, Sequence[AnnotatedLine]], Any],
    scorer: Callable[[Any, Sequence[AnnotatedLine]], Mapping[str, Counts]],
    pool_size: int = 100,
) -> FinetuneTable:
    """Fine-tune each dataset's base model on its reserved pool prefix and
    score every size against the same fixed test split.

    Datasets without enough sensitive lines for the largest size are skipped
    with a notice rather than failing the whole run.
    """
    from .corpus import ReserveError, reserve_finetune_split

    cells: dict[tuple[str, int], MetricReport] = {}
    skipped: list[tuple[str, str]] = []
    per_size: dict[int, list[PerKind]] = {n: [] for n in sizes}
    for ds in datasets:
        try:
            pool, test = reserve_finetune_split(ds, max(sizes), pool_size)
        except ReserveError as e:
            skipped.append((ds.id, str(e)))
            continue
        base = base_models[ds.id]
        for n in sizes:
            model = finetuner(base, pool[:n]) if n > 0 else base
            counts = dict(scorer(model, test))
            cells[(ds.id, n)] = MetricReport(counts, {"dataset": ds.id, "size": n})
            per_size[n].append(counts)
    overall = {
        n: aggregate(reps, {"size": n}) for n, reps in per_size.items()
    }
    return FinetuneTable(cells, overall, skipped, tuple(sizes))


# --------------------------------------------------------------------------
# annotation agreement


@dataclass(frozen=True, slots=True)
class AgreementReport:
    """Chance-corrected inter-annotator agreement."""

    kappa: float
    accuracy: float
    confusion: dict[tuple[str, str], int]
    degenerate: bool = False


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> AgreementReport:
    """Cohen's kappa and raw accuracy between two parallel label sequences.

    With chance agreement 1 (both coders constant and identical) kappa is
    defined as 1 when they agree and 0 otherwise, with the degenerate flag set.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError(
            f"length mismatch: {len(labels_a)} vs {len(labels_b)} labels"
        )
    if not labels_a:
        raise ValueError("empty label sequences")
    n = len(labels_a)
    confusion: dict[tuple[str, str], int] = {}
    agree = 0
    marg_a: dict[Hashable, int] = {}
    marg_b: dict[Hashable, int] = {}
    for a, b in zip(labels_a, labels_b):
        key = (str(a), str(b))
        confusion[key] = confusion.get(key, 0) + 1
        marg_a[a] = marg_a.get(a, 0) + 1
        marg_b[b] = marg_b.get(b, 0) + 1
        if a == b:
            agree += 1
    p_o = agree / n
    p_e = sum(marg_a[l] * marg_b.get(l, 0) for l in marg_a) / (n * n)
    if p_e == 1.0:
        return AgreementReport(1.0 if p_o == 1.0 else 0.0, p_o, confusion, True)
    kappa = (p_o - p_e) / (1.0 - p_e)
    return AgreementReport(kappa, p_o, confusion)
