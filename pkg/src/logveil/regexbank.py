"""The curated regular-expression bank and the ordered anonymization pipeline.

The bank ships 43 provenanced patterns: 41 collected from research papers,
replication packages, and industry anonymization pipelines, plus two
word-boundary variants of patterns whose ``^...$`` anchoring prevents any
mid-line match.  Patterns are stored verbatim, including their original
quirks; anything the engine cannot compile is retained but flagged
unsupported and excluded from execution.

Matching semantics are leftmost-first, non-overlapping, whole-match extent.
Patterns registered as *group-extracting* were written to capture the
sensitive value in a group (``uid[:=]*(\\d+)``); for those, the capture is
the detection so context words like ``user`` survive anonymization.
"""
from __future__ import annotations

import itertools
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import evaluation
from .model import (
    AttributeKind,
    DetectionSpan,
    Kind,
    LogLine,
    kind_from_name,
    NetSubKind,
)


class UnsupportedPatternError(ValueError):
    """Pattern uses a construct the engine cannot compile."""


class PlaceholderCollisionError(ValueError):
    """A placeholder would itself be matched by an active pattern."""


@dataclass(frozen=True)
class RegexPattern:
    """A provenanced pattern; ``supported`` reflects the engine's verdict."""

    id: str
    kind: Kind
    pattern: str
    provenance: str
    group_extracting: bool = False
    supported: bool = field(init=False, default=True)
    unsupported_reason: str | None = field(init=False, default=None)

    def __post_init__(self) -> None:
        try:
            re.compile(self.pattern)
        except re.error as e:
            object.__setattr__(self, "supported", False)
            object.__setattr__(self, "unsupported_reason", str(e))

    @property
    def compiled(self) -> re.Pattern:
        if not self.supported:
            raise UnsupportedPatternError(
                f"pattern {self.id}: {self.unsupported_reason}"
            )
        return re.compile(self.pattern)


def _bank_rows() -> list[tuple[str, str, str, str, bool]]:
    # id, kind, provenance, pattern, group_extracting
    return [
        # --- IP address -------------------------------------------------
        ("ip-01", "IP", "dai2023pilar; he2017drain; yu2023brain; xu2023hue",
         r"(/|)([0-9]+\.){3}[0-9]+(:[0-9]+|)(:|)", False),
        ("ip-02", "IP", "zhang2022research", r"([0-9.]+)\s", False),
        ("ip-03", "IP", "huang2020paddy", r"([0-9]+.){3}[0-9]+(:[0-9]+)", False),
        ("ip-04", "IP", "yu2024unlocking", r"((\d+).(\d+).(\d+).(\d+))", False),
        ("ip-05", "IP", "niu2023fsmflog", r"(\d)+3\d(:\d+)?", False),
        ("ip-06", "IP", "messaoudi2018search", r"(\d+\.){3}\d+(:\d+)?", False),
        ("ip-07", "IP", "naumiuk2014anonymization",
         r"^(25[0-5]|2[0-4]\d|[0-1]?\d?\d)(\.(25[0-5]|2[0-4]\d|[0-1]?\d?\d)){3}$", False),
        ("ip-08", "IP", "wang2024vcrlog", r"(\b\d{1,3}(?:\.\d{1,3}){3}\b)", False),
        ("ip-09", "IP", "wang2024vcrlog", r"(\d{1,3}(?:\.\d{1,3}){3}):?\d*", False),
        ("ip-10", "IP", "li2022swisslog", r"\d+\.\d+\.\d+\.\d+", False),
        ("ip-11", "IP", "li2023glad",
         r"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})[,: )]", False),
        ("ip-12", "IP", "debnath2018loglens",
         r"[0-9]{1,3}.[0-9]{1,3}.[0-9]{1,3}.[0-9]{1,3}", False),
        ("ip-13", "IP", "qin2024preprocessing", r"(/|)(\d+.){3}\d+(:\d+)?", False),
        ("ip-14", "IP", "li2024revisiting", r"[0-9]+\.[0-9\.:]*[0-9]", False),
        ("ip-15", "IP", "industry partner 1",
         r"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})", False),
        ("ip-16", "IP", "industry partner 2", r"\b\d{1,3}(?:\.\d{1,3}){2,}\b", False),
        ("ip-17", "IP", "industry partner 3",
         r"(\b\d{1,3}\.)(\d{1,3}\.)(\d{1,3}\.)(\d{1,3}\b)", False),
        ("ip-fix", "IP", "word-boundary variant of ip-07",
         r"\b(25[0-5]|2[0-4]\d|[0-1]?\d?\d)(\.(25[0-5]|2[0-4]\d|[0-1]?\d?\d)){3}\b", False),
        # --- MAC address ------------------------------------------------
        ("mac-01", "MAC", "qin2024preprocessing",
         r"^([0-9A-Fa-f]{2}[:-]){5}([0-9A-Fa-f]{2})$", False),
        ("mac-fix", "MAC", "word-boundary variant of mac-01",
         r"\b([0-9A-Fa-f]{2}[:-]){5}([0-9A-Fa-f]{2})\b", False),
        # --- File path ----------------------------------------------------
        ("filepath-01", "FILEPATH", "li2023glad",
         r"((((?<!\w)[A-Z,a-z]:)|(\.{1,2}\\))([^\b%\/\|:\n\"]*))|(\"\2([^\%\/\|:\n\"]*)\")"
         r"|((?<!\w)(\.{1,2})?(?<!\/)(\/((\\\b)|[^\b%\|:\n\"\\\/])+)+\/?)", False),
        ("filepath-02", "FILEPATH", "wahab2024secret", r"/[\w/. :-]+", False),
        ("filepath-03", "FILEPATH", "wahab2024secret", r"(/[^/\s]+)+", False),
        ("filepath-04", "FILEPATH", "xu2023hue", r"(([A-Z]:)|)(/\S+)+", False),
        ("filepath-05", "FILEPATH", "qin2024preprocessing",
         r"(/|)(([\w.-]+|\<\*\>)/)+([\w.-]+|\<\*\>)", False),
        ("filepath-06", "FILEPATH", "li2024revisiting",
         r"([A-Za-z]:|\.){0,1}(/|\\)[0-9A-Za-z\-_\.:/\*\+\$#@!\\\?=%&]+(?<![:\.])", False),
        ("filepath-07", "FILEPATH", "industry partner 3", r"\/(\S+)", False),
        # --- ID -----------------------------------------------------------
        ("id-01", "ID", "wahab2024secret",
         r"(?:UUID|GUID|version|id)[\\=:\"\'\s]*\b[a-fA-F0-9]{8}-[a-fA-F0-9]{4}"
         r"-[a-fA-F0-9]{4}-[a-fA-F0-9]{4}-[a-fA-F0-9]{12}\b", False),
        ("id-02", "ID", "wahab2024secret", r"<([^>]+)>", True),
        ("id-03", "ID", "li2023glad", r"[pP]id[:|-|=|\s/]*(\d+)", True),
        ("id-04", "ID", "li2023glad", r"[uU]id[:|-|=|\s/]*(\d+)", True),
        # --- URL ------------------------------------------------------
        ("url-01", "URL", "li2024revisiting",
         r"[A-Za-z\.]+://[A-Za-z0-9\.\/\+#@:_\-]+(?<![:\.])", False),
        ("url-02", "URL", "li2023glad", r"(https?://\S+)", False),
        ("url-03", "URL", "wahab2024secret",
         r"https?://[^\s#]+#[A-Za-z0-9\-\=\+]+", False),
        ("url-04", "URL", "wahab2024secret",
         r"http[s]?://(?:[a-zA-Z]|[0-9]|[$-_@.&+]|[!*\\(\\).]|(?:\%[0-9afA-F][0-9a-fA-F]))+", False),
        ("url-05", "URL", "yu2023log", r"([\w-]+\.)+[\w-]+(:\d+)?", False),
        ("url-06", "URL", "xu2023hue",
         r"(\S+\.\S+(\.\S+)+(:\d+)?)|(\w+-\w+(-\w+)+)", False),
        ("url-07", "URL", "qin2024preprocessing",
         r"\bhttps?://(www.)?[a-zA-Z0-9-]+(.[a-zA-Z]{2,})+(:[0-9]{1,5})?(/[^\s]*)?\b", False),
        # --- Username ---------------------------------------------------
        ("username-01", "USERNAME", "li2024revisiting",
         r"user( |  )[A-Za-z0-9]+(?<!request)(?! methods)", False),
        ("username-02", "USERNAME", "yadav2023identification", r"user\:\s(\w+)", True),
        ("username-03", "USERNAME", "li2023glad",
         r"r?[uU]ser[:|-|=|\s/]*<(\w+)>|r?[uU]ser[:|-|=|\s/]*(\w+)", True),
        # --- Port -----------------------------------------------------
        ("port-01", "PORT", "li2023glad", r"[pP]ort[=: |:|=|: |\s/]*(\d{1,5})", True),
        # --- Configuration details ---------------------------------------
        ("config-01", "CONFIG", "wang2024vcrlog", r"size\s+(\d+)", True),
    ]


def builtin_bank() -> list[RegexPattern]:
    """All shipped patterns, each tagged with kind and source citation.

    Host names have no entry: no published pattern for them was found.
    """
    return [
        RegexPattern(pid, kind_from_name(kind), pattern, prov, grp)
        for pid, kind, prov, pattern, grp in _bank_rows()
    ]


# The strongest pattern per attribute (by reported F1), with the anchored MAC
# pattern swapped for its usable word-boundary variant.  This is the default
# eight-pattern anonymization pipeline.
BEST_PATTERN_IDS: tuple[str, ...] = (
    "ip-08",
    "mac-fix",
    "filepath-05",
    "id-04",
    "url-01",
    "username-03",
    "port-01",
    "config-01",
)


def best_patterns(bank: Sequence[RegexPattern] | None = None) -> list[RegexPattern]:
    by_id = {p.id: p for p in (bank if bank is not None else builtin_bank())}
    return [by_id[i] for i in BEST_PATTERN_IDS]


def match_spans(p: RegexPattern, line: LogLine | str) -> list[DetectionSpan]:
    """All non-overlapping matches of one pattern, scanned left to right.

    Group-extracting patterns report the first participating capture group;
    empty matches are dropped (a detection must cover at least one character).
    """
    raw = line.raw if isinstance(line, LogLine) else line
    rx = p.compiled  # raises UnsupportedPatternError when not supported
    spans: list[DetectionSpan] = []
    for m in rx.finditer(raw):
        start, end = _match_extent(p, m)
        if start < end:
            spans.append(DetectionSpan(start, end, p.kind, p.id))
    return spans


def _match_extent(p: RegexPattern, m: re.Match) -> tuple[int, int]:
    if p.group_extracting:
        for g in range(1, (m.re.groups or 0) + 1):
            if m.group(g) is not None:
                return m.span(g)
    return m.span()


@dataclass(frozen=True)
class PlaceholderPolicy:
    """How detected values are rewritten (``$IP``, ``$USERNAME``, ...)."""

    prefix: str = "$"
    suffix: str = ""

    def placeholder(self, kind: Kind) -> str:
        return f"{self.prefix}{kind.name.upper()}{self.suffix}"

    def ensure_safe(self, patterns: Iterable[RegexPattern]) -> None:
        """Assert no active pattern can match inside any placeholder."""
        kinds = list(AttributeKind) + list(NetSubKind)
        for p in patterns:
            if not p.supported:
                continue
            rx = p.compiled
            for kind in kinds:
                text = self.placeholder(kind)
                if rx.search(text):
                    raise PlaceholderCollisionError(
                        f"pattern {p.id} matches placeholder {text!r}"
                    )


DEFAULT_POLICY = PlaceholderPolicy()


@dataclass(frozen=True, slots=True)
class PipelineOrder:
    """A permutation of the active pattern ids."""

    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("order repeats a pattern id")


@dataclass(slots=True)
class _Segment:
    # One contiguous piece of the working string.  Placeholder segments are
    # atomic; text segments map 1:1 onto the original line.
    text: str
    orig_start: int
    orig_end: int
    kind: Kind | None = None       # None -> original text
    detector_id: str | None = None

    @property
    def is_placeholder(self) -> bool:
        return self.kind is not None


class AnonymizePipeline:
    """Sequential placeholder rewriting with an order-sensitive audit trail.

    Patterns run in the given order against the *working* string, so an early
    pattern can mask text from a later one - deliberately so, since that
    interference is exactly what the ordering experiments measure.  The audit
    lists the surviving placeholders with their extents in the original line.
    """

    def __init__(
        self,
        patterns: Sequence[RegexPattern],
        policy: PlaceholderPolicy = DEFAULT_POLICY,
    ):
        unsupported = [p.id for p in patterns if not p.supported]
        if unsupported:
            raise UnsupportedPatternError(
                f"pipeline contains unsupported patterns: {', '.join(unsupported)}"
            )
        policy.ensure_safe(patterns)
        self.patterns = list(patterns)
        self.policy = policy

    @classmethod
    def from_order(
        cls,
        order: PipelineOrder,
        bank: Sequence[RegexPattern] | Mapping[str, RegexPattern],
        policy: PlaceholderPolicy = DEFAULT_POLICY,
    ) -> "AnonymizePipeline":
        by_id = bank if isinstance(bank, Mapping) else {p.id: p for p in bank}
        missing = [i for i in order.ids if i not in by_id]
        if missing:
            raise KeyError(f"order names unknown patterns: {', '.join(missing)}")
        return cls([by_id[i] for i in order.ids], policy)

    def anonymize(self, raw: str) -> tuple[str, list[DetectionSpan]]:
        """Rewrite one line; returns the output and its audit entries.

        Audit spans are half-open ranges into the *original* line, disjoint
        and ordered; original text outside them passes through byte-for-byte.
        """
        if raw == "":
            return "", []
        segments: list[_Segment] = [_Segment(raw, 0, len(raw))]
        for p in self.patterns:
            working = "".join(s.text for s in segments)
            matches = []
            for m in p.compiled.finditer(working):
                start, end = _match_extent(p, m)
                if start < end:
                    matches.append((start, end))
            if matches:
                segments = self._replace(segments, matches, p)
        out = "".join(s.text for s in segments)
        audit = [
            DetectionSpan(s.orig_start, s.orig_end, s.kind, s.detector_id)
            for s in segments
            if s.is_placeholder
        ]
        return out, audit

    def _replace(
        self,
        segments: list[_Segment],
        matches: list[tuple[int, int]],
        p: RegexPattern,
    ) -> list[_Segment]:
        # Work right-to-left so earlier offsets stay valid.
        for start, end in reversed(matches):
            segments = self._replace_one(segments, start, end, p)
        return segments

    def _replace_one(
        self, segments: list[_Segment], start: int, end: int, p: RegexPattern
    ) -> list[_Segment]:
        bounds: list[tuple[int, int]] = []
        pos = 0
        for seg in segments:
            bounds.append((pos, pos + len(seg.text)))
            pos += len(seg.text)
        # Placeholders are atomic: a partial overlap widens the match to the
        # whole placeholder (iterate, widening may reach further placeholders).
        changed = True
        while changed:
            changed = False
            for seg, (s0, s1) in zip(segments, bounds):
                if seg.is_placeholder and s0 < end and s1 > start:
                    if s0 < start or s1 > end:
                        start, end = min(start, s0), max(end, s1)
                        changed = True
        before: list[_Segment] = []
        covered: list[_Segment] = []
        after: list[_Segment] = []
        for seg, (s0, s1) in zip(segments, bounds):
            if s1 <= start:
                before.append(seg)
            elif s0 >= end:
                after.append(seg)
            elif seg.is_placeholder:
                covered.append(seg)
            else:
                lo, hi = max(s0, start), min(s1, end)
                if s0 < lo:
                    before.append(
                        _Segment(seg.text[: lo - s0], seg.orig_start,
                                 seg.orig_start + (lo - s0))
                    )
                covered.append(
                    _Segment(seg.text[lo - s0 : hi - s0],
                             seg.orig_start + (lo - s0), seg.orig_start + (hi - s0))
                )
                if hi < s1:
                    after.append(
                        _Segment(seg.text[hi - s0 :], seg.orig_start + (hi - s0),
                                 seg.orig_end)
                    )
        return before + [self._placeholder_for(covered, p)] + after

    def _placeholder_for(self, covered: list[_Segment], p: RegexPattern) -> _Segment:
        return _Segment(
            self.policy.placeholder(p.kind),
            min(s.orig_start for s in covered),
            max(s.orig_end for s in covered),
            kind=p.kind,
            detector_id=p.id,
        )


def anonymize_line(
    line: LogLine | str,
    order: PipelineOrder,
    policy: PlaceholderPolicy = DEFAULT_POLICY,
    bank: Sequence[RegexPattern] | None = None,
) -> str:
    """One-shot ordered anonymization of a single line."""
    pipeline = AnonymizePipeline.from_order(order, bank or builtin_bank(), policy)
    raw = line.raw if isinstance(line, LogLine) else line
    return pipeline.anonymize(raw)[0]


def save_bank(patterns: Sequence[RegexPattern], path) -> None:
    """Write a plain-text pattern registry: id, kind, provenance, pattern.

    The pattern is the last field, so it may itself contain tabs.
    """
    rows = [
        "\t".join((p.id, p.kind.name, p.provenance, p.pattern)) for p in patterns
    ]
    from pathlib import Path

    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_bank(path) -> list[RegexPattern]:
    """Read a pattern registry file written by :func:`save_bank`.

    Imported patterns default to whole-match extent; the group-extraction
    registry applies to the builtin bank only.
    """
    from pathlib import Path

    patterns = []
    seen: set[str] = set()
    for lineno, row in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not row or row.startswith("#"):
            continue
        cells = row.split("\t", 3)
        if len(cells) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
        pid, kind, prov, pattern = cells
        if pid in seen:
            raise ValueError(f"{path}:{lineno}: duplicate pattern id {pid!r}")
        seen.add(pid)
        patterns.append(RegexPattern(pid, kind_from_name(kind), pattern, prov))
    return patterns


@dataclass(frozen=True, slots=True)
class MinMax:
    """Envelope of one metric over the sampled orders (None: never defined)."""

    min: float | None
    max: float | None

    def __post_init__(self) -> None:
        if self.min is not None and self.max is not None and self.min > self.max:
            raise ValueError("min exceeds max")


@dataclass(frozen=True, slots=True)
class OrderExperimentReport:
    """Per-kind precision/recall/F1 envelopes over sampled pattern orders."""

    precision: dict[str, MinMax]
    recall: dict[str, MinMax]
    f1: dict[str, MinMax]
    n_orders: int
    seed: int | None = None

    def to_dict(self) -> dict:
        kinds = sorted(self.precision, key=evaluation.kind_sort_key)
        return {
            "schema": 1,
            "n_orders": self.n_orders,
            "seed": self.seed,
            "kinds": {
                k: {
                    "precision": [self.precision[k].min, self.precision[k].max],
                    "recall": [self.recall[k].min, self.recall[k].max],
                    "f1": [self.f1[k].min, self.f1[k].max],
                }
                for k in kinds
            },
        }

    def to_json(self) -> str:
        import json

        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


_WORKER_STATE: dict = {}


def _order_worker_init(patterns, lines, policy, view, mode):
    _WORKER_STATE["by_id"] = {p.id: p for p in patterns}
    _WORKER_STATE["lines"] = lines
    _WORKER_STATE["policy"] = policy
    _WORKER_STATE["view"] = view
    _WORKER_STATE["mode"] = mode


def _order_worker(task: tuple[int, tuple[str, ...]]) -> tuple[int, dict]:
    index, ids = task
    counts = _score_order(
        PipelineOrder(ids),
        _WORKER_STATE["by_id"],
        _WORKER_STATE["lines"],
        _WORKER_STATE["policy"],
        _WORKER_STATE["view"],
        _WORKER_STATE["mode"],
    )
    return index, {k: (c.tp, c.fp, c.fn) for k, c in counts.items()}


def _score_order(order, by_id, lines, policy, view, mode):
    pipeline = AnonymizePipeline.from_order(order, by_id, policy)
    total: dict = {}
    for ann in lines:
        _, audit = pipeline.anonymize(ann.line.raw)
        evaluation.merge_counts(
            total, evaluation.score_tokens(ann, audit, mode=mode, view=view)
        )
    return total


def order_experiment(
    corpus,
    orders: Sequence[PipelineOrder],
    policy: PlaceholderPolicy = DEFAULT_POLICY,
    bank: Sequence[RegexPattern] | None = None,
    *,
    view: str = "split",
    mode: str = "category",
    seed: int | None = None,
    jobs: int = 1,
) -> OrderExperimentReport:
    """Run the anonymization pipeline once per order and report, for every
    kind, the lowest and highest precision/recall/F1 observed.

    ``corpus`` is a :class:`~logveil.corpus.Dataset` or a sequence of
    annotated lines.  Orders run independently (optionally in a process
    pool); aggregation is by order index, so results do not depend on
    completion order.
    """
    if not orders:
        raise ValueError("no orders to run")
    lines = list(corpus.lines if hasattr(corpus, "lines") else corpus)
    patterns = list(bank) if bank is not None else builtin_bank()
    by_id = {p.id: p for p in patterns}

    per_order: list[dict] = [None] * len(orders)  # type: ignore[list-item]
    if jobs > 1 and len(orders) > 1:
        from concurrent.futures import ProcessPoolExecutor

        tasks = [(i, o.ids) for i, o in enumerate(orders)]
        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_order_worker_init,
            initargs=(patterns, lines, policy, view, mode),
        ) as pool:
            for index, raw_counts in pool.map(_order_worker, tasks, chunksize=8):
                per_order[index] = {
                    k: evaluation.Counts(*v) for k, v in raw_counts.items()
                }
    else:
        for i, order in enumerate(orders):
            per_order[i] = _score_order(order, by_id, lines, policy, view, mode)

    kinds = sorted({k for counts in per_order for k in counts})
    p_env: dict[str, MinMax] = {}
    r_env: dict[str, MinMax] = {}
    f_env: dict[str, MinMax] = {}
    for kind in kinds:
        for env, metric in ((p_env, "precision"), (r_env, "recall"), (f_env, "f1")):
            values = [
                getattr(counts.get(kind, evaluation.Counts()), metric)
                for counts in per_order
            ]
            defined = [v for v in values if v is not None]
            env[kind] = MinMax(min(defined), max(defined)) if defined else MinMax(None, None)
    return OrderExperimentReport(p_env, r_env, f_env, len(orders), seed)


def sample_orders(active: Sequence[str], k: int, seed: int) -> list[PipelineOrder]:
    """Sample ``k`` distinct pattern orderings uniformly, reproducibly.

    Sampling is without replacement over the full permutation space, matching
    experiments that report min/max over distinct orders.
    """
    n = len(active)
    total = math.factorial(n)
    if k > total:
        raise ValueError(f"cannot sample {k} distinct orders from {total} permutations")
    rng = random.Random(seed)
    if total <= 50_000:
        population = list(itertools.permutations(active))
        picked = rng.sample(population, k)
    else:
        seen: set[tuple[str, ...]] = set()
        picked = []
        ids = list(active)
        while len(picked) < k:
            rng.shuffle(ids)
            t = tuple(ids)
            if t not in seen:
                seen.add(t)
                picked.append(t)
    return [PipelineOrder(tuple(t)) for t in picked]
