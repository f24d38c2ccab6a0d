"""Core data model: the sensitivity taxonomy, IOB2 labels, and annotated log lines.

Everything here is immutable after construction and safe to share between
workers. Spans are half-open ``[start, end)`` offsets into the raw line; file
loaders decode bytes one-to-one (latin-1), so offsets coincide with byte
offsets of the source file.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

# ASCII whitespace is the only delimiter class used anywhere in the toolkit.
WHITESPACE = " \t\r\n\v\f"


class AttributeKind(Enum):
    """Coarse sensitive-attribute taxonomy (7 kinds).

    IP addresses, host names, and port numbers collapse into the parent kind
    NET because they commonly appear whitespace-concatenated (``host:port``);
    the sub-kinds live in :class:`NetSubKind` and are used only by the
    net-variant corpora and the net sub-tagger.
    """

    NET = 0
    MAC = 1
    FILEPATH = 2
    ID = 3
    URL = 4
    USERNAME = 5
    CONFIG = 6


class NetSubKind(Enum):
    """Fine-grained components of the NET parent kind."""

    IP = 0
    PORT = 1
    HOSTNAME = 2


Kind = Union[AttributeKind, NetSubKind]

_KIND_BY_NAME: dict[str, Kind] = {k.name: k for k in AttributeKind}
_KIND_BY_NAME.update({k.name: k for k in NetSubKind})


def kind_from_name(name: str) -> Kind:
    """Resolve a kind by its serialized name (``NET``, ``IP``, ...)."""
    try:
        return _KIND_BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown attribute kind {name!r}") from None


def parent_kind(kind: Kind) -> AttributeKind:
    """Map net sub-kinds to NET; coarse kinds map to themselves."""
    return AttributeKind.NET if isinstance(kind, NetSubKind) else kind


class IobValidationError(ValueError):
    """Raised when a label sequence violates the IOB2 grammar."""


@dataclass(frozen=True, slots=True)
class IobLabel:
    """One token label: ``O``, or ``B-``/``I-`` with an attached kind."""

    tag: str
    kind: Kind | None = None

    def __post_init__(self) -> None:
        if self.tag not in ("O", "B", "I"):
            raise ValueError(f"bad IOB tag {self.tag!r}")
        if self.tag == "O" and self.kind is not None:
            raise ValueError("O label cannot carry a kind")
        if self.tag != "O" and self.kind is None:
            raise ValueError(f"{self.tag}- label requires a kind")

    @property
    def text(self) -> str:
        return "O" if self.tag == "O" else f"{self.tag}-{self.kind.name}"

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.text


OUTSIDE = IobLabel("O")


def begin(kind: Kind) -> IobLabel:
    return IobLabel("B", kind)


def inside(kind: Kind) -> IobLabel:
    return IobLabel("I", kind)


def parse_label(text: str) -> IobLabel:
    """Parse serialized label text (``O``, ``B-NET``, ``I-IP``, ...)."""
    if text == "O":
        return OUTSIDE
    if len(text) > 2 and text[1] == "-" and text[0] in "BI":
        return IobLabel(text[0], kind_from_name(text[2:]))
    raise ValueError(f"unknown label text {text!r}")


def label_inventory(kinds: Sequence[Kind]) -> tuple[IobLabel, ...]:
    """Canonical label ordering: O first, then B/I per kind.

    Position in this tuple is the label code used for tie-breaking, so O is
    always the lowest code.
    """
    labels = [OUTSIDE]
    for k in kinds:
        labels.append(begin(k))
        labels.append(inside(k))
    return tuple(labels)


COARSE_LABELS = label_inventory(tuple(AttributeKind))   # 15 labels
NET_LABELS = label_inventory(tuple(NetSubKind))         # 7 labels


@dataclass(frozen=True, slots=True)
class Token:
    """A whitespace-free run of characters with its span in the raw line."""

    text: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("empty token")
        if any(c in WHITESPACE for c in self.text):
            raise ValueError(f"token contains whitespace: {self.text!r}")
        if self.end - self.start != len(self.text):
            raise ValueError(f"span [{self.start},{self.end}) does not fit {self.text!r}")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True, slots=True)
class LogLine:
    """One raw log line with its provenance."""

    raw: str
    dataset_id: str
    line_no: int = 0

    def __post_init__(self) -> None:
        if not self.dataset_id:
            raise ValueError("dataset_id must be non-empty")
        if self.line_no < 0:
            raise ValueError("line_no must be >= 0")


@dataclass(frozen=True, slots=True)
class DetectionSpan:
    """A detector hit: a non-empty character range with its claimed kind."""

    start: int
    end: int
    kind: Kind
    detector_id: str

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"empty or negative detection range [{self.start},{self.end})")


@dataclass(frozen=True, slots=True)
class IobViolation:
    index: int
    reason: str


def validate_iob(labels: Sequence[IobLabel]) -> list[IobViolation]:
    """Check a label sequence against the IOB2 grammar.

    Returns an empty list exactly when the sequence is valid: every I-kind
    must directly follow B-kind or I-kind of the same kind.  Total function,
    never raises.
    """
    violations: list[IobViolation] = []
    prev: IobLabel | None = None
    for i, lab in enumerate(labels):
        if lab.tag == "I":
            if prev is None or prev.tag == "O":
                violations.append(IobViolation(i, f"{lab.text} without a preceding B/I"))
            elif prev.kind is not lab.kind:
                violations.append(
                    IobViolation(i, f"{lab.text} follows {prev.text}: kind mismatch")
                )
        prev = lab
    return violations


@dataclass(frozen=True, slots=True)
class EntitySpan:
    """A maximal B/I run of one kind, as a half-open token-index range."""

    kind: Kind
    start: int
    end: int


# Per-token net sub-annotation: one entry per split part of a NET token,
# None for parts that are not sensitive.
SubParts = tuple[Union[NetSubKind, None], ...]


@dataclass(frozen=True, slots=True)
class AnnotatedLine:
    """A log line with whitespace tokens and one IOB2 label per token.

    ``net_parts`` optionally carries the net sub-annotation sidecar: for each
    token either None or the tuple of sub-kinds of its split parts.
    """

    line: LogLine
    tokens: tuple[Token, ...]
    labels: tuple[IobLabel, ...]
    net_parts: tuple[SubParts | None, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.labels)} labels"
            )
        pos = 0
        for tok in self.tokens:
            if tok.start < pos:
                raise ValueError(f"token spans overlap or out of order at {tok}")
            if self.line.raw[tok.start : tok.end] != tok.text:
                raise ValueError(f"token {tok.text!r} does not match raw line slice")
            pos = tok.end
        bad = validate_iob(self.labels)
        if bad:
            raise IobValidationError(
                "; ".join(f"index {v.index}: {v.reason}" for v in bad)
            )
        if self.net_parts is not None and len(self.net_parts) != len(self.tokens):
            raise ValueError("net_parts length must match tokens")

    def entities(self) -> list[EntitySpan]:
        return entity_spans(self.labels)

    def has_entity(self) -> bool:
        return any(lab.tag != "O" for lab in self.labels)


def entity_spans(annotated: AnnotatedLine | Sequence[IobLabel]) -> list[EntitySpan]:
    """Group a valid IOB2 sequence into maximal same-kind entity runs.

    Raises :class:`IobValidationError` on invalid input.
    """
    labels = annotated.labels if isinstance(annotated, AnnotatedLine) else annotated
    bad = validate_iob(labels)
    if bad:
        raise IobValidationError(
            "; ".join(f"index {v.index}: {v.reason}" for v in bad)
        )
    spans: list[EntitySpan] = []
    start = None
    kind: Kind | None = None
    for i, lab in enumerate(labels):
        if lab.tag == "B":
            if start is not None:
                spans.append(EntitySpan(kind, start, i))
            start, kind = i, lab.kind
        elif lab.tag == "O":
            if start is not None:
                spans.append(EntitySpan(kind, start, i))
                start, kind = None, None
        # I- continues the open run; validity already guarantees kind match
    if start is not None:
        spans.append(EntitySpan(kind, start, len(labels)))
    return spans


def labels_from_entities(n_tokens: int, entities: Iterable[EntitySpan]) -> tuple[IobLabel, ...]:
    """Expand entity spans back into an IOB2 label sequence (round trip of
    :func:`entity_spans`)."""
    labels: list[IobLabel] = [OUTSIDE] * n_tokens
    for ent in entities:
        if not (0 <= ent.start < ent.end <= n_tokens):
            raise ValueError(f"entity range [{ent.start},{ent.end}) out of bounds")
        labels[ent.start] = begin(ent.kind)
        for i in range(ent.start + 1, ent.end):
            labels[i] = inside(ent.kind)
    return tuple(labels)
