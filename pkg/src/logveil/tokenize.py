"""Whitespace pre-tokenization and net-token splitting.

Log lines are tokenized on ASCII whitespace only; joining the tokens with the
original inter-token whitespace reconstructs the input exactly.  Net-labeled
tokens (``10.250.18.114:50010``) can additionally be split on a small set of
separator characters to produce the net-variant corpus where each component
carries its own IP/PORT/HOSTNAME label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .model import (
    WHITESPACE,
    AnnotatedLine,
    AttributeKind,
    IobLabel,
    NetSubKind,
    OUTSIDE,
    Token,
    begin,
)

_WS = frozenset(WHITESPACE)


def tokenize(raw: str) -> tuple[Token, ...]:
    """Split a raw line into maximal non-whitespace runs with exact spans."""
    tokens: list[Token] = []
    i, n = 0, len(raw)
    while i < n:
        if raw[i] in _WS:
            i += 1
            continue
        j = i + 1
        while j < n and raw[j] not in _WS:
            j += 1
        tokens.append(Token(raw[i:j], i, j))
        i = j
    return tuple(tokens)


@dataclass(frozen=True, slots=True)
class NetSplitRule:
    """Separator characters used to split concatenated network tokens."""

    delimiters: frozenset[str] = frozenset({":", "/", "@"})

    def __post_init__(self) -> None:
        for d in self.delimiters:
            if len(d) != 1 or d.isalnum() or d in _WS:
                raise ValueError(f"bad net-split delimiter {d!r}")


DEFAULT_NET_SPLIT = NetSplitRule()


def net_split(token: Token, rule: NetSplitRule = DEFAULT_NET_SPLIT) -> tuple[Token, ...]:
    """Split a token at separators that have non-separator text on both sides.

    Cut points adjacent to another delimiter or to the token boundary are
    ignored, so ``::1`` and ``:5070`` stay whole while ``10.0.0.1:50010``
    splits into two parts.  The separator itself belongs to no part; emitted
    parts carry exact sub-spans of the original token.
    """
    text = token.text
    delims = rule.delimiters
    cuts = [
        i
        for i in range(1, len(text) - 1)
        if text[i] in delims and text[i - 1] not in delims and text[i + 1] not in delims
    ]
    if not cuts:
        return (token,)
    parts: list[Token] = []
    prev = 0
    for c in cuts:
        parts.append(Token(text[prev:c], token.start + prev, token.start + c))
        prev = c + 1
    parts.append(Token(text[prev:], token.start + prev, token.start + len(text)))
    return tuple(parts)


@dataclass(frozen=True, slots=True)
class NetSplitIssue:
    """A line dropped by :func:`derive_net_corpus`, with the reason."""

    dataset_id: str
    line_no: int
    reason: str


def split_line_tokens(
    ann: AnnotatedLine, rule: NetSplitRule = DEFAULT_NET_SPLIT
) -> tuple[tuple[Token, ...], tuple[IobLabel, ...]]:
    """Net-split view of one line: NET tokens replaced by their parts.

    Part labels come from the line's sub-annotation sidecar; everything else
    keeps its original label.  Raises ValueError when a NET token lacks a
    matching sidecar entry.
    """
    tokens: list[Token] = []
    labels: list[IobLabel] = []
    for i, (tok, lab) in enumerate(zip(ann.tokens, ann.labels)):
        if lab.tag != "O" and lab.kind is AttributeKind.NET:
            parts = net_split(tok, rule)
            sidecar = None if ann.net_parts is None else ann.net_parts[i]
            if sidecar is None:
                raise ValueError(f"net token {tok.text!r} has no sub-annotation")
            if len(sidecar) != len(parts):
                raise ValueError(
                    f"net token {tok.text!r} splits into {len(parts)} parts "
                    f"but sidecar lists {len(sidecar)}"
                )
            for part, sub in zip(parts, sidecar):
                tokens.append(part)
                labels.append(OUTSIDE if sub is None else begin(sub))
        else:
            tokens.append(tok)
            labels.append(lab)
    return tuple(tokens), tuple(labels)


def derive_net_corpus(
    corpus: Iterable[AnnotatedLine], rule: NetSplitRule = DEFAULT_NET_SPLIT
) -> tuple[list[AnnotatedLine], list[NetSplitIssue]]:
    """Build the net-variant corpus: lines with >=1 NET entity, NET tokens
    split and relabeled with sub-kinds, every other token relabeled O.

    Lines whose NET tokens lack a usable sidecar are skipped and reported.
    """
    out: list[AnnotatedLine] = []
    issues: list[NetSplitIssue] = []
    for ann in corpus:
        if not any(l.tag != "O" and l.kind is AttributeKind.NET for l in ann.labels):
            continue
        try:
            tokens, labels = split_line_tokens(ann, rule)
        except ValueError as e:
            issues.append(NetSplitIssue(ann.line.dataset_id, ann.line.line_no, str(e)))
            continue
        # Non-net kinds are dropped to O in this variant.
        labels = tuple(
            lab if isinstance(lab.kind, NetSubKind) else OUTSIDE for lab in labels
        )
        out.append(AnnotatedLine(ann.line, tokens, labels))
    return out, issues
