"""Hierarchical sequence tagger: a coarse 7-kind model over whole tokens and
a net sub-model over split net tokens.

The learner is an averaged structured perceptron over explicit string
features with a hard IOB2-constrained Viterbi decoder; transitions that would
break the label grammar are pinned to -inf and never updated, so decoder
output is valid by construction.  Training is deterministic given the corpus,
config, and seed.

Decoding ties are broken toward the lowest label code at the earliest
position: the decoder returns the lexicographically smallest of the
maximum-score label sequences, with O holding the lowest code.
"""
from __future__ import annotations

import gzip
import hashlib
import json
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .model import (
    AnnotatedLine,
    AttributeKind,
    COARSE_LABELS,
    IobLabel,
    LogLine,
    NET_LABELS,
    NetSubKind,
    SubParts,
    Token,
    DetectionSpan,
    parse_label,
)
from .tokenize import DEFAULT_NET_SPLIT, NetSplitRule, net_split, tokenize

FEATURE_TEMPLATE_VERSION = 1
MODEL_MAGIC = b"SDLOGM1\n"
MODEL_FORMAT = 1

_DIGITS = set("0123456789")


def _shape(text: str) -> str:
    # collapse runs after mapping digit->d, alpha->a; other chars kept
    out = []
    prev = None
    for ch in text:
        c = "d" if ch in _DIGITS else ("a" if ch.isalpha() else ch)
        if c != prev:
            out.append(c)
            prev = c
    s = "".join(out)
    return s if len(s) <= 16 else s[:16] + "~"


def _count_feature(name: str, text: str, ch: str, feats: list[str]) -> None:
    n = text.count(ch)
    if n:
        feats.append(f"{name}={n if n <= 4 else '5+'}")


def _has_digit_run(text: str) -> bool:
    run = 0
    for ch in text:
        if ch in _DIGITS:
            run += 1
            if run >= 2:
                return True
        else:
            run = 0
    return False


def extract_features(tokens: Sequence[Token], i: int) -> dict[str, float]:
    """Deterministic sparse features for token ``i`` in its line context.

    Template v1: lowercased identity, collapsed character shape, prefixes and
    suffixes up to length 4, separator counts, digit flags, position flags,
    and identity/shape/digit context for the window i-2..i+2.
    """
    if not 0 <= i < len(tokens):
        raise IndexError(f"token index {i} out of range")
    return {f: 1.0 for f in _token_features(tuple(t.text for t in tokens), i)}


def _token_features(texts: tuple[str, ...], i: int) -> tuple[str, ...]:
    text = texts[i]
    low = text.lower()
    feats = [f"w={low}", f"shape={_shape(text)}"]
    for k in range(1, 5):
        if len(low) >= k:
            feats.append(f"pre{k}={low[:k]}")
            feats.append(f"suf{k}={low[-k:]}")
    _count_feature("dots", text, ".", feats)
    _count_feature("colons", text, ":", feats)
    _count_feature("slashes", text, "/", feats)
    _count_feature("dashes", text, "-", feats)
    _count_feature("ats", text, "@", feats)
    if any(c in _DIGITS for c in text):
        feats.append("has-digit")
        if _has_digit_run(text):
            feats.append("digit-run")
    if i == 0:
        feats.append("BOS-context")
    if i == len(texts) - 1:
        feats.append("EOS-context")
    for off in (-2, -1, 1, 2):
        j = i + off
        if 0 <= j < len(texts):
            neighbor = texts[j]
            feats.append(f"w@{off}={neighbor.lower()}")
            feats.append(f"shape@{off}={_shape(neighbor)}")
            if any(c in _DIGITS for c in neighbor):
                feats.append(f"digit@{off}")
        else:
            feats.append(f"w@{off}={'<s>' if off < 0 else '</s>'}")
    return tuple(feats)


@lru_cache(maxsize=50_000)
def _line_features(texts: tuple[str, ...]) -> tuple[tuple[str, ...], ...]:
    return tuple(_token_features(texts, i) for i in range(len(texts)))


def _transition_mask(labels: Sequence[IobLabel]) -> np.ndarray:
    """Valid-transition mask, shape (L+1, L); row L is the start state."""
    n = len(labels)
    mask = np.zeros((n + 1, n), dtype=bool)
    for j, cur in enumerate(labels):
        if cur.tag != "I":
            mask[:, j] = True
            continue
        for i, prev in enumerate(labels):
            mask[i, j] = prev.tag != "O" and prev.kind is cur.kind
        mask[n, j] = False  # start -> I is invalid
    return mask


class TaggerModelError(ValueError):
    """Model file problems: bad magic, version skew, corруpt payload."""


@dataclass
class TaggerModel:
    """Trained weights: emissions per feature, transitions per label pair."""

    labels: tuple[IobLabel, ...]
    emissions: dict[str, np.ndarray]
    transitions: np.ndarray  # (L+1, L), -inf where IOB2-invalid
    feature_version: int = FEATURE_TEMPLATE_VERSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.labels)
        if self.transitions.shape != (n + 1, n):
            raise ValueError("transition table shape mismatch")

    @property
    def label_texts(self) -> tuple[str, ...]:
        return tuple(l.text for l in self.labels)

    def decode(self, tokens: Sequence[Token]) -> tuple[IobLabel, ...]:
        """Highest-scoring IOB2-valid label sequence for the tokens."""
        T = len(tokens)
        if T == 0:
            return ()
        L = len(self.labels)
        feats = _line_features(tuple(t.text for t in tokens))
        E = np.zeros((T, L))
        for t in range(T):
            row = E[t]
            for f in feats[t]:
                v = self.emissions.get(f)
                if v is not None:
                    row += v
        # suffix[t][y]: best score of positions t.. given label y at t
        suffix = [None] * T
        suffix[T - 1] = E[T - 1]
        inner = self.transitions[:L]
        for t in range(T - 2, -1, -1):
            suffix[t] = E[t] + (inner + suffix[t + 1][None, :]).max(axis=1)
        out = []
        prev = L  # start state
        for t in range(T):
            cand = self.transitions[prev] + suffix[t]
            prev = int(np.argmax(cand))  # first max <=> lowest label code
            out.append(self.labels[prev])
        return tuple(out)

    def tag_line(self, line: LogLine | str) -> AnnotatedLine:
        if isinstance(line, str):
            line = LogLine(line, "adhoc")
        tokens = tokenize(line.raw)
        return AnnotatedLine(line, tokens, self.decode(tokens))


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """Training loop knobs; evaluation runs every ``eval_every`` lines."""

    epochs: int = 2
    eval_every: int = 300
    seed: int = 0
    shuffle: bool = True
    keep_best: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


def _infer_labels(corpus: Iterable[AnnotatedLine]) -> tuple[IobLabel, ...]:
    kinds = {l.kind for ann in corpus for l in ann.labels if l.tag != "O"}
    if kinds and all(isinstance(k, NetSubKind) for k in kinds):
        return NET_LABELS
    return COARSE_LABELS


def _corpus_fingerprint(corpus: Sequence[AnnotatedLine]) -> str:
    h = hashlib.sha256()
    for ann in corpus:
        h.update(ann.line.raw.encode("utf-8", "replace"))
        h.update(b"\x00")
        h.update("|".join(l.text for l in ann.labels).encode())
        h.update(b"\x01")
    return h.hexdigest()[:16]


def token_f1(model: TaggerModel, lines: Sequence[AnnotatedLine]) -> float:
    """Exact-label token F1 over non-O tokens; 1.0 when nothing is labeled."""
    tp = fp = fn = 0
    for ann in lines:
        pred = model.decode(ann.tokens)
        for g, p in zip(ann.labels, pred):
            if g.tag != "O" and g == p:
                tp += 1
            else:
                if p.tag != "O":
                    fp += 1
                if g.tag != "O":
                    fn += 1
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 1.0


class _Trainer:
    """Averaged perceptron state with lazy accumulation."""

    def __init__(self, labels: tuple[IobLabel, ...], base: TaggerModel | None = None):
        self.labels = labels
        self.index = {l: i for i, l in enumerate(labels)}
        self.L = len(labels)
        self.mask = _transition_mask(labels)
        if base is not None:
            self.w = {f: v.copy() for f, v in base.emissions.items()}
            self.wt = np.where(self.mask, np.nan_to_num(base.transitions, neginf=0.0), 0.0)
        else:
            self.w = {}
            self.wt = np.zeros((self.L + 1, self.L))
        self.acc: dict[str, np.ndarray] = {}
        self.last: dict[str, int] = {}
        self.acc_t = np.zeros_like(self.wt)
        self.t = 0

    def _touch(self, f: str) -> np.ndarray:
        v = self.w.get(f)
        if v is None:
            v = self.w[f] = np.zeros(self.L)
        synced = self.last.get(f, 0)
        if synced < self.t - 1:
            a = self.acc.get(f)
            if a is None:
                a = self.acc[f] = np.zeros(self.L)
            a += v * (self.t - 1 - synced)
        self.last[f] = self.t - 1
        return v

    def emissions_matrix(self, feats: Sequence[tuple[str, ...]]) -> np.ndarray:
        E = np.zeros((len(feats), self.L))
        for t, fs in enumerate(feats):
            row = E[t]
            for f in fs:
                v = self.w.get(f)
                if v is not None:
                    row += v
        return E

    def decode_indices(self, E: np.ndarray) -> list[int]:
        T = E.shape[0]
        trans = np.where(self.mask, self.wt, -np.inf)
        suffix = [None] * T
        suffix[T - 1] = E[T - 1]
        inner = trans[: self.L]
        for t in range(T - 2, -1, -1):
            suffix[t] = E[t] + (inner + suffix[t + 1][None, :]).max(axis=1)
        out = []
        prev = self.L
        for t in range(T):
            prev = int(np.argmax(trans[prev] + suffix[t]))
            out.append(prev)
        return out

    def step(self, feats: Sequence[tuple[str, ...]], gold: list[int]) -> bool:
        """Process one line; returns True when an update happened."""
        self.t += 1
        E = self.emissions_matrix(feats)
        pred = self.decode_indices(E)
        updated = False
        if pred != gold:
            updated = True
            for fs, g, p in zip(feats, gold, pred):
                if g == p:
                    continue
                for f in fs:
                    v = self._touch(f)
                    v[g] += 1.0
                    v[p] -= 1.0
            prev_g = prev_p = self.L
            for g, p in zip(gold, pred):
                if (prev_g, g) != (prev_p, p):
                    self.wt[prev_g, g] += 1.0
                    self.wt[prev_p, p] -= 1.0
                prev_g, prev_p = g, p
        self.acc_t += self.wt
        return updated

    def snapshot(self, meta: dict) -> TaggerModel:
        """Averaged model over all steps so far."""
        if self.t == 0:
            emissions = {f: v.copy() for f, v in self.w.items()}
            trans_avg = self.wt.copy()
        else:
            emissions = {}
            for f, v in self.w.items():
                a = self.acc.get(f)
                total = v * (self.t - self.last.get(f, 0))
                if a is not None:
                    total = total + a
                emissions[f] = total / self.t
            trans_avg = self.acc_t / self.t
        transitions = np.where(self.mask, trans_avg, -np.inf)
        return TaggerModel(self.labels, emissions, transitions, meta=dict(meta))


def _prepare(
    corpus: Sequence[AnnotatedLine], index: dict[IobLabel, int]
) -> list[tuple[tuple[tuple[str, ...], ...], list[int]]]:
    prepared = []
    for ann in corpus:
        if not ann.tokens:
            continue
        try:
            gold = [index[l] for l in ann.labels]
        except KeyError as e:
            raise ValueError(
                f"label {e.args[0].text} not in the model's inventory"
            ) from None
        prepared.append((_line_features(tuple(t.text for t in ann.tokens)), gold))
    return prepared


def _fit(
    trainer: _Trainer,
    corpus: Sequence[AnnotatedLine],
    cfg: TrainConfig,
    heldout: Sequence[AnnotatedLine],
    meta: dict,
) -> TaggerModel:
    prepared = _prepare(corpus, trainer.index)
    if not prepared:
        raise ValueError("corpus has no non-empty lines")
    rng = random.Random(cfg.seed)
    best: tuple[float, TaggerModel] | None = None

    def consider(snapshot: TaggerModel) -> None:
        nonlocal best
        if not heldout or not cfg.keep_best:
            return
        score = token_f1(snapshot, heldout)
        if best is None or score > best[0]:
            best = (score, snapshot)

    order = list(range(len(prepared)))
    steps = 0
    for _ in range(cfg.epochs):
        if cfg.shuffle:
            rng.shuffle(order)
        for idx in order:
            feats, gold = prepared[idx]
            trainer.step(feats, gold)
            steps += 1
            if heldout and cfg.keep_best and steps % cfg.eval_every == 0:
                consider(trainer.snapshot(meta))
    final = trainer.snapshot(meta)
    consider(final)
    return best[1] if best is not None else final


def train(
    corpus: Sequence[AnnotatedLine],
    cfg: TrainConfig = TrainConfig(),
    heldout: Sequence[AnnotatedLine] = (),
    labels: Sequence[IobLabel] | None = None,
) -> TaggerModel:
    """Train from scratch; returns the checkpoint with the best held-out
    token F1 (the final averaged weights when no held-out set is given)."""
    if not corpus:
        raise ValueError("empty training corpus")
    if cfg.epochs < 1:
        raise ValueError("training needs epochs >= 1")
    inventory = tuple(labels) if labels is not None else _infer_labels(corpus)
    trainer = _Trainer(inventory)
    meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "corpus": _corpus_fingerprint(corpus),
        "lines": len(corpus),
    }
    return _fit(trainer, corpus, cfg, heldout, meta)


def finetune(
    model: TaggerModel,
    samples: Sequence[AnnotatedLine],
    cfg: TrainConfig = TrainConfig(),
    heldout: Sequence[AnnotatedLine] = (),
) -> TaggerModel:
    """Continue updates from an existing model's weights (no re-init).

    ``epochs=0`` performs no updates and returns the model unchanged.
    """
    if not samples:
        raise ValueError("no fine-tuning samples")
    if cfg.epochs == 0:
        return model
    trainer = _Trainer(model.labels, base=model)
    meta = dict(model.meta)
    meta.update(
        {
            "finetuned_on": _corpus_fingerprint(samples),
            "finetune_lines": len(samples),
            "finetune_seed": cfg.seed,
        }
    )
    return _fit(trainer, samples, cfg, heldout, meta)


def tag_hierarchical(
    coarse: TaggerModel,
    net_model: TaggerModel,
    line: LogLine | str,
    rule: NetSplitRule = DEFAULT_NET_SPLIT,
) -> AnnotatedLine:
    """Coarse decode, then re-decode split net tokens with the net model.

    The returned line carries predicted sub-kinds for NET tokens in its
    ``net_parts`` sidecar; sub-spans stay exact sub-ranges of the raw line.
    """
    if coarse.feature_version != net_model.feature_version:
        raise TaggerModelError(
            f"feature template mismatch: coarse v{coarse.feature_version}, "
            f"net v{net_model.feature_version}"
        )
    if isinstance(line, str):
        line = LogLine(line, "adhoc")
    tokens = tokenize(line.raw)
    labels = coarse.decode(tokens)
    net_idx = [
        i
        for i, lab in enumerate(labels)
        if lab.tag != "O" and lab.kind is AttributeKind.NET
    ]
    if not net_idx:
        return AnnotatedLine(line, tokens, labels)
    flat: list[Token] = []
    part_slices: dict[int, tuple[int, int]] = {}
    net_set = set(net_idx)
    for i, tok in enumerate(tokens):
        if i in net_set:
            parts = net_split(tok, rule)
            part_slices[i] = (len(flat), len(flat) + len(parts))
            flat.extend(parts)
        else:
            flat.append(tok)
    sub_labels = net_model.decode(flat)
    net_parts: list[SubParts | None] = [None] * len(tokens)
    for i, (lo, hi) in part_slices.items():
        net_parts[i] = tuple(
            lab.kind if lab.tag != "O" else None for lab in sub_labels[lo:hi]
        )
    return AnnotatedLine(line, tokens, labels, tuple(net_parts))


def detections(
    ann: AnnotatedLine,
    detector_id: str = "tagger",
    rule: NetSplitRule = DEFAULT_NET_SPLIT,
) -> list[DetectionSpan]:
    """Detector-agnostic spans from an annotated line.

    NET tokens with sub-annotations contribute one span per sensitive part;
    all other entities contribute their full token range.
    """
    out: list[DetectionSpan] = []
    for ent in ann.entities():
        if ent.kind is AttributeKind.NET and ann.net_parts is not None:
            emitted = False
            for i in range(ent.start, ent.end):
                sub = ann.net_parts[i]
                if sub is None:
                    continue
                parts = net_split(ann.tokens[i], rule)
                if len(parts) != len(sub):
                    continue
                emitted = True
                for part, kind in zip(parts, sub):
                    if kind is not None:
                        out.append(DetectionSpan(part.start, part.end, kind, detector_id))
            if emitted:
                continue
        out.append(
            DetectionSpan(
                ann.tokens[ent.start].start,
                ann.tokens[ent.end - 1].end,
                ent.kind,
                detector_id,
            )
        )
    return out


# --------------------------------------------------------------------------
# model files: MAGIC line, then a gzip stream of canonical JSON


def save_model(model: TaggerModel, path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "feature_template": model.feature_version,
        "labels": list(model.label_texts),
        "transitions": model.transitions.tolist(),
        "emissions": {f: [float(x) for x in v] for f, v in sorted(model.emissions.items())},
        "meta": model.meta,
    }
    body = json.dumps(payload, sort_keys=True, allow_nan=True).encode("utf-8")
    from pathlib import Path

    Path(path).write_bytes(MODEL_MAGIC + gzip.compress(body, mtime=0))


def load_model(path) -> TaggerModel:
    from pathlib import Path

    blob = Path(path).read_bytes()
    if not blob.startswith(MODEL_MAGIC):
        raise TaggerModelError(f"{path}: not a tagger model file (bad magic)")
    try:
        payload = json.loads(gzip.decompress(blob[len(MODEL_MAGIC) :]))
    except (OSError, ValueError) as e:
        raise TaggerModelError(f"{path}: corrupt model payload: {e}") from e
    if payload.get("format") != MODEL_FORMAT:
        raise TaggerModelError(
            f"{path}: model format {payload.get('format')!r}, expected {MODEL_FORMAT}"
        )
    if payload.get("feature_template") != FEATURE_TEMPLATE_VERSION:
        raise TaggerModelError(
            f"{path}: feature template v{payload.get('feature_template')!r} "
            f"differs from supported v{FEATURE_TEMPLATE_VERSION}"
        )
    labels = tuple(parse_label(t) for t in payload["labels"])
    emissions = {f: np.array(v, dtype=float) for f, v in payload["emissions"].items()}
    transitions = np.array(payload["transitions"], dtype=float)
    return TaggerModel(
        labels,
        emissions,
        transitions,
        feature_version=payload["feature_template"],
        meta=payload.get("meta", {}),
    )
