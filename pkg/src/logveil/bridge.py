"""Detector wire protocol: newline-delimited JSON over a backend's stdio.

An external labeling process (typically a neural token classifier) can stand
in for the native tagger.  The client spawns the backend, exchanges hello
objects, then sends one request at a time::

    client > {"hello": 1}
    backend> {"hello": 1, "model": "...", "modes": {"coarse": [...], "net": [...]}}
    client > {"id": 1, "mode": "coarse", "tokens": ["BLOCK*", "ask", ...]}
    backend> {"id": 1, "labels": ["O", "O", ...]}

Responses must echo the request id and return exactly one label per token,
every label drawn from the mode's closed vocabulary.  Label sequences that
break the IOB grammar are repaired (the offending I- becomes B-) and the
repair is recorded; structural problems raise :class:`BridgeError` carrying
the raw payload.  One request is in flight per process; run several backend
processes for parallelism.
"""
from __future__ import annotations

import json
import logging
import subprocess
import threading
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Sequence

from .model import (
    AnnotatedLine,
    AttributeKind,
    COARSE_LABELS,
    IobLabel,
    LogLine,
    NET_LABELS,
    SubParts,
    parse_label,
    validate_iob,
)
from .tokenize import DEFAULT_NET_SPLIT, NetSplitRule, net_split, tokenize

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MODE_VOCABULARIES: dict[str, tuple[str, ...]] = {
    "coarse": tuple(l.text for l in COARSE_LABELS),
    "net": tuple(l.text for l in NET_LABELS),
}


class BridgeError(RuntimeError):
    """Protocol violation; ``payload`` holds the raw offending line/object."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


@dataclass(frozen=True, slots=True)
class BridgeRequest:
    id: int
    mode: str
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.mode not in MODE_VOCABULARIES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if any(not t for t in self.tokens):
            raise ValueError("tokens must be non-empty strings")

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "mode": self.mode, "tokens": list(self.tokens)}
        )


@dataclass(frozen=True, slots=True)
class RepairNotice:
    request_id: int
    index: int
    received: str
    repaired: str


@dataclass
class BridgeHello:
    version: int
    model: str = ""
    modes: dict[str, tuple[str, ...]] = field(default_factory=dict)


class BridgeClient:
    """Supervises one backend process and keeps one request in flight."""

    def __init__(self, cmd: Sequence[str], timeout: float = 60.0):
        self.cmd = list(cmd)
        self.timeout = timeout
        self.repairs: list[RepairNotice] = []
        self._next_id = 1
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: Queue[str | None] = Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self.hello = self._handshake()

    # -- transport ---------------------------------------------------------

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, text: str) -> None:
        if self._proc.poll() is not None:
            raise BridgeError(f"backend exited with code {self._proc.returncode}")
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise BridgeError(f"backend pipe closed: {e}") from e

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except Empty:
            raise BridgeError(f"backend timed out after {self.timeout}s") from None
        if line is None:
            raise BridgeError("backend closed its output stream")
        try:
            obj = json.loads(line)
        except ValueError as e:
            raise BridgeError(f"backend sent invalid JSON: {e}", payload=line) from e
        if not isinstance(obj, dict):
            raise BridgeError("backend sent a non-object line", payload=line)
        return obj

    def _handshake(self) -> BridgeHello:
        self._send(json.dumps({"hello": PROTOCOL_VERSION}))
        obj = self._recv()
        if "error" in obj:
            raise BridgeError(f"backend refused handshake: {obj['error']}", payload=obj)
        if obj.get("hello") != PROTOCOL_VERSION:
            raise BridgeError(
                f"protocol version mismatch: backend speaks {obj.get('hello')!r}, "
                f"client speaks {PROTOCOL_VERSION}",
                payload=obj,
            )
        modes = {
            m: tuple(v) for m, v in obj.get("modes", {}).items() if isinstance(v, list)
        }
        return BridgeHello(PROTOCOL_VERSION, str(obj.get("model", "")), modes)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- labeling ----------------------------------------------------------

    def tag(self, tokens: Sequence[str], mode: str) -> tuple[IobLabel, ...]:
        """Label a pre-tokenized line via the backend, repairing IOB slips."""
        req = BridgeRequest(self._next_id, mode, tuple(tokens))
        self._next_id += 1
        if not tokens:
            return ()
        self._send(req.to_json())
        obj = self._recv()
        if "error" in obj:
            raise BridgeError(f"backend error: {obj['error']}", payload=obj)
        if obj.get("id") != req.id:
            raise BridgeError(
                f"response id {obj.get('id')!r} does not match request {req.id}",
                payload=obj,
            )
        labels = obj.get("labels")
        if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
            raise BridgeError("response lacks a list of label strings", payload=obj)
        if len(labels) != len(tokens):
            raise BridgeError(
                f"{len(labels)} labels for {len(tokens)} tokens", payload=obj
            )
        vocab = self.hello.modes.get(mode) or MODE_VOCABULARIES[mode]
        bad = [l for l in labels if l not in vocab]
        if bad:
            raise BridgeError(
                f"labels outside the {mode} vocabulary: {bad[:3]}", payload=obj
            )
        try:
            parsed = [parse_label(l) for l in labels]
        except ValueError as e:
            raise BridgeError(f"unparseable label: {e}", payload=obj) from e
        return self._repair(req.id, parsed)

    def _repair(self, request_id: int, labels: list[IobLabel]) -> tuple[IobLabel, ...]:
        while True:
            violations = validate_iob(labels)
            if not violations:
                return tuple(labels)
            v = violations[0]
            fixed = IobLabel("B", labels[v.index].kind)
            notice = RepairNotice(request_id, v.index, labels[v.index].text, fixed.text)
            self.repairs.append(notice)
            log.warning(
                "bridge response %d: repaired %s -> %s at token %d",
                request_id, notice.received, notice.repaired, v.index,
            )
            labels[v.index] = fixed


class BridgeDetector:
    """Hierarchical tagging through one or two backend processes.

    Mirrors the native two-level detector: coarse labels come from the coarse
    backend; tokens it marks NET are split and relabeled by the net backend
    when one is configured.
    """

    def __init__(
        self,
        coarse: BridgeClient,
        net: BridgeClient | None = None,
        rule: NetSplitRule = DEFAULT_NET_SPLIT,
    ):
        self.coarse = coarse
        self.net = net
        self.rule = rule

    def tag_line(self, line: LogLine | str) -> AnnotatedLine:
        if isinstance(line, str):
            line = LogLine(line, "adhoc")
        tokens = tokenize(line.raw)
        labels = self.coarse.tag([t.text for t in tokens], "coarse")
        net_idx = [
            i
            for i, lab in enumerate(labels)
            if lab.tag != "O" and lab.kind is AttributeKind.NET
        ]
        if not net_idx or self.net is None:
            return AnnotatedLine(line, tokens, labels)
        flat = []
        slices: dict[int, tuple[int, int]] = {}
        net_set = set(net_idx)
        for i, tok in enumerate(tokens):
            if i in net_set:
                parts = net_split(tok, self.rule)
                slices[i] = (len(flat), len(flat) + len(parts))
                flat.extend(parts)
            else:
                flat.append(tok)
        sub_labels = self.net.tag([t.text for t in flat], "net")
        net_parts: list[SubParts | None] = [None] * len(tokens)
        for i, (lo, hi) in slices.items():
            net_parts[i] = tuple(
                lab.kind if lab.tag != "O" else None for lab in sub_labels[lo:hi]
            )
        return AnnotatedLine(line, tokens, labels, tuple(net_parts))
