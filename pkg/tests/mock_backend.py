"""Scriptable stand-in for a neural labeling backend (test double).

Speaks protocol v1 on stdio and labels tokens with cheap heuristics.  Magic
token texts trigger protocol violations so client error paths can be tested:

    __SHORT__    drop one label from the response
    __BADLABEL__ emit a label outside the vocabulary
    __IORPHAN__  emit an I- label in first position
    __JUNK__     reply with a non-JSON line
    __WRONGID__  echo a wrong request id
    __ERROR__    reply with an error object
    __EXIT__     terminate without replying

Usage: python mock_backend.py [--hello-version N] [--no-modes]
"""
from __future__ import annotations

import argparse
import json
import re
import sys

COARSE = ["O"] + [
    f"{p}-{k}"
    for k in ("NET", "MAC", "FILEPATH", "ID", "URL", "USERNAME", "CONFIG")
    for p in ("B", "I")
]
NET = ["O", "B-IP", "I-IP", "B-PORT", "I-PORT", "B-HOSTNAME", "I-HOSTNAME"]

IP_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}(:\d+)?$")
MAC_RE = re.compile(r"^([0-9A-Fa-f]{2}:){5}[0-9A-Fa-f]{2}")
HOST_RE = re.compile(r"^[a-z0-9.-]+\.[a-z]{2,}(:\d+)?$")


def coarse_label(token: str, prev: str) -> str:
    if IP_RE.match(token) or HOST_RE.match(token):
        return "B-NET"
    if MAC_RE.match(token):
        return "B-MAC"
    if token.startswith("/"):
        return "B-FILEPATH"
    if "://" in token:
        return "B-URL"
    if "_" in token and any(c.isdigit() for c in token):
        return "B-ID"
    if prev in ("user", "account", "login"):
        return "B-USERNAME"
    return "O"


def net_label(token: str) -> str:
    if IP_RE.match(token):
        return "B-IP"
    if token.isdigit():
        return "B-PORT"
    return "B-HOSTNAME" if "." in token else "O"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--hello-version", type=int, default=1)
    ap.add_argument("--no-modes", action="store_true")
    args = ap.parse_args()

    line = sys.stdin.readline()
    try:
        hello = json.loads(line)
    except ValueError:
        hello = {}
    if hello.get("hello") != 1:
        print(json.dumps({"error": f"unsupported client hello {line.strip()!r}"}), flush=True)
        return 1
    reply = {"hello": args.hello_version, "model": "mock heuristic labeler"}
    if not args.no_modes:
        reply["modes"] = {"coarse": COARSE, "net": NET}
    print(json.dumps(reply), flush=True)

    for line in sys.stdin:
        try:
            req = json.loads(line)
        except ValueError:
            print(json.dumps({"error": "request is not JSON"}), flush=True)
            continue
        tokens = req.get("tokens", [])
        mode = req.get("mode", "coarse")
        if "__EXIT__" in tokens:
            return 0
        if "__JUNK__" in tokens:
            print("this is not json", flush=True)
            continue
        if "__ERROR__" in tokens:
            print(json.dumps({"id": req.get("id"), "error": "backend refused"}), flush=True)
            continue
        if mode == "net":
            labels = [net_label(t) for t in tokens]
        else:
            labels = [
                coarse_label(t, tokens[i - 1] if i else "") for i, t in enumerate(tokens)
            ]
        if "__IORPHAN__" in tokens:
            labels[0] = "I-NET"
        if "__BADLABEL__" in tokens:
            labels[0] = "B-BOGUS"
        if "__SHORT__" in tokens:
            labels = labels[:-1]
        rid = req.get("id", 0) + (1 if "__WRONGID__" in tokens else 0)
        print(json.dumps({"id": rid, "labels": labels}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
