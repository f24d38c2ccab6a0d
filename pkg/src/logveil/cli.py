"""Command-line interface.

Subcommands: validate, stats, regex-eval, order-exp, train, finetune, tag,
eval, anonymize, kappa.  Every command is reproducible: identical inputs and
seed produce byte-identical reports (no timestamps in any output).

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error,
4 detector error.
"""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path
from typing import Sequence

from . import corpus as corpus_mod
from . import evaluation, regexbank, tagger
from .bridge import BridgeClient, BridgeDetector, BridgeError
from .corpus import CorpusFormatError, Dataset, load_manifest
from .model import AttributeKind, IobValidationError, LogLine, parent_kind
from .regexbank import (
    AnonymizePipeline,
    BEST_PATTERN_IDS,
    PipelineOrder,
    PlaceholderPolicy,
    UnsupportedPatternError,
    builtin_bank,
    load_bank,
    order_experiment,
    sample_orders,
)
from .tagger import TaggerModel, TaggerModelError, TrainConfig, tag_hierarchical

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DETECTOR = 4

COARSE_MODEL_FILE = "coarse.model"
NET_MODEL_FILE = "net.model"


class DetectorError(RuntimeError):
    pass


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# config file: flat "key = value" lines, '#' comments; flags override


def _parse_config_file(path: str) -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, row in enumerate(Path(path).read_text().splitlines(), 1):
        row = row.strip()
        if not row or row.startswith("#"):
            continue
        if "=" not in row:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, _, val = row.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip().strip("\"'")
        if val.lower() in ("true", "false"):
            values[key] = val.lower() == "true"
        else:
            try:
                values[key] = int(val)
            except ValueError:
                values[key] = val
    return values


def _load_patterns(args) -> list[regexbank.RegexPattern]:
    if getattr(args, "bank", None):
        return load_bank(args.bank)
    return builtin_bank()


def _pipeline_ids(args, patterns) -> tuple[str, ...]:
    if getattr(args, "patterns", None):
        ids = tuple(x.strip() for x in args.patterns.split(",") if x.strip())
    elif getattr(args, "bank", None):
        ids = tuple(p.id for p in patterns if p.supported)
    else:
        ids = BEST_PATTERN_IDS
    known = {p.id for p in patterns}
    missing = [i for i in ids if i not in known]
    if missing:
        raise UsageError(f"unknown pattern ids: {', '.join(missing)}")
    return ids


def _load_model_dir(path: str) -> tuple[TaggerModel, TaggerModel | None]:
    root = Path(path)
    coarse_path = root / COARSE_MODEL_FILE
    if not coarse_path.is_file():
        raise DetectorError(f"no {COARSE_MODEL_FILE} under {root}")
    try:
        coarse = tagger.load_model(coarse_path)
        net_path = root / NET_MODEL_FILE
        net = tagger.load_model(net_path) if net_path.is_file() else None
    except TaggerModelError as e:
        raise DetectorError(str(e)) from e
    return coarse, net


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# detectors (shared by eval/anonymize/tag)


class _RegexDetector:
    name = "regex"

    def __init__(self, args):
        patterns = _load_patterns(args)
        ids = _pipeline_ids(args, patterns)
        policy = PlaceholderPolicy()
        try:
            self.pipeline = AnonymizePipeline.from_order(
                PipelineOrder(ids), patterns, policy
            )
        except (UnsupportedPatternError, KeyError) as e:
            raise DetectorError(str(e)) from e
        self.policy = policy

    def anonymize(self, raw: str):
        return self.pipeline.anonymize(raw)

    def detect(self, line: LogLine):
        return self.pipeline.anonymize(line.raw)[1]


class _TaggerDetector:
    name = "native"

    def __init__(self, args):
        self.coarse, self.net = _load_model_dir(args.model)
        self.policy = PlaceholderPolicy()

    def tag(self, line: LogLine):
        if self.net is not None:
            return tag_hierarchical(self.coarse, self.net, line)
        return self.coarse.tag_line(line)

    def detect(self, line: LogLine):
        return tagger.detections(self.tag(line), self.name)

    def anonymize(self, raw: str):
        spans = self.detect(LogLine(raw, "adhoc")) if raw else []
        return _replace_spans(raw, spans, self.policy), spans


class _BridgeWrapper(_TaggerDetector):
    name = "bridge"

    def __init__(self, args):  # noqa: super().__init__ replaced deliberately
        if not args.bridge_cmd:
            raise UsageError("--bridge-cmd is required for the bridge detector")
        try:
            coarse = BridgeClient(shlex.split(args.bridge_cmd))
            net = (
                BridgeClient(shlex.split(args.bridge_net_cmd))
                if args.bridge_net_cmd
                else None
            )
        except (OSError, BridgeError) as e:
            raise DetectorError(f"bridge backend failed: {e}") from e
        self.detector = BridgeDetector(coarse, net)
        self.policy = PlaceholderPolicy()

    def tag(self, line: LogLine):
        try:
            return self.detector.tag_line(line)
        except BridgeError as e:
            raise DetectorError(str(e)) from e


def _replace_spans(raw: str, spans, policy: PlaceholderPolicy) -> str:
    out = raw
    for s in sorted(spans, key=lambda s: s.start, reverse=True):
        out = out[: s.start] + policy.placeholder(s.kind) + out[s.end :]
    return out


def _make_detector(args):
    choice = getattr(args, "detector", "regex")
    if choice == "regex":
        return _RegexDetector(args)
    if choice == "native":
        if not getattr(args, "model", None):
            raise UsageError("--model is required for the native detector")
        return _TaggerDetector(args)
    if choice == "bridge":
        return _BridgeWrapper(args)
    raise UsageError(f"unknown detector {choice!r}")


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    failures = 0
    for path in args.files:
        try:
            violations = corpus_mod.scan_annotated(path)
        except CorpusFormatError as e:
            print(f"INVALID {e}", file=sys.stderr)
            failures += 1
            continue
        for file_line, v in violations:
            print(f"{path}:{file_line}: token {v.index}: {v.reason}", file=sys.stderr)
        failures += bool(violations)
        if not violations:
            print(f"ok {path}")
    return EXIT_VALIDATION if failures else EXIT_OK


def cmd_stats(args) -> int:
    datasets = _load_datasets(args.manifest)
    kinds = list(AttributeKind)
    header = ["dataset", "units", "n", "sensitive%"] + [k.name.lower() + "%" for k in kinds]
    rows = [header]
    payload = []
    for ds in datasets:
        stats = corpus_mod.compute_stats(ds, group_by_template=args.by_template)
        rows.append(
            [ds.id, stats.unit, str(stats.n_units), f"{stats.pct_sensitive:.1f}"]
            + [f"{stats.pct_by_kind[k]:.1f}" for k in kinds]
        )
        payload.append(
            {
                "dataset": ds.id,
                "unit": stats.unit,
                "n_units": stats.n_units,
                "pct_sensitive": stats.pct_sensitive,
                "pct_by_kind": {k.name: v for k, v in stats.pct_by_kind.items()},
            }
        )
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    text = "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows
    ) + "\n"
    if args.json:
        _write(args.json, json.dumps({"schema": 1, "datasets": payload}, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def _load_datasets(manifest: str) -> list[Dataset]:
    root = Path(manifest)
    if root.is_dir() and (root / f"{root.name}.ann.tsv").is_file():
        return [corpus_mod.load_dataset_dir(root)]
    if root.is_file():
        return [corpus_mod.load_annotated(root)]
    return load_manifest(root)


def cmd_regex_eval(args) -> int:
    datasets = _load_datasets(args.manifest)
    patterns = _load_patterns(args)
    lines = [ann for ds in datasets for ann in ds.lines]
    rows = []
    for p in patterns:
        if not p.supported:
            continue
        counts: dict[str, evaluation.Counts] = {}
        for ann in lines:
            spans = regexbank.match_spans(p, ann.line)
            evaluation.merge_counts(
                counts,
                evaluation.score_tokens(ann, spans, mode="category", view=args.view),
            )
        key = parent_kind(p.kind).name if args.view == "parent" else p.kind.name
        cell = counts.get(key, evaluation.Counts())
        rows.append((p, key, cell))

    out_lines = [
        f"{'pattern':<14} {'kind':<9} {'P%':>6} {'R%':>6} {'F1%':>6} {'tp':>6} {'fp':>6} {'fn':>6}"
    ]

    def fmt(v):
        return "     -" if v is None else f"{100 * v:6.1f}"

    for p, key, c in rows:
        out_lines.append(
            f"{p.id:<14} {key:<9} {fmt(c.precision)} {fmt(c.recall)} {fmt(c.f1)}"
            f" {c.tp:>6} {c.fp:>6} {c.fn:>6}"
        )
    unsupported = [p for p in patterns if not p.supported]
    for p in unsupported:
        out_lines.append(f"unsupported {p.id}: {p.unsupported_reason}")
    print("\n".join(out_lines))
    if args.out:
        payload = {
            "schema": 1,
            "view": args.view,
            "patterns": {
                p.id: {
                    "kind": key,
                    "provenance": p.provenance,
                    **evaluation._cell_dict(c),
                }
                for p, key, c in rows
            },
            "unsupported": {p.id: p.unsupported_reason for p in unsupported},
        }
        _write(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_order_exp(args) -> int:
    datasets = _load_datasets(args.manifest)
    patterns = _load_patterns(args)
    ids = _pipeline_ids(args, patterns)
    orders = sample_orders(ids, args.orders, args.seed)
    lines = [ann for ds in datasets for ann in ds.lines]
    report = order_experiment(
        lines,
        orders,
        bank=patterns,
        view=args.view,
        seed=args.seed,
        jobs=args.jobs,
    )
    text_rows = [
        f"{'kind':<10} {'Pmin':>6} {'Pmax':>6} {'Rmin':>6} {'Rmax':>6} {'F1min':>6} {'F1max':>6}"
    ]

    def fmt(v):
        return "     -" if v is None else f"{100 * v:6.1f}"

    for kind in sorted(report.precision, key=evaluation.kind_sort_key):
        p, r, f = report.precision[kind], report.recall[kind], report.f1[kind]
        text_rows.append(
            f"{kind:<10} {fmt(p.min)} {fmt(p.max)} {fmt(r.min)} {fmt(r.max)}"
            f" {fmt(f.min)} {fmt(f.max)}"
        )
    text_rows.append(f"orders: {report.n_orders}  seed: {report.seed}")
    print("\n".join(text_rows))
    if args.out:
        _write(args.out, report.to_json())
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, eval_every=args.eval_every, seed=args.seed
    )


def _split_heldout(lines, frac: float, seed: int):
    import random as _random

    if frac <= 0:
        return list(lines), []
    idx = list(range(len(lines)))
    _random.Random(seed).shuffle(idx)
    n_held = max(1, int(len(lines) * frac)) if len(lines) > 1 else 0
    held = {i for i in idx[:n_held]}
    return (
        [l for i, l in enumerate(lines) if i not in held],
        [l for i, l in enumerate(lines) if i in held],
    )


def cmd_train(args) -> int:
    datasets = _load_datasets(args.manifest)
    lines = [ann for ds in datasets for ann in ds.lines]
    cfg = _train_config(args)
    train_lines, heldout = _split_heldout(lines, args.heldout_frac, args.seed)
    coarse = tagger.train(train_lines, cfg, heldout, labels=None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tagger.save_model(coarse, out / COARSE_MODEL_FILE)
    net_lines, issues = _derive_net(lines)
    meta = {
        "seed": args.seed,
        "epochs": args.epochs,
        "datasets": [ds.id for ds in datasets],
        "lines": len(lines),
        "net_lines": len(net_lines),
        "net_issues": len(issues),
    }
    if net_lines:
        net_train, net_held = _split_heldout(net_lines, args.heldout_frac, args.seed)
        net_model = tagger.train(net_train, cfg, net_held)
        tagger.save_model(net_model, out / NET_MODEL_FILE)
    else:
        print("note: no net-labeled lines; net sub-model not trained")
    (out / "train_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n"
    )
    print(f"trained models written to {out}")
    return EXIT_OK


def _derive_net(lines):
    from .tokenize import derive_net_corpus

    return derive_net_corpus(lines)


def cmd_finetune(args) -> int:
    coarse, net = _load_model_dir(args.model)
    ds = corpus_mod.load_annotated(args.samples)
    samples = list(ds.lines[: args.n]) if args.n else list(ds.lines)
    cfg = _train_config(args)
    tuned = tagger.finetune(coarse, samples, cfg) if samples else coarse
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tagger.save_model(tuned, out / COARSE_MODEL_FILE)
    if net is not None:
        net_samples, _ = _derive_net(samples)
        tuned_net = tagger.finetune(net, net_samples, cfg) if net_samples else net
        tagger.save_model(tuned_net, out / NET_MODEL_FILE)
    print(f"fine-tuned on {len(samples)} lines -> {out}")
    return EXIT_OK


def cmd_tag(args) -> int:
    detector = _make_detector(args)
    if not hasattr(detector, "tag"):
        raise UsageError("tag requires the native or bridge detector")
    lines = corpus_mod.load_raw(args.input)
    annotated = [detector.tag(line) for line in lines]
    corpus_mod.save_annotated(annotated, args.out)
    print(f"tagged {len(annotated)} lines -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    datasets = _load_datasets(args.manifest)
    detector = _make_detector(args)
    per_dataset = {}
    for ds in datasets:
        counts: dict[str, evaluation.Counts] = {}
        for ann in ds.lines:
            spans = detector.detect(ann.line)
            evaluation.merge_counts(
                counts,
                evaluation.score_tokens(
                    ann, spans, mode=args.mode, view=args.view
                ),
            )
        per_dataset[ds.id] = evaluation.MetricReport(counts, {"dataset": ds.id})
    overall = evaluation.aggregate(
        per_dataset.values(),
        {
            "detector": detector.name,
            "mode": args.mode,
            "view": args.view,
            "seed": args.seed,
        },
    )
    for ds_id in sorted(per_dataset):
        print(evaluation.render_report(per_dataset[ds_id], title=f"== {ds_id}"))
    print(evaluation.render_report(overall, title="== overall"))
    if args.out:
        payload = {
            "schema": 1,
            "datasets": {
                ds_id: evaluation.report_to_dict(rep)
                for ds_id, rep in sorted(per_dataset.items())
            },
            "overall": evaluation.report_to_dict(overall),
        }
        _write(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_anonymize(args) -> int:
    raw_text = Path(args.input).read_text(encoding=corpus_mod.ENCODING)
    trailing = raw_text.endswith("\n")
    body = raw_text[:-1] if trailing else raw_text
    rows = body.split("\n") if body else []
    detector = _make_detector(args)
    out_rows: list[str] = []
    audit_rows: list[str] = []
    for i, raw in enumerate(rows):
        if hasattr(detector, "pipeline"):
            out, spans = detector.pipeline.anonymize(raw)
        else:
            spans = detector.detect(LogLine(raw, "input", i)) if raw else []
            out = _replace_spans(raw, spans, detector.policy)
        out_rows.append(out)
        for s in sorted(spans, key=lambda s: s.start):
            audit_rows.append(
                f"{i}\t{s.start}\t{s.end}\t{s.kind.name}\t{s.detector_id}"
            )
    out_text = "\n".join(out_rows) + ("\n" if trailing else "")
    Path(args.out).write_text(out_text, encoding=corpus_mod.ENCODING)
    if not args.no_audit:
        audit_path = args.audit or (args.out + ".audit.tsv")
        header = "# line\tstart\tend\tkind\tdetector\n"
        Path(audit_path).write_text(
            header + "".join(r + "\n" for r in audit_rows), encoding="utf-8"
        )
    print(f"anonymized {len(rows)} lines -> {args.out}")
    return EXIT_OK


def cmd_kappa(args) -> int:
    a = corpus_mod.load_annotated(args.file_a)
    b = corpus_mod.load_annotated(args.file_b)
    labels_a = [l.text for ann in a.lines for l in ann.labels]
    labels_b = [l.text for ann in b.lines for l in ann.labels]
    if len(labels_a) != len(labels_b):
        print(
            f"token counts differ: {len(labels_a)} vs {len(labels_b)}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    report = evaluation.cohen_kappa(labels_a, labels_b)
    print(f"kappa    {report.kappa:.4f}")
    print(f"accuracy {report.accuracy:.4f}")
    if report.degenerate:
        print("note: chance agreement is 1; kappa degenerate")
    disagreements = sorted(
        ((n, k) for k, n in report.confusion.items() if k[0] != k[1]), reverse=True
    )
    for n, (la, lb) in disagreements[:10]:
        print(f"  {la} vs {lb}: {n}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="RNG seed (recorded in reports)")


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", choices=("regex", "native", "bridge"), default="regex")
    p.add_argument("--model", help="model directory (native detector)")
    p.add_argument("--bank", help="pattern registry file (regex detector)")
    p.add_argument("--patterns", help="comma-separated pattern ids for the pipeline")
    p.add_argument("--bridge-cmd", help="backend command line (bridge detector)")
    p.add_argument("--bridge-net-cmd", help="net-mode backend command line")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    ap = argparse.ArgumentParser(
        prog="logveil",
        description="Detect and anonymize sensitive attributes in software logs.",
    )
    ap.add_argument("--config", help="flat key = value config file; flags override")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check annotated files for IOB violations")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="dataset sensitivity statistics")
    p.add_argument("manifest")
    p.add_argument("--by-template", action="store_true")
    p.add_argument("--json", help="also write a JSON report here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("regex-eval", help="score every bank pattern individually")
    p.add_argument("manifest")
    p.add_argument("--bank")
    p.add_argument("--view", choices=("parent", "exact", "split"), default="split")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_regex_eval)

    p = sub.add_parser("order-exp", help="pipeline-order sensitivity experiment")
    p.add_argument("manifest")
    p.add_argument("--bank")
    p.add_argument("--patterns")
    p.add_argument("--orders", type=int, default=500)
    p.add_argument("--view", choices=("parent", "exact", "split"), default="split")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="JSON report path")
    _add_seed(p)
    p.set_defaults(func=cmd_order_exp)

    p = sub.add_parser("train", help="train coarse + net taggers from a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--eval-every", type=int, default=300)
    p.add_argument("--heldout-frac", type=float, default=0.1)
    _add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="continue training on target samples")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True, help="annotated TSV file")
    p.add_argument("--n", type=int, default=0, help="use only the first N lines")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--eval-every", type=int, default=300)
    _add_seed(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("tag", help="annotate a raw log file with a detector")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _add_detector_flags(p)
    p.set_defaults(func=cmd_tag, detector="native")

    p = sub.add_parser("eval", help="score a detector against annotations")
    p.add_argument("manifest")
    p.add_argument("--mode", choices=("detection", "category"), default="category")
    p.add_argument("--view", choices=("parent", "exact", "split"), default="parent")
    p.add_argument("--out", help="JSON report path")
    _add_detector_flags(p)
    _add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("anonymize", help="rewrite a log file with placeholders")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", help="audit sidecar path (default <out>.audit.tsv)")
    p.add_argument("--no-audit", action="store_true")
    _add_detector_flags(p)
    _add_seed(p)
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("kappa", help="inter-annotator agreement of two files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.set_defaults(func=cmd_kappa)

    return ap, dict(sub.choices)


def main(argv: Sequence[str] | None = None) -> int:
    parser, registry = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        at = argv.index("--config")
        try:
            defaults = _parse_config_file(argv[at + 1])
        except (IndexError, OSError) as e:
            print(f"error: cannot read config file: {e}", file=sys.stderr)
            return EXIT_IO
        except UsageError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        for p in registry.values():
            known = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, IobValidationError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DetectorError, BridgeError, TaggerModelError, UnsupportedPatternError) as e:
        print(f"detector error: {e}", file=sys.stderr)
        return EXIT_DETECTOR
    except FileNotFoundError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
