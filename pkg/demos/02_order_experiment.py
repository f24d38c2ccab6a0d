"""
Why pattern order matters
=========================

Anonymization pipelines run their patterns sequentially, and an early pattern
can mask text a later one needed.  This demo builds a small corpus where a
loose ID pattern overlaps IP addresses, samples 200 random orderings of the
default eight-pattern pipeline, and prints the per-kind score envelopes.
"""
from logveil.model import AnnotatedLine, AttributeKind, LogLine, NetSubKind, OUTSIDE, begin
from logveil.regexbank import (
    BEST_PATTERN_IDS,
    PipelineOrder,
    AnonymizePipeline,
    builtin_bank,
    order_experiment,
    sample_orders,
)
from logveil.tokenize import tokenize


def annotated(raw, marks):
    tokens = tokenize(raw)
    labels = [OUTSIDE] * len(tokens)
    side = [None] * len(tokens)
    for i, (kind, sub) in marks.items():
        labels[i] = begin(kind)
        side[i] = sub
    return AnnotatedLine(
        LogLine(raw, "demo"), tokens, tuple(labels),
        tuple(side) if any(side) else None,
    )


corpus = []
for i in range(24):
    ip = f"10.0.{i}.{i + 1}"
    if i % 2:
        corpus.append(
            annotated(f"session uid {ip} opened", {2: (AttributeKind.NET, (NetSubKind.IP,))})
        )
    else:
        corpus.append(
            annotated(f"uid {4000 + i} read /srv/data/f{i}", {
                1: (AttributeKind.ID, None),
                3: (AttributeKind.FILEPATH, None),
            })
        )

# The interference in one line: "uid 10.0.3.4" - whoever runs first wins.
by_id = {p.id: p for p in builtin_bank()}
line = "session uid 10.0.3.4 opened"
for order in (("id-04", "ip-08"), ("ip-08", "id-04")):
    pipe = AnonymizePipeline.from_order(PipelineOrder(order), by_id)
    print(f"{' -> '.join(order):<22} {pipe.anonymize(line)[0]}")

orders = sample_orders(list(BEST_PATTERN_IDS), 200, seed=2024)
report = order_experiment(corpus, orders, view="split", seed=2024)

print(f"\nenvelopes over {report.n_orders} sampled orders (seed {report.seed}):")
print(f"{'kind':<10} {'F1 min':>8} {'F1 max':>8}")
for kind in sorted(report.f1):
    env = report.f1[kind]
    fmt = lambda v: "   -" if v is None else f"{100 * v:7.1f}"
    print(f"{kind:<10} {fmt(env.min):>8} {fmt(env.max):>8}")
