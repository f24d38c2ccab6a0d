"""
Learned detection end to end
============================

Train the two-level tagger on synthetic logs with known labels, inspect the
hierarchy on a concatenated ip:port token, and anonymize a few lines with the
learned detector instead of regular expressions.
"""
from logveil import synthetic
from logveil.evaluation import Counts, merge_counts, score_tokens
from logveil.regexbank import PlaceholderPolicy
from logveil.tagger import TrainConfig, detections, tag_hierarchical, train
from logveil.tokenize import derive_net_corpus

corpus = synthetic.mixed_corpus(3000, seed=7)
train_lines, heldout = corpus[:2600], corpus[2600:]

cfg = TrainConfig(epochs=2, eval_every=300, seed=0)
coarse = train(train_lines, cfg, heldout=heldout[:200])
net_lines, _ = derive_net_corpus(train_lines)
net = train(net_lines, cfg)

counts: dict[str, Counts] = {}
for ann in heldout:
    merge_counts(counts, score_tokens(ann, coarse.decode(ann.tokens), mode="detection"))
cell = counts["SENSITIVE"]
print(f"held-out detection: P={cell.precision:.3f} R={cell.recall:.3f} F1={cell.f1:.3f}")

line = "BLOCK* ask 10.250.18.114:50010 to delete blk_-5140072410813878235"
ann = tag_hierarchical(coarse, net, line)
print("\ncoarse labels:", [l.text for l in ann.labels])
print("net sub-kinds:", ann.net_parts)

policy = PlaceholderPolicy()
for raw in (
    line,
    "Invalid user webmaster from 173.234.31.186",
    "retry 8 scheduled in 40 ms",
):
    spans = detections(tag_hierarchical(coarse, net, raw))
    out = raw
    for s in sorted(spans, key=lambda s: s.start, reverse=True):
        out = out[: s.start] + policy.placeholder(s.kind) + out[s.end :]
    print(f"\n  {raw}\n  {out}")
