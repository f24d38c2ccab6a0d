from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, strategies as st

from naive_oracle import prf, score_naive
from logveil.corpus import Dataset
from logveil.evaluation import (
    Counts,
    FoldError,
    MetricReport,
    aggregate,
    cohen_kappa,
    finetune_experiment,
    kfold,
    kfold_plan,
    loocv,
    loocv_plan,
    render_report,
    report_to_json,
    score_tokens,
)
from logveil.model import (
    AnnotatedLine,
    AttributeKind,
    DetectionSpan,
    LogLine,
    NetSubKind,
    OUTSIDE,
    begin,
    inside,
)
from logveil.tokenize import tokenize

NET, ID, URL = AttributeKind.NET, AttributeKind.ID, AttributeKind.URL
IP, PORT = NetSubKind.IP, NetSubKind.PORT


def make_line(raw, marks=None, subs=None):
    tokens = tokenize(raw)
    labels = [OUTSIDE] * len(tokens)
    side = [None] * len(tokens)
    for i, kind in (marks or {}).items():
        labels[i] = kind if not isinstance(kind, AttributeKind) else begin(kind)
    for i, s in (subs or {}).items():
        side[i] = s
    return AnnotatedLine(
        LogLine(raw, "t"),
        tokens,
        tuple(labels),
        tuple(side) if any(s is not None for s in side) else None,
    )


def det(start, end, kind, det_id="d"):
    return DetectionSpan(start, end, kind, det_id)


class TestScoreTokens:
    def test_exact_overlap_is_tp(self):
        ann = make_line("a b c net-token x", {3: NET})
        tok = ann.tokens[3]
        counts = score_tokens(ann, [det(tok.start, tok.end, NET)])
        assert (counts["NET"].tp, counts["NET"].fp, counts["NET"].fn) == (1, 0, 0)

    def test_prediction_on_outside_token_is_fp(self):
        ann = make_line("plain words here")
        counts = score_tokens(ann, [det(0, 5, NET)])
        assert counts["NET"].fp == 1 and counts["NET"].tp == 0

    def test_partial_overlap_counts(self):
        # IP regex finding only the address inside an ip:port token
        raw = "ask 10.250.18.114:50010 now"
        ann = make_line(raw, {1: NET}, subs={1: (IP, PORT)})
        start = raw.index("10.250")
        counts = score_tokens(ann, [det(start, start + len("10.250.18.114"), IP)])
        assert counts["NET"].tp == 1  # parent view: IP prediction matches NET gold

    def test_missed_gold_is_fn(self):
        ann = make_line("x 1.2.3.4", {1: NET})
        counts = score_tokens(ann, [])
        assert counts["NET"].fn == 1

    def test_fp_counted_per_token(self):
        # one match spanning two O tokens -> fp = 2
        ann = make_line("alpha beta")
        counts = score_tokens(ann, [det(0, 10, ID)])
        assert counts["ID"].fp == 2

    def test_two_same_kind_hits_on_one_token_count_once(self):
        ann = make_line("alpha")
        counts = score_tokens(ann, [det(0, 2, ID), det(3, 5, ID)])
        assert counts["ID"].fp == 1

    def test_cross_kind_prediction(self):
        ann = make_line("x 1.2.3.4", {1: NET})
        counts = score_tokens(ann, [det(2, 9, URL)])
        assert counts["URL"].fp == 1
        assert counts["NET"].fn == 1

    def test_detection_mode_collapses_kinds(self):
        ann = make_line("x 1.2.3.4 blk_1", {1: NET, 2: ID})
        counts = score_tokens(
            ann, [det(2, 9, URL), det(10, 15, ID)], mode="detection"
        )
        c = counts["SENSITIVE"]
        assert (c.tp, c.fp, c.fn) == (2, 0, 0)

    def test_split_view_scores_sub_kinds(self):
        raw = "ask 10.250.18.114:50010 now"
        ann = make_line(raw, {1: NET}, subs={1: (IP, PORT)})
        start = raw.index("10.250")
        counts = score_tokens(
            ann, [det(start, start + 13, IP)], view="split"
        )
        assert counts["IP"].tp == 1
        assert counts["PORT"].fn == 1

    def test_exact_view_keeps_sub_kinds_separate(self):
        raw = "ask 10.0.0.1 now"
        tokens = tokenize(raw)
        ann = AnnotatedLine(
            LogLine(raw, "t"), tokens, (OUTSIDE, begin(IP), OUTSIDE)
        )
        counts = score_tokens(ann, [det(4, 12, NET)], view="exact")
        assert counts["IP"].fn == 1 and counts["NET"].fp == 1

    def test_labels_accepted_as_predictions(self):
        ann = make_line("x blk_1 y", {1: ID})
        pred_labels = (OUTSIDE, begin(ID), OUTSIDE)
        counts = score_tokens(ann, pred_labels)
        assert counts["ID"].tp == 1

    def test_multi_token_entity_labels(self):
        ann = make_line("set limit 4096 now", {1: ID})
        labels = (OUTSIDE, begin(ID), inside(ID), OUTSIDE)
        counts = score_tokens(ann, labels)
        # predicted entity spans tokens 1-2; token 1 tp, token 2 fp
        assert counts["ID"].tp == 1 and counts["ID"].fp == 1

    def test_out_of_bounds_prediction(self):
        ann = make_line("ab")
        with pytest.raises(ValueError):
            score_tokens(ann, [det(0, 99, ID)])

    def test_match_granularity(self):
        ann = make_line("alpha beta 1.2.3.4", {2: NET})
        preds = [det(0, 10, ID), det(11, 18, NET)]
        counts = score_tokens(ann, preds, granularity="match")
        assert counts["ID"].fp == 1  # one match, not two tokens
        assert counts["NET"].tp == 1

    def test_randomized_equivalence_with_naive_oracle(self):
        rng = random.Random(99)
        kinds = list(AttributeKind) + list(NetSubKind)
        for _ in range(300):
            n_tok = rng.randint(1, 8)
            words = []
            marks, subs = {}, {}
            for i in range(n_tok):
                words.append("tok" + str(rng.randint(0, 20)))
                r = rng.random()
                if r < 0.3:
                    marks[i] = NET
                    if rng.random() < 0.7:
                        subs[i] = (IP,)
                elif r < 0.5:
                    marks[i] = rng.choice(
                        [AttributeKind.ID, AttributeKind.URL, AttributeKind.MAC]
                    )
            ann = make_line(" ".join(words), marks, subs if subs else None)
            n = len(ann.line.raw)
            preds = []
            for _ in range(rng.randint(0, 6)):
                a = rng.randrange(n)
                b = min(n, a + rng.randint(1, 8))
                if a < b:
                    preds.append(det(a, b, rng.choice(kinds), "f"))
            for mode in ("category", "detection"):
                for view in ("parent", "split", "exact"):
                    got = score_tokens(ann, preds, mode=mode, view=view)
                    want = score_naive(ann, preds, mode=mode, view=view) if view != "exact" else None
                    if want is None:
                        continue
                    got_t = {k: (c.tp, c.fp, c.fn) for k, c in got.items()}
                    assert got_t == want, (mode, view, ann.line.raw)


class TestCountsAndAggregate:
    def test_prf_derivations(self):
        c = Counts(2, 1, 1)
        assert c.precision == pytest.approx(2 / 3)
        assert c.recall == pytest.approx(2 / 3)
        assert c.f1 == pytest.approx(2 / 3)
        assert c.support == 3

    def test_undefined_cells(self):
        assert Counts(0, 0, 0).precision is None
        assert Counts(0, 0, 1).precision is None
        assert Counts(0, 0, 1).recall == 0.0
        assert Counts(0, 1, 0).recall is None
        assert Counts(0, 1, 1).f1 == 0.0

    def test_f1_zero_iff_tp_zero(self):
        assert Counts(0, 3, 4).f1 == 0.0
        assert Counts(1, 100, 100).f1 > 0.0

    def test_paper_style_micro_aggregation(self):
        rep = aggregate([{"X": Counts(1, 0, 1)}, {"X": Counts(1, 1, 0)}])
        c = rep.overall
        assert c.precision == pytest.approx(2 / 3)
        assert c.recall == pytest.approx(2 / 3)
        assert c.f1 == pytest.approx(2 / 3)

    def test_singleton_unchanged(self):
        rep = aggregate([{"A": Counts(3, 1, 2)}])
        assert (rep.per_kind["A"].tp, rep.per_kind["A"].fp, rep.per_kind["A"].fn) == (3, 1, 2)

    def test_empty_is_all_undefined(self):
        rep = aggregate([])
        assert rep.per_kind == {}
        assert rep.overall.precision is None

    @given(
        st.lists(
            st.dictionaries(
                st.sampled_from(["A", "B", "C"]),
                st.builds(Counts, st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)),
            ),
            max_size=6,
        ),
        st.randoms(),
    )
    def test_permutation_invariant_and_associative(self, reports, rnd):
        base = aggregate(reports)
        shuffled = list(reports)
        rnd.shuffle(shuffled)
        perm = aggregate(shuffled)
        assert {k: (c.tp, c.fp, c.fn) for k, c in base.per_kind.items()} == {
            k: (c.tp, c.fp, c.fn) for k, c in perm.per_kind.items()
        }
        mid = len(reports) // 2
        two_step = aggregate([aggregate(reports[:mid]), aggregate(reports[mid:])])
        assert {k: (c.tp, c.fp, c.fn) for k, c in base.per_kind.items()} == {
            k: (c.tp, c.fp, c.fn) for k, c in two_step.per_kind.items()
        }


def _toy_datasets(n=3, sensitive=True):
    out = []
    for i in range(n):
        raw = f"item 10.0.0.{i + 1} ok" if sensitive else f"item {i} ok"
        marks = {1: NET} if sensitive else {}
        line = make_line(raw, marks)
        line = AnnotatedLine(
            LogLine(raw, f"ds{i}"), line.tokens, line.labels, line.net_parts
        )
        out.append(Dataset(f"ds{i}", (line,)))
    return out


class TestCrossValidation:
    def test_loocv_each_dataset_tested_once(self):
        datasets = _toy_datasets(3)
        trained_on = []

        def trainer(train_sets):
            trained_on.append(sorted(ds.id for ds in train_sets))
            return "model"

        def scorer(model, ds):
            return {"NET": Counts(1, 0, 0)}

        per_ds, overall = loocv(datasets, trainer, scorer)
        assert sorted(per_ds) == ["ds0", "ds1", "ds2"]
        assert trained_on == [["ds1", "ds2"], ["ds0", "ds2"], ["ds0", "ds1"]]
        assert overall.per_kind["NET"].tp == 3

    def test_overall_equals_fold_sum(self):
        datasets = _toy_datasets(4)
        per_ds, overall = loocv(
            datasets, lambda t: None, lambda m, ds: {"NET": Counts(2, 1, 1)}
        )
        assert overall.per_kind["NET"].tp == sum(
            rep.per_kind["NET"].tp for rep in per_ds.values()
        )

    def test_loocv_needs_two(self):
        with pytest.raises(ValueError):
            loocv(_toy_datasets(1), lambda t: None, lambda m, d: {})

    def test_trainer_failure_carries_fold(self):
        datasets = _toy_datasets(2)

        def trainer(train_sets):
            raise RuntimeError("boom")

        with pytest.raises(FoldError) as e:
            loocv(datasets, trainer, lambda m, d: {})
        assert e.value.fold in ("ds0", "ds1")

    def test_kfold_16_into_4(self):
        plan = kfold_plan([f"d{i}" for i in range(16)], 4, seed=1)
        assert len(plan.folds) == 4
        for train_ids, test_ids in plan.folds:
            assert len(train_ids) == 12 and len(test_ids) == 4
        tested = [t for _, test in plan.folds for t in test]
        assert sorted(tested) == sorted(f"d{i}" for i in range(16))

    def test_kfold_equal_to_loocv_when_k_is_n(self):
        ids = ["a", "b", "c"]
        plan = kfold_plan(ids, 3, seed=0)
        assert sorted(len(t) for _, t in plan.folds) == [1, 1, 1]

    def test_kfold_seeded_identical(self):
        ids = [f"d{i}" for i in range(10)]
        assert kfold_plan(ids, 4, seed=5) == kfold_plan(ids, 4, seed=5)
        assert kfold_plan(ids, 4, seed=5) != kfold_plan(ids, 4, seed=6)

    def test_kfold_k_too_large(self):
        with pytest.raises(ValueError):
            kfold(_toy_datasets(3), 4, 0, lambda t: None, lambda m, d: {})

    def test_plan_rejects_overlap(self):
        with pytest.raises(ValueError):
            loocv_plan(["a", "a"])


class TestFinetuneExperiment:
    def _datasets(self, n=4, lines=160):
        out = []
        for i in range(n):
            anns = []
            for j in range(lines):
                raw = f"blk {j} from 10.1.{i}.{j % 250 + 1}"
                line = make_line(raw, {3: NET})
                anns.append(
                    AnnotatedLine(
                        LogLine(raw, f"ds{i}", j), line.tokens, line.labels
                    )
                )
            out.append(Dataset(f"ds{i}", tuple(anns)))
        return out

    def test_shape_and_size_zero(self):
        datasets = self._datasets()
        base_models = {ds.id: f"base-{ds.id}" for ds in datasets}
        calls = []

        def finetuner(model, lines):
            calls.append((model, len(lines)))
            return (model, len(lines))

        def scorer(model, lines):
            boost = 0 if isinstance(model, str) else model[1]
            return {"NET": Counts(boost, 0, len(lines))}

        table = finetune_experiment(
            base_models, datasets, [0, 20, 50], finetuner, scorer
        )
        assert len(table.cells) == 12
        assert table.skipped == []
        # size 0 used the base model untouched
        for ds in datasets:
            assert table.cells[(ds.id, 0)].per_kind["NET"].tp == 0
            assert table.cells[(ds.id, 20)].per_kind["NET"].tp == 20
        assert all(n == 20 or n == 50 for _, n in calls)
        assert table.overall[50].per_kind["NET"].tp == 200

    def test_insufficient_dataset_skipped_with_notice(self):
        datasets = self._datasets(2, lines=160)
        plain = [make_line(f"noop {i}") for i in range(30)]
        plain = [
            AnnotatedLine(LogLine(f"noop {i}", "empty", i), l.tokens, l.labels)
            for i, l in enumerate(plain)
        ]
        datasets.append(Dataset("empty", tuple(plain)))
        table = finetune_experiment(
            {ds.id: "m" for ds in datasets},
            datasets,
            [20],
            lambda m, l: m,
            lambda m, l: {"NET": Counts(1, 0, 0)},
        )
        assert [ds for ds, _ in table.skipped] == ["empty"]
        assert ("empty", 20) not in table.cells


class TestCohenKappa:
    def test_identical(self):
        rep = cohen_kappa(["O", "NET", "O"], ["O", "NET", "O"])
        assert rep.kappa == 1.0 and rep.accuracy == 1.0

    def test_hand_computed_example(self):
        rep = cohen_kappa(["O", "O", "NET", "NET"], ["O", "NET", "NET", "NET"])
        assert rep.accuracy == pytest.approx(0.75)
        assert rep.kappa == pytest.approx(0.5, abs=1e-12)

    def test_balanced_total_disagreement(self):
        rep = cohen_kappa(["A", "B"], ["B", "A"])
        assert rep.kappa == pytest.approx(-1.0, abs=1e-12)

    def test_symmetry(self):
        a = ["O", "X", "Y", "O", "X"]
        b = ["X", "X", "O", "O", "Y"]
        assert cohen_kappa(a, b).kappa == pytest.approx(cohen_kappa(b, a).kappa)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cohen_kappa(["O"], ["O", "O"])

    def test_empty(self):
        with pytest.raises(ValueError):
            cohen_kappa([], [])

    def test_degenerate_chance_agreement(self):
        rep = cohen_kappa(["O", "O"], ["O", "O"])
        assert rep.degenerate and rep.kappa == 1.0

    def test_confusion_matrix(self):
        rep = cohen_kappa(["A", "A", "B"], ["A", "B", "B"])
        assert rep.confusion == {("A", "A"): 1, ("A", "B"): 1, ("B", "B"): 1}

    @given(
        st.lists(st.sampled_from(["O", "X", "Y"]), min_size=1, max_size=30),
        st.randoms(),
    )
    def test_range_bounds(self, a, rnd):
        b = list(a)
        rnd.shuffle(b)
        rep = cohen_kappa(a, b)
        assert -1.0 - 1e-9 <= rep.kappa <= 1.0 + 1e-9
        assert 0.0 <= rep.accuracy <= 1.0


class TestReportOutput:
    def test_json_has_null_for_undefined(self):
        rep = MetricReport({"URL": Counts(0, 0, 0)}, {"seed": 1})
        payload = json.loads(report_to_json(rep))
        assert payload["kinds"]["URL"]["precision"] is None
        assert payload["meta"]["seed"] == 1

    def test_json_deterministic(self):
        rep = MetricReport({"B": Counts(1, 2, 3), "A": Counts(4, 5, 6)}, {"s": 0})
        assert report_to_json(rep) == report_to_json(
            MetricReport({"A": Counts(4, 5, 6), "B": Counts(1, 2, 3)}, {"s": 0})
        )

    def test_render_uses_dash_for_undefined(self):
        rep = MetricReport({"URL": Counts(0, 0, 0)})
        text = render_report(rep)
        assert "-" in text and "URL" in text

    def test_prf_helper_agrees(self):
        c = Counts(3, 1, 2)
        assert prf(3, 1, 2) == (c.precision, c.recall, c.f1)
