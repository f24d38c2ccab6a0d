from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from logveil.model import (
    AnnotatedLine,
    AttributeKind,
    COARSE_LABELS,
    DetectionSpan,
    EntitySpan,
    IobLabel,
    IobValidationError,
    LogLine,
    NET_LABELS,
    NetSubKind,
    OUTSIDE,
    Token,
    begin,
    entity_spans,
    inside,
    kind_from_name,
    label_inventory,
    labels_from_entities,
    parent_kind,
    parse_label,
    validate_iob,
)

NET, ID = AttributeKind.NET, AttributeKind.ID


class TestTaxonomy:
    def test_seven_coarse_kinds_with_stable_codes(self):
        assert [k.value for k in AttributeKind] == list(range(7))
        assert [k.name for k in AttributeKind] == [
            "NET", "MAC", "FILEPATH", "ID", "URL", "USERNAME", "CONFIG",
        ]

    def test_three_net_sub_kinds(self):
        assert [k.name for k in NetSubKind] == ["IP", "PORT", "HOSTNAME"]

    def test_parent_kind(self):
        assert parent_kind(NetSubKind.IP) is AttributeKind.NET
        assert parent_kind(AttributeKind.MAC) is AttributeKind.MAC

    def test_kind_from_name(self):
        assert kind_from_name("NET") is AttributeKind.NET
        assert kind_from_name("PORT") is NetSubKind.PORT
        with pytest.raises(ValueError):
            kind_from_name("FOO")


class TestIobLabel:
    def test_text_round_trip_for_every_label(self):
        for lab in COARSE_LABELS + NET_LABELS:
            assert parse_label(lab.text) == lab

    def test_serializations(self):
        assert begin(NET).text == "B-NET"
        assert inside(NetSubKind.HOSTNAME).text == "I-HOSTNAME"
        assert OUTSIDE.text == "O"

    def test_o_cannot_carry_kind(self):
        with pytest.raises(ValueError):
            IobLabel("O", NET)

    def test_b_requires_kind(self):
        with pytest.raises(ValueError):
            IobLabel("B")

    def test_unknown_label_text(self):
        with pytest.raises(ValueError):
            parse_label("B-FOO")
        with pytest.raises(ValueError):
            parse_label("X-NET")

    def test_inventories(self):
        assert len(COARSE_LABELS) == 15
        assert len(NET_LABELS) == 7
        assert COARSE_LABELS[0] == OUTSIDE and NET_LABELS[0] == OUTSIDE


class TestValidateIob:
    def test_valid_sequence(self):
        assert validate_iob([OUTSIDE, begin(NET), inside(NET), OUTSIDE]) == []

    def test_inside_without_begin(self):
        violations = validate_iob([OUTSIDE, inside(NET)])
        assert [v.index for v in violations] == [1]
        assert "without a preceding" in violations[0].reason

    def test_kind_mismatch(self):
        violations = validate_iob([begin(ID), inside(NET)])
        assert [v.index for v in violations] == [1]
        assert "mismatch" in violations[0].reason

    def test_initial_inside(self):
        assert validate_iob([inside(NET)])[0].index == 0

    def test_empty(self):
        assert validate_iob([]) == []


def _tokens(texts):
    out, pos = [], 0
    for t in texts:
        out.append(Token(t, pos, pos + len(t)))
        pos += len(t) + 1
    return tuple(out)


def _ann(texts, labels, raw=None):
    raw = raw if raw is not None else " ".join(texts)
    return AnnotatedLine(LogLine(raw, "t"), _tokens(texts), tuple(labels))


class TestEntitySpans:
    def test_two_entities(self):
        labels = [OUTSIDE, OUTSIDE, begin(NET), OUTSIDE, OUTSIDE, begin(ID)]
        assert entity_spans(labels) == [EntitySpan(NET, 2, 3), EntitySpan(ID, 5, 6)]

    def test_all_outside(self):
        assert entity_spans([OUTSIDE, OUTSIDE]) == []

    def test_begin_restarts_entity(self):
        labels = [begin(NET), inside(NET), begin(NET)]
        assert entity_spans(labels) == [EntitySpan(NET, 0, 2), EntitySpan(NET, 2, 3)]

    def test_rejects_invalid(self):
        with pytest.raises(IobValidationError):
            entity_spans([OUTSIDE, inside(NET)])

    def test_accepts_annotated_line(self):
        ann = _ann(["a", "b"], [begin(ID), inside(ID)])
        assert entity_spans(ann) == [EntitySpan(ID, 0, 2)]


@st.composite
def valid_label_sequences(draw):
    kinds = list(AttributeKind)
    n = draw(st.integers(min_value=0, max_value=12))
    labels: list[IobLabel] = []
    prev = OUTSIDE
    for _ in range(n):
        if prev.tag == "O":
            options = [OUTSIDE] + [begin(k) for k in kinds]
        else:
            options = [OUTSIDE, inside(prev.kind)] + [begin(k) for k in kinds]
        prev = draw(st.sampled_from(options))
        labels.append(prev)
    return labels


class TestRoundTrip:
    @given(valid_label_sequences())
    def test_entities_reexpand_to_original(self, labels):
        spans = entity_spans(labels)
        assert labels_from_entities(len(labels), spans) == tuple(labels)

    @given(valid_label_sequences())
    def test_validate_accepts_generated(self, labels):
        assert validate_iob(labels) == []

    def test_out_of_bounds_entity(self):
        with pytest.raises(ValueError):
            labels_from_entities(2, [EntitySpan(NET, 1, 3)])


class TestTokenAndLine:
    def test_token_invariants(self):
        with pytest.raises(ValueError):
            Token("", 0, 0)
        with pytest.raises(ValueError):
            Token("a b", 0, 3)
        with pytest.raises(ValueError):
            Token("ab", 0, 3)

    def test_logline_requires_dataset(self):
        with pytest.raises(ValueError):
            LogLine("x", "")

    def test_annotated_line_checks_lengths(self):
        with pytest.raises(ValueError):
            _ann(["a", "b"], [OUTSIDE])

    def test_annotated_line_checks_span_text(self):
        tokens = (Token("xy", 0, 2),)
        with pytest.raises(ValueError):
            AnnotatedLine(LogLine("ab", "t"), tokens, (OUTSIDE,))

    def test_annotated_line_rejects_overlap(self):
        tokens = (Token("ab", 0, 2), Token("b", 1, 2))
        with pytest.raises(ValueError):
            AnnotatedLine(LogLine("ab", "t"), tokens, (OUTSIDE, OUTSIDE))

    def test_annotated_line_enforces_iob(self):
        with pytest.raises(IobValidationError):
            _ann(["a"], [inside(NET)])

    def test_detection_span_nonempty(self):
        with pytest.raises(ValueError):
            DetectionSpan(3, 3, NET, "d")

    def test_custom_inventory_order(self):
        inv = label_inventory([NetSubKind.IP])
        assert [l.text for l in inv] == ["O", "B-IP", "I-IP"]
