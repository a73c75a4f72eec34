import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import legal_bigram, legal_sequence, random_annotation, tokens_for
from regspan.exceptions import (
    DanglingContinuation,
    DecodeError,
    DoubleTail,
    IllegalDiscontiguity,
    InterleavingError,
    InvalidSpan,
    LengthMismatch,
    OrphanTail,
    OverlapError,
    UncoveredToken,
    UnknownLabel,
)
from regspan.spans import (
    DEFAULT_TAGSET,
    REPAIR,
    RawSpan,
    SentenceAnnotation,
    SpanCategory,
    TagLabel,
    TagSequence,
    TagsetConfig,
    TokenSpan,
    decode_tags,
    encode_tags,
    lint_gold,
)

FOOTPATH = ["a", "paved", "(", "or", "equivalent", ")", "footpath"]
FOOTPATH_TAGS = ["BH-obj", "IH-obj", "BH-dis", "BH-dis", "BH-func", "BH-dis", "BD-obj"]


def footpath():
    spans = (
        TokenSpan("Object", (0, 2), (6, 7)),
        TokenSpan("Discourse", (2, 3)),
        TokenSpan("Discourse", (3, 4)),
        TokenSpan("Functional", (4, 5)),
        TokenSpan("Discourse", (5, 6)),
    )
    return SentenceAnnotation("fp", tokens_for(FOOTPATH), spans)


def seq(names, sid=None):
    return TagSequence(sid, tuple(TagLabel.parse(n) for n in names))


# ---------------------------------------------------------------- tagset

def test_default_tagset_has_twelve_labels_in_table_order():
    assert DEFAULT_TAGSET.label_names == (
        "BH-obj", "IH-obj", "BD-obj", "ID-obj", "BH-act", "IH-act", "BD-act", "ID-act",
        "BH-dis", "IH-dis", "BH-func", "IH-func",
    )


def test_extended_tagset_has_sixteen_labels():
    assert len(TagsetConfig.extended()) == 16


def test_exactly_four_categories():
    assert {c.value for c in SpanCategory} == {"Object", "Action", "Discourse", "Functional"}


@pytest.mark.parametrize("name", ["object", "OBJECT", "obj", "Object"])
def test_category_parse_is_case_insensitive(name):
    assert SpanCategory.parse(name) is SpanCategory.OBJECT


def test_unknown_label_rejected():
    with pytest.raises(UnknownLabel):
        TagLabel.parse("BX-obj")


def test_tagset_round_trips_through_dict():
    ts = TagsetConfig.extended()
    assert TagsetConfig.from_dict(ts.to_dict()) == ts


def test_mask_matches_rules_for_every_bigram():
    ts = DEFAULT_TAGSET
    names = ts.label_names
    mask = ts.transition_mask
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            assert mask[i, j] == legal_bigram(a, b), (a, b)
        assert mask[ts.start, i] == legal_sequence([a])
        assert mask[i, ts.stop]
    assert not mask[ts.start, ts.stop]


def test_mask_is_read_only():
    with pytest.raises(ValueError):
        DEFAULT_TAGSET.transition_mask[0, 0] = False


# ---------------------------------------------------------------- encode

def test_encode_footpath():
    assert encode_tags(footpath()).names == FOOTPATH_TAGS


def test_encode_single_punctuation_token():
    a = SentenceAnnotation("p", tokens_for(["."]), (TokenSpan("Discourse", (0, 1)),))
    assert encode_tags(a).names == ["BH-dis"]


def test_encode_rejects_interleaving():
    spans = (TokenSpan("Object", (0, 1), (3, 4)), TokenSpan("Object", (2, 3)),
             TokenSpan("Discourse", (1, 2)))
    a = SentenceAnnotation("i", tokens_for(list("abcd")), spans)
    with pytest.raises(InterleavingError):
        encode_tags(a)


def test_encode_rejects_overlap():
    spans = (TokenSpan("Object", (0, 2)), TokenSpan("Discourse", (1, 2)))
    with pytest.raises(OverlapError):
        encode_tags(SentenceAnnotation("o", tokens_for(["a", "b"]), spans))


def test_encode_rejects_discontiguous_discourse_by_default():
    spans = (TokenSpan("Discourse", (0, 1), (2, 3)), TokenSpan("Object", (1, 2)))
    a = SentenceAnnotation("d", tokens_for(["a", "b", "c"]), spans)
    with pytest.raises(IllegalDiscontiguity):
        encode_tags(a)
    assert encode_tags(a, TagsetConfig.extended()).names == ["BH-dis", "BH-obj", "BD-dis"]


def test_encode_rejects_out_of_range_span():
    a = SentenceAnnotation("r", tokens_for(["a"]), (TokenSpan("Object", (0, 2)),))
    with pytest.raises(LengthMismatch):
        encode_tags(a)


def test_encode_rejects_uncovered_token():
    a = SentenceAnnotation("u", tokens_for(["a", "b"]), (TokenSpan("Object", (0, 1)),))
    with pytest.raises(UncoveredToken):
        encode_tags(a)


def test_token_span_rejects_touching_tail():
    with pytest.raises(InvalidSpan):
        TokenSpan("Object", (0, 2), (2, 3))


def test_touching_segments_merge_with_warning(caplog):
    span = TokenSpan.from_segments("Object", [(0, 2), (2, 3)])
    assert span.head == (0, 3) and span.tail is None
    assert "merging touching segments" in caplog.text


# ---------------------------------------------------------------- decode

def test_decode_footpath_inverts_encode():
    decoded = decode_tags(seq(FOOTPATH_TAGS))
    assert {s.key for s in decoded.spans} == footpath().span_set()
    assert decoded.repairs == ()


def test_repair_stray_ih():
    decoded = decode_tags(seq(["IH-obj", "BH-dis"]), mode=REPAIR)
    assert [(s.category.short, s.head, s.tail) for s in decoded.spans] == [
        ("obj", (0, 1), None), ("dis", (1, 2), None)]
    assert decoded.repairs == ("IH→BH at 0",)


def test_strict_orphan_tail():
    with pytest.raises(OrphanTail):
        decode_tags(seq(["BD-obj"]))


def test_strict_dangling_continuation():
    with pytest.raises(DanglingContinuation):
        decode_tags(seq(["BH-dis", "IH-obj"]))


def test_strict_double_tail():
    with pytest.raises(DoubleTail):
        decode_tags(seq(["BH-obj", "BH-dis", "BD-obj", "BH-dis", "BD-obj"]))


def test_repair_double_tail_starts_new_span():
    decoded = decode_tags(seq(["BH-obj", "BH-dis", "BD-obj", "BH-dis", "BD-obj"]), mode=REPAIR)
    objs = [s for s in decoded.spans if s.category is SpanCategory.OBJECT]
    assert [(s.head, s.tail) for s in objs] == [((0, 1), (2, 3)), ((4, 5), None)]
    assert decoded.repairs == ("BD→BH at 4",)


def test_repair_id_continues_tail_run():
    decoded = decode_tags(seq(["BH-obj", "BH-dis", "BD-obj", "ID-obj"]), mode=REPAIR)
    assert decoded.repairs == ()
    assert decoded.spans[0].tail == (2, 4)


def test_tail_attaches_to_latest_open_head():
    names = ["BH-obj", "BH-dis", "BD-obj", "BH-obj", "BH-dis", "BD-obj"]
    spans = decode_tags(seq(names)).spans
    objs = [(s.head, s.tail) for s in spans if s.category is SpanCategory.OBJECT]
    assert objs == [((0, 1), (2, 3)), ((3, 4), (5, 6))]


# ---------------------------------------------------------------- lint

def raw(spans, n=6):
    return SentenceAnnotation("lint", tokens_for(list("abcdefghij"[:n])), tuple(spans))


def rules(violations):
    return sorted(v.rule for v in violations)


def test_lint_valid_annotation_is_clean():
    assert lint_gold(footpath()) == []


def test_lint_three_segments():
    spans = [RawSpan("Object", ((0, 1), (2, 3), (4, 5)), "T1"),
             RawSpan("Discourse", ((1, 2),), "T2"), RawSpan("Discourse", ((3, 4),), "T3"),
             RawSpan("Discourse", ((5, 6),), "T4")]
    assert rules(lint_gold(raw(spans))) == ["max-two-parts"]


def test_lint_uncovered_token_reports_index():
    spans = [RawSpan("Object", ((0, 4),), "T1"), RawSpan("Object", ((5, 6),), "T2")]
    (v,) = lint_gold(raw(spans))
    assert v.rule == "uncovered-token" and (v.start, v.end) == (4, 5)


def test_lint_overlap_interleaving_illegal_and_empty():
    spans = [RawSpan("Object", ((0, 2),), "T1"), RawSpan("Action", ((1, 3),), "T2"),
             RawSpan("Action", ((3, 3),), "T3"), RawSpan("Object", ((3, 4), (5, 6)), "T4"),
             RawSpan("Object", ((4, 5),), "T5"), RawSpan("Discourse", ((6, 7), (8, 9)), "T6")]
    found = set(rules(lint_gold(raw(spans, n=9))))
    assert {"overlapping-spans", "empty-segment", "same-category-interleaving",
            "illegal-discontiguity"} <= found


# ---------------------------------------------------------------- properties

@st.composite
def annotations(draw, allow_tail=("Object", "Action")):
    n = draw(st.integers(1, 14))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_annotation(np.random.default_rng(seed), n, allow_tail)


@settings(max_examples=300, deadline=None)
@given(annotations())
def test_round_trip_property(a):
    tags = encode_tags(a)
    assert decode_tags(tags).spans and {s.key for s in decode_tags(tags).spans} == a.span_set()


@settings(max_examples=200, deadline=None)
@given(annotations(allow_tail=("Object", "Action", "Discourse", "Functional")))
def test_round_trip_property_extended(a):
    ts = TagsetConfig.extended()
    assert {s.key for s in decode_tags(encode_tags(a, ts), ts).spans} == a.span_set()


@settings(max_examples=300, deadline=None)
@given(annotations())
def test_encoded_sequences_pass_mask(a):
    tags = encode_tags(a)
    assert DEFAULT_TAGSET.is_legal(tags.labels)
    assert legal_sequence(tags.names)


@settings(max_examples=300, deadline=None)
@given(annotations())
def test_span_count_equals_bh_count(a):
    tags = encode_tags(a)
    for cat in SpanCategory:
        n_bh = sum(n == f"BH-{cat.short}" for n in tags.names)
        assert n_bh == sum(s.category is cat for s in a.spans)


@settings(max_examples=500, deadline=None)
@given(st.lists(st.sampled_from(DEFAULT_TAGSET.label_names), min_size=1, max_size=20))
def test_repair_decode_is_total_and_partitions(names):
    decoded = decode_tags(seq(names, "fz"), mode=REPAIR)
    covered = sorted(i for s in decoded.spans for i in s.indices)
    assert covered == list(range(len(names)))
    for s in decoded.spans:
        if s.tail is not None:
            assert s.head[1] < s.tail[0]
    # spans only grow beyond the BH count through logged promotions
    n_bh = sum(n.startswith("BH") for n in names)
    promotions = sum("→BH" in r for r in decoded.repairs)
    assert len(decoded.spans) <= n_bh + promotions


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(DEFAULT_TAGSET.label_names), min_size=1, max_size=12))
def test_strict_decode_of_legal_sequence_round_trips(names):
    try:
        decoded = decode_tags(seq(names, "s"))
    except DecodeError:
        return
    again = encode_tags(SentenceAnnotation("s", tokens_for(["w"] * len(names)), decoded.spans))
    assert again.names == names
