import io
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myanner.corpus import (
    NE_TYPES,
    PAD_ID,
    UNK_ID,
    ConllFormatError,
    EntitySpan,
    LabeledSentence,
    LabelError,
    build_alphabets,
    convert_scheme,
    evaluate,
    format_conll,
    generate_synthetic_corpus,
    labels_to_spans,
    parse_conll,
    read_conll,
    spans_to_labels,
    validate_labels,
    write_conll,
)
from oracles import brute_chunks


def test_read_conll_basic():
    (s,) = read_conll(io.BytesIO("ရန်\tB-LOC\nကုန်\tE-LOC\n\n".encode()))
    assert s.tokens == ["ရန်", "ကုန်"] and s.labels == ["B-LOC", "E-LOC"]


def test_read_conll_empty_and_crlf_and_bom():
    assert read_conll(b"") == []
    a = read_conll("\ufeffa\tO\r\nb\tS-NUM\r\n\r\n\r\nc\tO\r\n".encode())
    assert [s.tokens for s in a] == [["a", "b"], ["c"]]


def test_read_conll_malformed_row_reports_line():
    with pytest.raises(ConllFormatError) as info:
        parse_conll("x\tO\n\na\tO\tX\n")
    assert info.value.lineno == 3


def test_write_read_byte_identical(tmp_path):
    sents = generate_synthetic_corpus(5, 20)
    path = tmp_path / "c.conll"
    write_conll(sents, path)
    data = path.read_bytes()
    assert not data.startswith("\ufeff".encode())
    assert read_conll(path) == sents
    buf = io.BytesIO()
    write_conll(read_conll(data), buf)
    assert buf.getvalue() == data


def test_labeled_sentence_invariants():
    with pytest.raises(ValueError):
        LabeledSentence(["a"], ["O", "O"])
    with pytest.raises(ValueError):
        LabeledSentence([], [])


@pytest.mark.parametrize(
    "n, spans, scheme, expected",
    [
        (3, [(0, 1, "LOC")], "IOBES", ["B-LOC", "E-LOC", "O"]),
        (3, [(2, 2, "NUM")], "IOBES", ["O", "O", "S-NUM"]),
        (3, [(0, 1, "LOC")], "IOB2", ["B-LOC", "I-LOC", "O"]),
        (4, [(0, 2, "ORG")], "IOBES", ["B-ORG", "I-ORG", "E-ORG", "O"]),
    ],
)
def test_spans_to_labels(n, spans, scheme, expected):
    assert spans_to_labels(n, [EntitySpan(*s) for s in spans], scheme) == expected


def test_spans_to_labels_rejects_bad_spans():
    with pytest.raises(ValueError):
        spans_to_labels(3, [EntitySpan(0, 1, "LOC"), EntitySpan(1, 2, "ORG")])
    with pytest.raises(ValueError):
        spans_to_labels(2, [EntitySpan(1, 2, "LOC")])


@pytest.mark.parametrize(
    "labels, spans",
    [
        (["B-LOC", "E-LOC", "O"], [(0, 1, "LOC")]),
        (["O", "O", "O"], []),
        (["I-ORG", "E-ORG"], [(0, 1, "ORG")]),
        (["B-LOC", "E-ORG"], [(0, 0, "LOC"), (1, 1, "ORG")]),
        (["B-LOC", "I-LOC"], [(0, 1, "LOC")]),
    ],
)
def test_labels_to_spans(labels, spans):
    assert labels_to_spans(labels) == [EntitySpan(*s) for s in spans]


_any_label = st.sampled_from(["O"] + [f"{p}-{t}" for p in "BIES" for t in ("LOC", "ORG", "NUM")])


@settings(max_examples=2000, deadline=None)
@given(st.lists(_any_label, max_size=12))
def test_lenient_decode_matches_brute_force_chunker(labels):
    got = [(s.start, s.end, s.ne_type) for s in labels_to_spans(labels)]
    assert got == brute_chunks(labels)


@st.composite
def span_sets(draw, max_len=15):
    n = draw(st.integers(1, max_len))
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=8)))
    spans = []
    for a, b in zip(cuts[::2], cuts[1::2]):
        if a < b and draw(st.booleans()):
            spans.append(EntitySpan(a, b - 1, draw(st.sampled_from(NE_TYPES))))
    return n, spans


@settings(max_examples=500, deadline=None)
@given(span_sets())
def test_span_roundtrip_and_conversion(case):
    n, spans = case
    for scheme in ("IOBES", "IOB2"):
        labels = spans_to_labels(n, spans, scheme)
        assert validate_labels(labels, scheme) == []
        assert labels_to_spans(labels) == spans
    iobes = spans_to_labels(n, spans, "IOBES")
    iob2 = convert_scheme(iobes, "IOBES", "IOB2")
    assert iob2 == spans_to_labels(n, spans, "IOB2")
    assert convert_scheme(iob2, "iob2", "iobes") == iobes


def test_convert_examples():
    assert convert_scheme(["B-LOC", "I-LOC"], "IOB2", "IOBES") == ["B-LOC", "E-LOC"]
    assert convert_scheme(["B-NUM"], "IOB2", "IOBES") == ["S-NUM"]
    with pytest.raises(LabelError):
        convert_scheme(["B-LOC", "O"], "IOBES", "IOB2")


def test_validate_labels_examples():
    assert validate_labels(["B-LOC", "E-LOC"]) == []
    (v,) = validate_labels(["B-LOC", "O"])
    assert v.index == 1
    (v,) = validate_labels(["E-ORG"])
    assert v.index == 0
    assert [v.index for v in validate_labels(["B-LOC"])] == [1]
    assert validate_labels(["I-LOC"], "IOB2")[0].index == 0
    assert validate_labels(["S-FOO"]) and not validate_labels(["S-FOO"], open_tagset=True)


def _sent(n, spans):
    return LabeledSentence(["x"] * n, spans_to_labels(n, [EntitySpan(*s) for s in spans]))


def test_evaluate_examples():
    g = _sent(4, [(0, 1, "LOC"), (3, 3, "NUM")])
    m = evaluate([g], [g.labels])
    assert (m.micro.precision, m.micro.recall, m.micro.f1) == (1.0, 1.0, 1.0)

    p = spans_to_labels(4, [EntitySpan(0, 1, "LOC"), EntitySpan(2, 2, "NUM")])
    m = evaluate([g], [p])
    assert (m.micro.tp, m.micro.fp, m.micro.fn) == (1, 1, 1)
    assert m.micro.precision == m.micro.recall == m.micro.f1 == 0.5
    assert "micro\t50.00\t50.00\t50.00" in m.format_table()

    g2 = _sent(3, [(0, 2, "ORG")])
    m = evaluate([g2], [spans_to_labels(3, [EntitySpan(0, 1, "ORG")])])
    assert (m.micro.tp, m.micro.fp, m.micro.fn) == (0, 1, 1)


def test_evaluate_zero_denominators_and_errors():
    g = _sent(2, [])
    m = evaluate([g], [["O", "O"]])
    assert m.micro.precision == m.micro.recall == m.micro.f1 == 0.0
    with pytest.raises(ValueError):
        evaluate([g], [["O"]])
    with pytest.raises(ValueError):
        evaluate([g], [])


def test_metric_identities_on_synthetic_data():
    gold = generate_synthetic_corpus(3, 50)
    pred = [list(reversed(s.labels)) for s in gold]
    m = evaluate(gold, pred)
    n_gold = sum(len(labels_to_spans(s.labels)) for s in gold)
    n_pred = sum(len(labels_to_spans(p)) for p in pred)
    assert m.micro.tp + m.micro.fn == n_gold
    assert m.micro.tp + m.micro.fp == n_pred
    table = m.format_table(macro=True)
    assert table.splitlines()[0] == "TYPE\tP\tR\tF1"
    assert table.splitlines()[-1].startswith("macro\t")


def test_alphabets():
    a = build_alphabets([LabeledSentence(["ရန်", "ကုန်"], ["B-LOC", "E-LOC"])])
    assert len(a.syllables) == 4
    assert a.syllables.itos[PAD_ID] == "<pad>" and a.syllables.itos[UNK_ID] == "<unk>"
    assert a.syllables.index("မ") == UNK_ID
    assert set("ရန်ကုန်") <= set(a.chars.itos)
    assert a.labels[0] == "O" and set(a.labels) == {"O", "B-LOC", "E-LOC"}
    with pytest.raises(ValueError):
        build_alphabets([])
    with pytest.raises(LabelError):
        a.label_index("S-ORG")


def test_synthetic_corpus_contract():
    a = generate_synthetic_corpus(1, 10)
    assert len(a) == 10
    assert a == generate_synthetic_corpus(1, 10)
    assert a != generate_synthetic_corpus(2, 10)
    for s in a:
        assert validate_labels(s.labels) == []
        assert 5 <= len(s) <= 25
    with pytest.raises(ValueError):
        generate_synthetic_corpus(1, 0)


@pytest.mark.slow
def test_synthetic_type_frequencies_follow_corpus_statistics():
    counts = Counter(sp.ne_type for s in generate_synthetic_corpus(1, 10_000) for sp in labels_to_spans(s.labels))
    assert counts["LOC"] > counts["PNAME"] > counts["TIME"] > max(counts["NUM"], counts["ORG"])
    assert min(counts["NUM"], counts["ORG"]) > counts["RACE"]
    assert abs(counts["NUM"] - counts["ORG"]) / counts["NUM"] < 0.15


def test_format_conll_blank_line_between_sentences():
    s = [LabeledSentence(["a"], ["O"]), LabeledSentence(["b"], ["S-NUM"])]
    assert format_conll(s) == "a\tO\n\nb\tS-NUM\n"
