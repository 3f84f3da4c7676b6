from fractions import Fraction

import pytest
from hypothesis import given

from jazzkern import kern
from jazzkern.kern import (
    BadChordToken, BadMelodyToken, InvalidDocument, LineKind, MissingHeader, MissingTerminator, SpineCountError,
    parse_kern, serialize_kern, split_regions, strip_annotations, validate_document,
)
from strategies import kern_documents


def test_minimal_document(minimal_kern):
    doc = parse_kern(minimal_kern)
    data = doc.data_lines
    assert [(l.melody, l.chord) for l in data] == [("4a", "D:min7"), ("4b", ".")]
    assert doc.chords == ["D:min7"]
    assert serialize_kern(doc) == minimal_kern


@pytest.mark.parametrize("text, error", [
    ("", MissingTerminator),
    ("**kern\t**harte\n4a\tC:maj\t.\n*-\t*-\n", SpineCountError),
    ("**kern\t**harte\n4a\n*-\t*-\n", SpineCountError),
    ("**kern\t**harte\n4a\tC:maj\n", MissingTerminator),
    ("4a\tC:maj\n*-\t*-\n", MissingHeader),
    ("**kern\t**text\n*-\t*-\n", MissingHeader),
    ("**kern\t**harte\n4a\tC:maj(7,b9)\n*-\t*-\n", BadChordToken),
    ("**kern\t**harte\n4h\t.\n*-\t*-\n", BadMelodyToken),
    ("**kern\t**harte\nar\t.\n*-\t*-\n", BadMelodyToken),
    ("**kern\t**harte\n4rL\t.\n*-\t*-\n", BadMelodyToken),
    ("**kern\t**harte\n128c\t.\n*-\t*-\n", BadMelodyToken),
    ("**kern\t**harte\n4c\t.\n\n*-\t*-\n", InvalidDocument),
    ("**kern\t**harte\n*^\t*^\n*-\t*-\n", InvalidDocument),
    ("**kern\t**harte\n*-\t*-\n4c\t.\n*-\t*-\n", InvalidDocument),
    ("**kern\t**harte\n!!a\tb\n*-\t*-\n", SpineCountError),
    ("**kern\t**harte\n4c\t*\n*-\t*-\n", InvalidDocument),
])
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_kern(text)


def test_error_carries_line_number():
    with pytest.raises(BadChordToken) as info:
        parse_kern("**kern\t**harte\n4c\t.\n4d\tC:foo\n*-\t*-\n")
    assert info.value.line == 3


def test_windows_line_endings(minimal_kern):
    assert serialize_kern(parse_kern(minimal_kern.replace("\n", "\r\n"))) == minimal_kern


def test_legacy_chord_spine_is_renamed():
    doc = parse_kern("**kern\t**mxhm\n4c\tC:7\n*-\t*-\n")
    assert serialize_kern(doc).startswith("**kern\t**harte\n")


def test_null_chords_serialise_verbatim():
    text = "**kern\t**harte\n4c\t.\n4d\t.\n*-\t*-\n"
    assert serialize_kern(parse_kern(text)) == text


def test_metadata_and_polyphony_are_kept():
    text = "!!!COM: Someone\n**kern\t**harte\n4c 4e\tC:maj\n*-\t*-\n"
    doc = parse_kern(text)
    assert doc.metadata == ("!!!COM: Someone",)
    assert serialize_kern(doc) == text
    assert "polyphony" in {d.code for d in validate_document(doc)}


def test_melody_token_fields():
    tok = kern.parse_melody_token("(16.ee-L")
    assert (tok.duration, tok.dots, tok.pitch, tok.accidentals) == ("16", 1, "ee", "-")
    assert tok.ornaments == {"slur-open", "beam-start"}
    assert tok.beats() == Fraction(3, 32)
    assert kern.parse_melody_token("[4c").ornaments == {"tie-open"}
    assert kern.parse_melody_token("8G#q").is_grace
    assert kern.parse_melody_token("cc-q").beats() is None
    assert kern.recip_duration("0") == 2
    assert kern.recip_duration("4", 1) == Fraction(3, 8)


FIXTURE = """!!!OTL: Test
**kern\t**harte
*clefG2\t*clefG2
*k[b-]\t*k[b-]
*M4/4\t*M4/4
=1\t=1
4c\tF:maj7
4d\t.
2e\t.
=2\t=2
!!linebreak:original
1f\tBb:7
=3\t=3
*M3/4\t*M3/4
!! a comment
2.g\tC:min7
=4\t=4
!!linebreak:original
*k[]\t*k[]
2.a\tD:7
==\t==
*-\t*-
"""


def test_split_regions_with_context():
    regions = split_regions(parse_kern(FIXTURE))
    assert len(regions) == 3
    texts = [serialize_kern(r) for r in regions]
    assert texts[0] == "\n".join(FIXTURE.splitlines()[:10]) + "\n*-\t*-\n"
    assert texts[1] == ("**kern\t**harte\n*clefG2\t*clefG2\n*k[b-]\t*k[b-]\n1f\tBb:7\n=3\t=3\n*M3/4\t*M3/4\n"
                        "!! a comment\n2.g\tC:min7\n=4\t=4\n*-\t*-\n")
    # key redefined at the top of the region, meter differs from the opening one
    assert texts[2] == "**kern\t**harte\n*clefG2\t*clefG2\n*M3/4\t*M3/4\n*k[]\t*k[]\n2.a\tD:7\n==\t==\n*-\t*-\n"
    for r in regions:
        parse_kern(serialize_kern(r))


def test_split_without_markers_is_identity(minimal_kern):
    doc = parse_kern(minimal_kern)
    assert split_regions(doc) == [doc]
    assert split_regions(doc, include_context=False) == [doc]


def _rejoin(regions):
    lines = []
    for i, r in enumerate(regions):
        if i:
            lines.append(kern.LINEBREAK)
        lines.extend(l.text for l in r.lines)
    return "\n".join(lines) + "\n"


def test_split_without_context_reassembles():
    doc = parse_kern(FIXTURE)
    regions = split_regions(doc, include_context=False)
    assert regions[0].lines[1].kind is LineKind.EXCLUSIVE
    assert all(l.kind is not LineKind.EXCLUSIVE for r in regions[1:] for l in r.lines)
    assert _rejoin(regions) == FIXTURE


@given(kern_documents())
def test_round_trip(text):
    doc = parse_kern(text)
    assert serialize_kern(doc) == text
    assert parse_kern(serialize_kern(doc)) == doc


@given(kern_documents())
def test_region_laws(text):
    doc = parse_kern(text)
    markers = sum(l.kind is LineKind.LINEBREAK for l in doc.lines)
    assert len(split_regions(doc)) == markers + 1
    assert _rejoin(split_regions(doc, include_context=False)) == text
    for region in split_regions(doc):
        parse_kern(serialize_kern(region))


@given(kern_documents())
def test_chord_fields_are_null_or_harte(text):
    from jazzkern import harte
    for line in parse_kern(text).data_lines:
        assert line.chord == "." or harte.serialize_chord(harte.parse_chord(line.chord)) == line.chord


def test_strip_annotations():
    doc = strip_annotations(parse_kern(FIXTURE))
    text = serialize_kern(doc)
    assert "!!!OTL" not in text and "!! a comment" not in text
    assert "=1\t=1" not in text and "=\t=" in text and "==\t==" in text
    assert text.count(kern.LINEBREAK) == 2
    assert serialize_kern(strip_annotations(parse_kern(FIXTURE), keep_linebreaks=False)).count(kern.LINEBREAK) == 0
    assert strip_annotations(doc) == doc


def test_strip_barline_variants():
    text = "**kern\t**harte\n4c\t.\n=12\t=12\n4c\t.\n=13a\t=13a\n4c\t.\n=:|!14\t=:|!14\n*-\t*-\n"
    stripped = serialize_kern(strip_annotations(parse_kern(text)))
    assert stripped == "**kern\t**harte\n4c\t.\n=\t=\n4c\t.\n=\t=\n4c\t.\n=:|!14\t=:|!14\n*-\t*-\n"


def test_strip_is_a_fixpoint_on_clean_documents(minimal_kern):
    doc = parse_kern(minimal_kern)
    assert strip_annotations(doc) == doc


def test_validate_clean_fixture():
    assert validate_document(parse_kern(FIXTURE)) == []


def test_validate_bad_chord():
    doc = parse_kern("**kern\t**harte\n4c\tC:maj(7,b9)\n*-\t*-\n", strict=False)
    diags = validate_document(doc)
    assert [(d.code, d.line, d.severity) for d in diags] == [("bad-chord", 2, "error")]


def test_validate_duration_mismatch():
    text = "**kern\t**harte\n*M4/4\t*M4/4\n=1\t=1\n4c\t.\n4d\t.\n4e\t.\n4f\t.\n=2\t=2\n4c\t.\n2d\t.\n=3\t=3\n1c\t.\n==\t==\n*-\t*-\n"
    diags = validate_document(parse_kern(text))
    assert [(d.code, d.severity) for d in diags] == [("duration-mismatch", "warning")]


def test_pickup_and_final_measures_may_be_short():
    text = "**kern\t**harte\n*M4/4\t*M4/4\n4c\t.\n=1\t=1\n1d\t.\n=2\t=2\n2e\t.\n==\t==\n*-\t*-\n"
    assert validate_document(parse_kern(text)) == []


def test_validate_ties_and_slurs():
    balanced = "**kern\t**harte\n[4c\t.\n4c_\t.\n4c]\t.\n(4e\t.\n4f)\t.\n*-\t*-\n"
    assert validate_document(parse_kern(balanced)) == []
    text = "**kern\t**harte\n4c]\t.\n(4e\t.\n4f)\t.\n4g)\t.\n(4a\t.\n[4b\t.\n*-\t*-\n"
    diags = [(d.code, d.line) for d in validate_document(parse_kern(text))]
    assert sorted(diags) == [("unopened-slur", 5), ("unopened-tie", 2), ("unterminated-slur", 6),
                             ("unterminated-tie", 7)]


def test_measure_count():
    assert kern.measure_count(parse_kern(FIXTURE)) == 4
    assert kern.measure_count(parse_kern("**kern\t**harte\n*-\t*-\n")) == 0


def test_bundled_corpus_is_valid(corpus_paths):
    assert len(corpus_paths) >= 20
    for path, doc in kern.iter_documents(corpus_paths):
        assert [d for d in validate_document(doc) if d.severity == "error"] == [], path
        assert serialize_kern(doc) == path.read_text(encoding="utf-8")


def test_corpus_region_lengths_are_plausible(corpus_paths):
    # lead-sheet systems hold a handful of measures (roughly four or five)
    counts = [kern.measure_count(r) for p in corpus_paths for r in split_regions(kern.read_kern(p))]
    assert 3 <= sum(counts) / len(counts) <= 6
