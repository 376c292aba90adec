import itertools

import pytest
from hypothesis import given, settings, strategies as st

from clinmine.annotation import Annotation, Kind
from clinmine.tags import (Chunk, TagError, TagScheme, convert_ner, decode, decode_lenient, encode,
                           is_valid_tag, split_tag)
from clinmine.text import assemble, detect_sentences, tokenize


def alphabet(scheme, labels=("X", "Y")):
    prefixes = "BI" if scheme == TagScheme.BIO else "BIES"
    return ["O"] + [f"{p}-{lab}" for p in prefixes for lab in labels]


def boundary_oracle(tags):
    """Independent lenient decoder: a position starts a chunk unless it is an
    I/E tag continuing the previous tag's label, where the previous tag is a
    B or I. A chunk ends where the next position does not continue it."""
    parsed = [(t[0], t[2:]) if t != "O" else ("O", None) for t in tags]

    def continues(i):
        if i == 0:
            return False
        p, lab = parsed[i]
        pp, plab = parsed[i - 1]
        return p in "IE" and pp in "BI" and plab == lab

    chunks = []
    for i, (p, lab) in enumerate(parsed):
        if p == "O" or continues(i):
            continue
        j = i
        while parsed[j][0] not in "ES" and j + 1 < len(parsed) and continues(j + 1):
            j += 1
        if p == "S":
            j = i
        chunks.append(Chunk(i, j, lab))
    return chunks


def test_split_tag_partitions_at_first_hyphen():
    assert split_tag("B-DRUG") == ("B", "DRUG")
    assert split_tag("I-X-RAY") == ("I", "X-RAY")
    assert split_tag("O") == ("O", None)
    with pytest.raises(TagError):
        split_tag("DRUG")


def test_is_valid_tag_per_scheme():
    assert is_valid_tag("S-GENE", "BIOES")
    assert not is_valid_tag("S-GENE", "BIO")
    assert not is_valid_tag("Q-GENE", "BIOES")


def test_encode_bioes_multi_token():
    assert encode([Chunk(0, 2, "GENE")], 4, "BIOES") == ["B-GENE", "I-GENE", "E-GENE", "O"]


def test_encode_bioes_single_token():
    assert encode([Chunk(1, 1, "GENE")], 3, "BIOES") == ["O", "S-GENE", "O"]


def test_encode_bio_adjacent_chunks():
    assert encode([Chunk(0, 1, "X"), Chunk(2, 3, "X")], 4, "BIO") == ["B-X", "I-X", "B-X", "I-X"]


def test_encode_rejects_overlap_and_bounds():
    with pytest.raises(TagError, match="overlap at token 1"):
        encode([Chunk(0, 1, "X"), Chunk(1, 2, "Y")], 3)
    with pytest.raises(TagError):
        encode([Chunk(0, 3, "X")], 3)


def test_decode_examples():
    assert decode(["B-GENE", "E-GENE", "O"], "BIOES") == [Chunk(0, 1, "GENE")]
    assert decode(["O", "O"], "BIO") == []
    assert decode(["B-X", "I-X", "B-X"], "BIO") == [Chunk(0, 1, "X"), Chunk(2, 2, "X")]


@pytest.mark.parametrize("tags,scheme,pos", [
    (["I-X"], "BIO", 0),
    (["B-X", "I-Y"], "BIO", 1),
    (["B-X", "O"], "BIOES", 1),
    (["B-X"], "BIOES", 1),
    (["O", "S-X"], "BIO", 1),
])
def test_decode_strict_names_position(tags, scheme, pos):
    with pytest.raises(TagError, match=f"position {pos}"):
        decode(tags, scheme)


def test_decode_lenient_examples():
    assert decode_lenient(["I-X", "I-X"]) == [Chunk(0, 1, "X")]
    assert decode_lenient(["B-X", "I-Y"]) == [Chunk(0, 0, "X"), Chunk(1, 1, "Y")]


@pytest.mark.parametrize("scheme", list(TagScheme))
def test_decode_lenient_matches_boundary_oracle_exhaustively(scheme):
    alpha = alphabet(scheme)
    for n in range(5):
        for tags in itertools.product(alpha, repeat=n):
            assert decode_lenient(list(tags), scheme) == boundary_oracle(tags), tags


@pytest.mark.parametrize("scheme", list(TagScheme))
def test_decode_lenient_is_identity_repair_on_valid_input(scheme):
    alpha = alphabet(scheme)
    for n in range(5):
        for tags in itertools.product(alpha, repeat=n):
            try:
                strict = decode(list(tags), scheme)
            except TagError:
                continue
            assert decode_lenient(list(tags), scheme) == strict


@st.composite
def chunk_sets(draw, max_tokens=12):
    n = draw(st.integers(0, max_tokens))
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=n)))
    chunks = []
    bounds = [0] + cuts + [n]
    for a, b in zip(bounds, bounds[1:]):
        if b > a and draw(st.booleans()):
            first = draw(st.integers(a, b - 1))
            last = draw(st.integers(first, b - 1))
            chunks.append(Chunk(first, last, draw(st.sampled_from(["X", "Y", "B-ODD", "drug"]))))
    return n, chunks


@settings(max_examples=300, deadline=None)
@given(chunk_sets(), st.sampled_from(list(TagScheme)))
def test_round_trip(data, scheme):
    n, chunks = data
    tags = encode(chunks, n, scheme)
    assert decode(tags, scheme) == chunks


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(alphabet(TagScheme.BIOES) + ["garbage"]), max_size=15))
def test_lenient_output_sorted_non_overlapping(tags):
    chunks = decode_lenient(tags, "BIOES")
    for a, b in zip(chunks, chunks[1:]):
        assert a.last < b.first
    for c in chunks:
        assert 0 <= c.first <= c.last < len(tags)


def _tokens(text):
    doc = assemble(text)
    out = []
    for i, s in enumerate(detect_sentences(doc)):
        out.extend(tokenize(s, sentence_index=i))
    return out


def _tags(tokens, tags):
    return [Annotation(Kind.NAMED_ENTITY_TAG, t.begin, t.end, tag, {"sentence": t.metadata["sentence"]})
            for t, tag in zip(tokens, tags)]


def test_convert_ner_offsets():
    text = "severe fever and sore throat"
    toks = _tokens(text)
    chunks = convert_ner(toks, _tags(toks, ["B-PROBLEM", "I-PROBLEM", "O", "B-PROBLEM", "I-PROBLEM"]), text)
    assert [(c.result, c.begin, c.end, c.metadata["entity"]) for c in chunks] == [
        ("severe fever", 0, 11, "PROBLEM"), ("sore throat", 17, 27, "PROBLEM")]


def test_convert_ner_all_outside_and_mismatch():
    text = "no entities here"
    toks = _tokens(text)
    assert convert_ner(toks, _tags(toks, ["O"] * 3), text) == []
    with pytest.raises(TagError, match="length mismatch"):
        convert_ner(toks, _tags(toks, ["O"] * 2), text)


def test_convert_ner_never_crosses_sentences():
    text = "took aspirin. aspirin again"
    toks = _tokens(text)
    tags = ["O", "B-DRUG", "I-DRUG", "I-DRUG", "O"]
    chunks = convert_ner(toks, _tags(toks, tags), text)
    assert [(c.result, c.metadata["sentence"]) for c in chunks] == [("aspirin.", "0"), ("aspirin", "1")]
