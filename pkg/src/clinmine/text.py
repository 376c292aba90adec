"""Deterministic preprocessing: document assembly, sentence detection,
tokenization and normalization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .annotation import Annotation, Kind, Record, Stage, StageSpec, TEXT_COLUMN

DEFAULT_ABBREVIATIONS = frozenset({
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.",
    "e.g.", "i.e.", "approx.", "fig.", "figs.", "al.", "pt.", "hx.", "dx.",
})

DEFAULT_SPLIT_CHARACTERS = frozenset(".,;:!?()[]{}")


@dataclass(frozen=True)
class SentenceRules:
    terminators: frozenset[str] = frozenset(".!?")
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS

    def __post_init__(self):
        for abbr in self.abbreviations:
            if not abbr or abbr[-1] not in self.terminators:
                raise ValueError(f"abbreviation {abbr!r} must end with a terminator")
        object.__setattr__(self, "abbreviations", frozenset(a.lower() for a in self.abbreviations))

    @classmethod
    def from_params(cls, params: dict[str, Any]) -> "SentenceRules":
        kw = {}
        if "terminators" in params:
            kw["terminators"] = frozenset(params["terminators"])
        if "abbreviations" in params:
            kw["abbreviations"] = frozenset(params["abbreviations"])
        return cls(**kw)


@dataclass(frozen=True)
class TokenizerRules:
    keep_internal_hyphens: bool = True
    split_characters: frozenset[str] = DEFAULT_SPLIT_CHARACTERS
    # '.' or ',' between two digits stays inside the token ("0.5", "1,000")
    keep_decimal_marks: bool = True

    def __post_init__(self):
        bad = sorted(c for c in self.split_characters if c.isalnum() or len(c) != 1)
        if bad:
            raise ValueError(f"split characters must be single non-alphanumeric characters: {bad}")

    @classmethod
    def from_params(cls, params: dict[str, Any]) -> "TokenizerRules":
        kw: dict[str, Any] = {}
        if "keep_internal_hyphens" in params:
            kw["keep_internal_hyphens"] = bool(params["keep_internal_hyphens"])
        if "split_characters" in params:
            kw["split_characters"] = frozenset(params["split_characters"])
        if "keep_decimal_marks" in params:
            kw["keep_decimal_marks"] = bool(params["keep_decimal_marks"])
        return cls(**kw)


_NON_SPACE = re.compile(r"\S+")
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")


def assemble(text: str) -> Annotation:
    stripped = text.strip()
    if not stripped:
        return Annotation(Kind.DOCUMENT, 0, 0, "", {"trim_offset": "0", "empty": "true"})
    offset = len(text) - len(text.lstrip())
    return Annotation(Kind.DOCUMENT, offset, offset + len(stripped) - 1, stripped,
                      {"trim_offset": str(offset)})


def detect_sentences(document: Annotation, rules: SentenceRules = SentenceRules()) -> list[Annotation]:
    text = document.result
    if not text:
        return []
    base = document.begin
    cuts = [0]
    word_start = 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch.isspace():
            word_start = i + 1
            continue
        if ch in rules.terminators and (i + 1 == n or text[i + 1].isspace()):
            if text[word_start:i + 1].lstrip("([{\"'").lower() not in rules.abbreviations:
                cuts.append(i + 1)
    cuts.append(n)

    sentences = []
    for a, b in zip(cuts, cuts[1:]):
        piece = text[a:b]
        stripped = piece.strip()
        if not stripped:
            continue
        lead = len(piece) - len(piece.lstrip())
        begin = base + a + lead
        sentences.append(Annotation(Kind.SENTENCE, begin, begin + len(stripped) - 1, stripped,
                                    {"sentence": str(len(sentences))}))
    return sentences


def _split_word(word: str, rules: TokenizerRules) -> list[tuple[int, int]]:
    """Relative [start, stop) spans of the tokens inside one whitespace-free word."""
    split = rules.split_characters
    if not any(c in split for c in word):
        return [(0, len(word))]
    spans = []
    start = 0
    last = len(word) - 1
    for i, c in enumerate(word):
        if c not in split:
            continue
        if 0 < i < last:
            prev, nxt = word[i - 1], word[i + 1]
            if c == "-" and rules.keep_internal_hyphens and prev.isalnum() and nxt.isalnum():
                continue
            if c in ".," and rules.keep_decimal_marks and prev.isdigit() and nxt.isdigit():
                continue
        if start < i:
            spans.append((start, i))
        spans.append((i, i + 1))
        start = i + 1
    if start < len(word):
        spans.append((start, len(word)))
    return spans


def tokenize(sentence: Annotation, rules: TokenizerRules = TokenizerRules(),
             sentence_index: int | None = None) -> list[Annotation]:
    if sentence_index is None:
        sentence_index = int(sentence.metadata.get("sentence", 0))
    meta_sent = str(sentence_index)
    base = sentence.begin
    tokens = []
    for m in _NON_SPACE.finditer(sentence.result):
        word = m.group()
        off = base + m.start()
        for a, b in _split_word(word, rules):
            tokens.append(Annotation(Kind.TOKEN, off + a, off + b - 1, word[a:b],
                                     {"sentence": meta_sent}))
    return tokens


def normalize_text(token: str) -> str:
    return _EDGE_PUNCT.sub("", token)


def normalize(tokens: list[Annotation]) -> list[Annotation]:
    out = []
    for tok in tokens:
        cleaned = normalize_text(tok.result)
        if cleaned:
            out.append(Annotation(Kind.TOKEN, tok.begin, tok.end, cleaned,
                                  {**tok.metadata, "normalized": "true"}))
    return out


# --------------------------------------------------------------------------
# Stage wrappers
# --------------------------------------------------------------------------

class DocumentAssembler(Stage):
    def __init__(self, name: str = "document", input_column: str = TEXT_COLUMN,
                 output_column: str = "document"):
        super().__init__(StageSpec(name, (input_column,), output_column, Kind.DOCUMENT))

    def annotate(self, record: Record) -> list[Annotation]:
        return [assemble(record.text)]


class SentenceDetector(Stage):
    def __init__(self, name: str = "sentence", input_column: str = "document",
                 output_column: str = "sentence", rules: SentenceRules = SentenceRules()):
        super().__init__(StageSpec(name, (input_column,), output_column, Kind.SENTENCE,
                                   (Kind.DOCUMENT,)))
        self.rules = rules

    def annotate(self, record: Record) -> list[Annotation]:
        out: list[Annotation] = []
        for doc in record.columns[self.spec.input_columns[0]]:
            for s in detect_sentences(doc, self.rules):
                s.metadata["sentence"] = str(len(out))
                out.append(s)
        return out


class Tokenizer(Stage):
    def __init__(self, name: str = "token", input_column: str = "sentence",
                 output_column: str = "token", rules: TokenizerRules = TokenizerRules()):
        super().__init__(StageSpec(name, (input_column,), output_column, Kind.TOKEN,
                                   (Kind.SENTENCE,)))
        self.rules = rules

    def annotate(self, record: Record) -> list[Annotation]:
        out: list[Annotation] = []
        for i, sent in enumerate(record.columns[self.spec.input_columns[0]]):
            out.extend(tokenize(sent, self.rules, i))
        return out


class Normalizer(Stage):
    def __init__(self, name: str = "normalizer", input_column: str = "token",
                 output_column: str = "normalized"):
        super().__init__(StageSpec(name, (input_column,), output_column, Kind.TOKEN,
                                   (Kind.TOKEN,)))

    def annotate(self, record: Record) -> list[Annotation]:
        return normalize(record.columns[self.spec.input_columns[0]])
