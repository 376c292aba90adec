"""BIO / BIOES tag codec and the NER converter.

Tags have the surface form ``PREFIX-LABEL`` (split at the first hyphen, so
labels may themselves contain hyphens) or the bare outside tag ``O``. Labels
are kept exactly as written.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, NamedTuple, Sequence

from .annotation import Annotation, Kind, Record, Stage, StageSpec

OUTSIDE = "O"


class TagScheme(str, Enum):
    BIO = "BIO"
    BIOES = "BIOES"

    @property
    def prefixes(self) -> frozenset[str]:
        return frozenset("BI") if self is TagScheme.BIO else frozenset("BIES")


class Chunk(NamedTuple):
    first: int
    last: int
    label: str


class TagError(ValueError):
    pass


def scheme_of(scheme: TagScheme | str) -> TagScheme:
    return scheme if isinstance(scheme, TagScheme) else TagScheme(str(scheme).upper())


def split_tag(tag: str) -> tuple[str, str | None]:
    """``"B-DRUG"`` -> ``("B", "DRUG")``; ``"O"`` -> ``("O", None)``."""
    if tag == OUTSIDE:
        return OUTSIDE, None
    prefix, sep, label = tag.partition("-")
    if not sep or len(prefix) != 1 or not label:
        raise TagError(f"malformed tag {tag!r}")
    return prefix, label


def is_valid_tag(tag: str, scheme: TagScheme | str) -> bool:
    try:
        prefix, _ = split_tag(tag)
    except TagError:
        return False
    return prefix == OUTSIDE or prefix in scheme_of(scheme).prefixes


def encode(chunks: Iterable[Chunk], n_tokens: int, scheme: TagScheme | str = TagScheme.BIO) -> list[str]:
    scheme = scheme_of(scheme)
    tags = [OUTSIDE] * n_tokens
    for first, last, label in sorted(chunks):
        if not label:
            raise TagError("chunk label must be non-empty")
        if first < 0 or last >= n_tokens or first > last:
            raise TagError(f"chunk ({first}, {last}) outside [0, {n_tokens})")
        for i in range(first, last + 1):
            if tags[i] != OUTSIDE:
                raise TagError(f"overlap at token {i}")
        if scheme is TagScheme.BIO:
            tags[first] = f"B-{label}"
            for i in range(first + 1, last + 1):
                tags[i] = f"I-{label}"
        elif first == last:
            tags[first] = f"S-{label}"
        else:
            tags[first] = f"B-{label}"
            for i in range(first + 1, last):
                tags[i] = f"I-{label}"
            tags[last] = f"E-{label}"
    return tags


def decode(tags: Sequence[str], scheme: TagScheme | str = TagScheme.BIO) -> list[Chunk]:
    """Strict decoding; raises :class:`TagError` naming the offending position."""
    scheme = scheme_of(scheme)
    allowed = scheme.prefixes
    chunks: list[Chunk] = []
    start: int | None = None
    label: str | None = None
    for i, tag in enumerate(tags):
        try:
            prefix, lab = split_tag(tag)
        except TagError as exc:
            raise TagError(f"position {i}: {exc}") from None
        if prefix != OUTSIDE and prefix not in allowed:
            raise TagError(f"position {i}: tag {tag!r} not valid in {scheme.value}")

        if scheme is TagScheme.BIO:
            if prefix == "I":
                if start is None or lab != label:
                    raise TagError(f"position {i}: {tag!r} does not continue an open {lab} chunk")
                continue
            if start is not None:
                chunks.append(Chunk(start, i - 1, label))  # type: ignore[arg-type]
                start = label = None
            if prefix == "B":
                start, label = i, lab
            continue

        # BIOES
        if prefix in ("I", "E"):
            if start is None or lab != label:
                raise TagError(f"position {i}: {tag!r} does not continue an open {lab} chunk")
            if prefix == "E":
                chunks.append(Chunk(start, i, label))  # type: ignore[arg-type]
                start = label = None
            continue
        if start is not None:
            raise TagError(f"position {i}: chunk opened at {start} was not closed with E-{label}")
        if prefix == "B":
            start, label = i, lab
        elif prefix == "S":
            chunks.append(Chunk(i, i, lab))  # type: ignore[arg-type]

    if start is not None:
        if scheme is TagScheme.BIOES:
            raise TagError(f"position {len(tags)}: chunk opened at {start} was not closed with E-{label}")
        chunks.append(Chunk(start, len(tags) - 1, label))  # type: ignore[arg-type]
    return chunks


def decode_lenient(tags: Sequence[str], scheme: TagScheme | str = TagScheme.BIO) -> list[Chunk]:
    """Total decoding with repairs, for unconstrained model output.

    An ``I``/``E`` tag that does not continue an open chunk of the same label
    starts a new chunk; a label change closes the open chunk; a chunk still
    open at the end is closed there. Unparseable tags count as ``O``.
    """
    chunks: list[Chunk] = []
    start: int | None = None
    label: str | None = None

    def close(end: int) -> None:
        nonlocal start, label
        if start is not None:
            chunks.append(Chunk(start, end, label))  # type: ignore[arg-type]
        start = label = None

    for i, tag in enumerate(tags):
        try:
            prefix, lab = split_tag(tag)
        except TagError:
            prefix, lab = OUTSIDE, None
        if prefix == OUTSIDE or prefix not in "BIES":
            close(i - 1)
        elif prefix == "B":
            close(i - 1)
            start, label = i, lab
        elif prefix == "S":
            close(i - 1)
            chunks.append(Chunk(i, i, lab))  # type: ignore[arg-type]
        else:
            if start is None or lab != label:
                close(i - 1)
                start, label = i, lab
            if prefix == "E":
                close(i)
    close(len(tags) - 1)
    return chunks


def convert(tags: Sequence[str], scheme: TagScheme | str, lenient: bool = True) -> list[Chunk]:
    return decode_lenient(tags, scheme) if lenient else decode(tags, scheme)


def convert_ner(
    tokens: Sequence[Annotation],
    tags: Sequence[Annotation],
    text: str,
    scheme: TagScheme | str = TagScheme.BIO,
    lenient: bool = True,
) -> list[Annotation]:
    """Turn per-token tag annotations into character-offset chunk annotations.

    Tokens and tags are aligned one-to-one; decoding happens per sentence (the
    ``sentence`` metadata key), so chunks never cross sentence boundaries.
    """
    if len(tokens) != len(tags):
        raise TagError(f"length mismatch: {len(tokens)} tokens vs {len(tags)} tags")
    chunks: list[Annotation] = []
    i = 0
    n = len(tokens)
    while i < n:
        sent = tokens[i].metadata.get("sentence", "0")
        j = i
        while j < n and tokens[j].metadata.get("sentence", "0") == sent:
            j += 1
        sent_tags = [t.result for t in tags[i:j]]
        for c in convert(sent_tags, scheme, lenient):
            first, last = tokens[i + c.first], tokens[i + c.last]
            meta = {"entity": c.label, "sentence": sent,
                    "first_token": str(c.first), "last_token": str(c.last)}
            confs = [tags[i + k].metadata.get("confidence") for k in range(c.first, c.last + 1)]
            if all(x is not None for x in confs):
                meta["confidence"] = f"{sum(float(x) for x in confs) / len(confs):.6f}"  # type: ignore[arg-type]
            chunks.append(Annotation(Kind.CHUNK, first.begin, last.end,
                                     text[first.begin:last.end + 1], meta))
        i = j
    return chunks


class NerConverter(Stage):
    """Chunks from a tag column; lenient decoding unless ``lenient=False``."""

    def __init__(self, name: str = "ner_converter",
                 input_columns: tuple[str, str, str] = ("sentence", "token", "ner"),
                 output_column: str = "ner_chunk", scheme: TagScheme | str = TagScheme.BIO,
                 lenient: bool = True):
        super().__init__(StageSpec(name, tuple(input_columns), output_column, Kind.CHUNK,
                                   (Kind.SENTENCE, Kind.TOKEN, Kind.NAMED_ENTITY_TAG)))
        self.scheme = scheme_of(scheme)
        self.lenient = lenient

    def annotate(self, record: Record) -> list[Annotation]:
        _, token_col, tag_col = self.spec.input_columns
        return convert_ner(record.columns[token_col], record.columns[tag_col], record.text,
                           self.scheme, self.lenient)
