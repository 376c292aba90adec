"""Pretrained word vectors in the plain-text format (``token v1 v2 ... vD`` per
line, optionally preceded by a ``V D`` header line)."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .annotation import Annotation, Kind, Record, Stage, StageSpec

log = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    pass


@dataclass
class EmbeddingStore:
    dimension: int
    vocabulary: dict[str, int]
    matrix: np.ndarray
    case_fallback: bool = True
    duplicates: int = 0
    _zero: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.matrix.shape != (len(self.vocabulary), self.dimension):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match "
                             f"({len(self.vocabulary)}, {self.dimension})")
        self._zero = np.zeros(self.dimension)
        self._zero.flags.writeable = False
        self.matrix.flags.writeable = False

    def __len__(self) -> int:
        return len(self.vocabulary)

    def index(self, token: str) -> int | None:
        row = self.vocabulary.get(token)
        if row is None and self.case_fallback:
            row = self.vocabulary.get(token.lower())
        return row

    def vectors(self, tokens: Iterable[str]) -> np.ndarray:
        tokens = list(tokens)
        out = np.zeros((len(tokens), self.dimension))
        for i, tok in enumerate(tokens):
            row = self.index(tok)
            if row is not None:
                out[i] = self.matrix[row]
        return out


def _parse_floats(parts: list[str], lineno: int) -> list[float]:
    try:
        return [float(x) for x in parts]
    except ValueError:
        raise EmbeddingFormatError(f"line {lineno}: non-numeric vector value") from None


def load_embeddings(path: str | os.PathLike, case_fallback: bool = True) -> EmbeddingStore:
    vocab: dict[str, int] = {}
    rows: list[list[float]] = []
    dim: int | None = None
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                dim = int(parts[1])
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingFormatError(f"line {lineno}: no vector values")
            if len(values) != dim:
                raise EmbeddingFormatError(f"line {lineno}: expected {dim} values, got {len(values)}")
            vec = _parse_floats(values, lineno)
            if token in vocab:
                duplicates += 1
                continue
            vocab[token] = len(rows)
            rows.append(vec)
    if dim is None:
        raise EmbeddingFormatError(f"{path}: no embeddings found")
    if duplicates:
        log.warning("%s: %d duplicate tokens ignored (first occurrence kept)", path, duplicates)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingStore(dim, vocab, matrix, case_fallback, duplicates)


def lookup(store: EmbeddingStore, token: str) -> tuple[np.ndarray, bool]:
    """Vector for ``token`` and whether it was found; unknown tokens get zeros."""
    row = store.index(token)
    if row is None:
        return store._zero, False
    return store.matrix[row], True


def coverage(store: EmbeddingStore, tokens: Iterable[str]) -> float:
    tokens = list(tokens)
    if not tokens:
        return 1.0
    return sum(store.index(t) is not None for t in tokens) / len(tokens)


def save_embeddings(path: str | os.PathLike, words: Iterable[str], matrix: np.ndarray,
                    header: bool = False) -> None:
    words = list(words)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(words)} {matrix.shape[1]}\n")
        for w, row in zip(words, matrix):
            fh.write(w + " " + " ".join(repr(float(x)) for x in row) + "\n")


class WordEmbeddings(Stage):
    """Attaches a word vector to every token of the token column."""

    def __init__(self, store: EmbeddingStore, name: str = "embeddings",
                 input_columns: tuple[str, str] = ("sentence", "token"),
                 output_column: str = "embeddings"):
        super().__init__(StageSpec(name, tuple(input_columns), output_column, Kind.WORD_EMBEDDING,
                                   (Kind.SENTENCE, Kind.TOKEN)))
        self.store = store

    def annotate(self, record: Record) -> list[Annotation]:
        out = []
        for tok in record.columns[self.spec.input_columns[1]]:
            vec, covered = lookup(self.store, tok.result)
            meta = {"sentence": tok.metadata.get("sentence", "0"),
                    "covered": "true" if covered else "false"}
            out.append(Annotation(Kind.WORD_EMBEDDING, tok.begin, tok.end, tok.result, meta, vec))
        return out
