"""Windowed Bi-LSTM assertion status classifier.

For a target chunk, only the tokens from 9 before its first token to 15 after
its last token are read. Each scope token is its word vector concatenated
with a learned embedding of an inside/outside-target flag; the final forward
and backward Bi-LSTM states feed a dense softmax over the six labels.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .annotation import Annotation, Kind, Record, Stage, StageSpec
from .embeddings import EmbeddingStore
from .nn import (AdamState, BiLSTM, Dense, Dropout, Embedding, ModelFileError, Parameter,
                 adam_step, load_parameters, save_parameters, softmax, softmax_xent)

LABELS = ("present", "absent", "possible", "conditional", "hypothetical",
          "associated_with_someone_else")

DISPLAY_NAMES = {
    "present": "Present",
    "absent": "Absent",
    "possible": "Possible",
    "conditional": "Conditional",
    "hypothetical": "Hypothetical",
    "associated_with_someone_else": "Someone-else",
}

PREDICT_BATCH = 64


def parse_label(name: str) -> str:
    """Accept enum values or display names, case-insensitively."""
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    if key in LABELS:
        return key
    for label, display in DISPLAY_NAMES.items():
        if display.lower().replace("-", "_") == key:
            return label
    raise ValueError(f"unknown assertion label {name!r}")


@dataclass
class AssertionConfig:
    left_window: int = 9
    right_window: int = 15
    learning_rate: float = 0.0012
    dropout: float = 0.05
    batch_size: int = 64
    max_sentence_length: int = 250
    epochs: int = 20
    lstm_hidden: int = 128
    flag_dim: int = 10
    seed: int = 42

    def __post_init__(self):
        if self.left_window < 0 or self.right_window < 0:
            raise ValueError("windows must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for name in ("batch_size", "max_sentence_length", "epochs", "lstm_hidden", "flag_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class AssertionExample:
    tokens: list[str]
    target_first: int
    target_last: int
    label: str | None = None

    def __post_init__(self):
        if not 0 <= self.target_first <= self.target_last < len(self.tokens):
            raise ValueError(f"invalid target span [{self.target_first}, {self.target_last}] "
                             f"for {len(self.tokens)} tokens")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"unknown assertion label {self.label!r}")


def extract_scope(n_tokens: int | Sequence[str], target_first: int, target_last: int,
                  config: AssertionConfig = AssertionConfig()) -> tuple[list[int], list[bool]]:
    """Token indices of the scope window and, per index, whether it is inside the target."""
    n = n_tokens if isinstance(n_tokens, int) else len(n_tokens)
    if not 0 <= target_first <= target_last < n:
        raise ValueError(f"invalid target span [{target_first}, {target_last}] for {n} tokens")
    lo = max(0, target_first - config.left_window)
    hi = min(n - 1, target_last + config.right_window)
    idx = list(range(lo, hi + 1))
    return idx, [target_first <= i <= target_last for i in idx]


def truncate(tokens: Sequence[str], first: int, last: int, max_len: int) -> tuple[list[str], int, int]:
    """Cut a sentence longer than ``max_len`` to a window centred on the target."""
    n = len(tokens)
    if n <= max_len:
        return list(tokens), first, last
    centre = (first + last) // 2
    start = min(max(0, centre - max_len // 2), n - max_len)
    if first < start:  # target longer than max_len: keep its beginning
        start = first
    return list(tokens[start:start + max_len]), first - start, min(last - start, max_len - 1)


class AssertionNetwork:
    def __init__(self, config: AssertionConfig, word_dim: int, n_labels: int, rng: np.random.Generator):
        self.word_dim = word_dim
        self.flag_emb = Embedding(2, config.flag_dim, rng, "flag_embedding")
        self.drop_in = Dropout(config.dropout)
        self.bilstm = BiLSTM(word_dim + config.flag_dim, config.lstm_hidden, rng, "bilstm")
        self.drop_out = Dropout(config.dropout)
        self.output = Dense(2 * config.lstm_hidden, n_labels, rng, "output")
        self._shape = None

    def params(self) -> list[Parameter]:
        return self.flag_emb.params() + self.bilstm.params() + self.output.params()

    def forward(self, words: np.ndarray, flags: np.ndarray, lengths: np.ndarray,
                training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        fe = self.flag_emb.forward(flags)
        x = self.drop_in.forward(np.concatenate([words, fe], axis=-1), rng, training)
        out = self.bilstm.forward(x, lengths)
        final = self.drop_out.forward(self.bilstm.final_states(out, lengths), rng, training)
        self._shape = (lengths, words.shape[1])
        return self.output.forward(final)

    def backward(self, dlogits: np.ndarray) -> None:
        lengths, T = self._shape
        dfinal = self.drop_out.backward(self.output.backward(dlogits))
        dx = self.drop_in.backward(self.bilstm.backward(self.bilstm.final_states_backward(dfinal, lengths, T)))
        self.flag_emb.backward(dx[..., self.word_dim:])

    def loss(self, words, flags, lengths, targets, training=False, rng=None, backward=True) -> float:
        for p in self.params():
            p.zero_grad()
        logits = self.forward(words, flags, lengths, training, rng)
        loss, d = softmax_xent(logits, targets)
        if backward:
            self.backward(d)
        return loss


@dataclass
class AssertionModel:
    config: AssertionConfig
    labels: list[str]
    word_dim: int
    network: AssertionNetwork = field(repr=False)
    # not serialized; attach with load_model(path, store)
    store: EmbeddingStore | None = field(default=None, repr=False, compare=False)

    def scope_inputs(self, tokens: Sequence[str], first: int, last: int,
                     vectors: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Word vectors and target flags of the scope window."""
        if vectors is not None and len(vectors) != len(tokens):
            raise ValueError("one word vector per token required")
        n = len(tokens)
        offset = 0
        if n > self.config.max_sentence_length:
            kept, new_first, new_last = truncate(tokens, first, last, self.config.max_sentence_length)
            offset = first - new_first
            tokens, first, last = kept, new_first, new_last
        idx, flags = extract_scope(len(tokens), first, last, self.config)
        if vectors is None:
            if self.store is None:
                raise ValueError("assertion model has no embedding store attached")
            words = self.store.vectors([tokens[i] for i in idx])
        else:
            words = np.asarray(vectors, dtype=np.float64)[[i + offset for i in idx]]
        if words.shape[1] != self.word_dim:
            raise ValueError(f"word vector dimension {words.shape[1]} != {self.word_dim}")
        return words, np.asarray(flags, dtype=np.int64)


def _pack(inputs: Sequence[tuple[np.ndarray, np.ndarray]], word_dim: int
          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.array([len(f) for _, f in inputs], dtype=np.int64)
    T = int(lengths.max())
    words = np.zeros((len(inputs), T, word_dim))
    flags = np.zeros((len(inputs), T), dtype=np.int64)
    for b, (w, f) in enumerate(inputs):
        words[b, :len(f)] = w
        flags[b, :len(f)] = f
    return words, flags, lengths


def _scores(model: AssertionModel, inputs: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    out = np.empty((len(inputs), len(model.labels)))
    for start in range(0, len(inputs), PREDICT_BATCH):
        part = inputs[start:start + PREDICT_BATCH]
        words, flags, lengths = _pack(part, model.word_dim)
        out[start:start + len(part)] = softmax(model.network.forward(words, flags, lengths))
    return out


def _rngs(seed: int) -> tuple[np.random.Generator, ...]:
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def train_assertion(config: AssertionConfig, examples: Sequence[AssertionExample],
                    store: EmbeddingStore, labels: Sequence[str] = LABELS
                    ) -> tuple[AssertionModel, dict[str, list[float]]]:
    if not examples:
        raise ValueError("empty examples")
    labels = list(labels)
    for lab in labels:
        if lab not in LABELS:
            raise ValueError(f"unknown assertion label {lab!r}")
    label_index = {lab: i for i, lab in enumerate(labels)}
    for ex in examples:
        if ex.label not in label_index:
            raise ValueError(f"example label {ex.label!r} not in label list")
    init_rng, shuffle_rng, dropout_rng = _rngs(config.seed)
    network = AssertionNetwork(config, store.dimension, len(labels), init_rng)
    model = AssertionModel(config, labels, store.dimension, network, store)
    inputs = [model.scope_inputs(ex.tokens, ex.target_first, ex.target_last) for ex in examples]
    targets = np.array([label_index[ex.label] for ex in examples])
    state = AdamState(base_lr=config.learning_rate)
    params = network.params()
    history: dict[str, list[float]] = {"train_loss": [], "train_accuracy": []}
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(examples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            words, flags, lengths = _pack([inputs[i] for i in idx], model.word_dim)
            losses.append(network.loss(words, flags, lengths, targets[idx], training=True, rng=dropout_rng))
            adam_step(params, state, epoch)
        history["train_loss"].append(float(np.mean(losses)))
        pred = _scores(model, inputs).argmax(axis=1)
        history["train_accuracy"].append(float((pred == targets).mean()))
    return model, history


def predict_assertion(model: AssertionModel, tokens: Sequence[str], target_first: int,
                      target_last: int, vectors: np.ndarray | None = None) -> tuple[str, dict[str, float]]:
    scores = _scores(model, [model.scope_inputs(tokens, target_first, target_last, vectors)])[0]
    best = int(scores.argmax())  # lowest index wins ties
    return model.labels[best], {lab: float(s) for lab, s in zip(model.labels, scores)}


def predict_many(model: AssertionModel, examples: Sequence[AssertionExample]) -> list[str]:
    if not examples:
        return []
    scores = _scores(model, [model.scope_inputs(e.tokens, e.target_first, e.target_last) for e in examples])
    return [model.labels[i] for i in scores.argmax(axis=1)]


# --------------------------------------------------------------------------
# Records and persistence
# --------------------------------------------------------------------------

def read_examples(path: str | os.PathLike) -> list[AssertionExample]:
    """JSON Lines with ``tokens``, ``target_first``, ``target_last``, ``label``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                label = d.get("label")
                out.append(AssertionExample(list(d["tokens"]), int(d["target_first"]),
                                            int(d["target_last"]),
                                            None if label is None else parse_label(label)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    return out


def write_examples(path: str | os.PathLike, examples: Sequence[Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"tokens": ex.tokens, "target_first": ex.target_first,
                                 "target_last": ex.target_last, "label": ex.label}) + "\n")


def save_model(model: AssertionModel, path: str | os.PathLike) -> None:
    meta = {"model": "assertion", "config": asdict(model.config), "labels": model.labels,
            "word_dim": model.word_dim}
    save_parameters(path, model.network.params(), meta)


def load_model(path: str | os.PathLike, store: EmbeddingStore | None = None) -> AssertionModel:
    values, meta = load_parameters(path)
    if meta.get("model") != "assertion":
        raise ModelFileError(f"{path}: not an assertion model file")
    config = AssertionConfig(**meta["config"])
    network = AssertionNetwork(config, meta["word_dim"], len(meta["labels"]), np.random.default_rng(0))
    params = network.params()
    if {p.name for p in params} != set(values):
        raise ModelFileError(f"{path}: parameter set does not match the architecture")
    for p in params:
        if values[p.name].shape != p.value.shape:
            raise ModelFileError(f"{path}: parameter {p.name} has the wrong shape")
        p.value[...] = values[p.name]
    if store is not None and store.dimension != meta["word_dim"]:
        raise ValueError(f"embedding dimension {store.dimension} != model word dimension {meta['word_dim']}")
    return AssertionModel(config, meta["labels"], meta["word_dim"], network, store)


def annotate_assertions(model: AssertionModel, record: Record, chunk_column: str = "ner_chunk",
                        token_column: str = "token", embeddings_column: str | None = None
                        ) -> list[Annotation]:
    """One assertion annotation per chunk, spanning the chunk."""
    chunks = record.columns[chunk_column]
    if not chunks:
        return []
    tokens = record.columns[token_column]
    embs = record.columns[embeddings_column] if embeddings_column else None
    by_sentence: dict[str, list[int]] = {}
    for i, tok in enumerate(tokens):
        by_sentence.setdefault(tok.metadata.get("sentence", "0"), []).append(i)

    inputs = []
    for ch in chunks:
        sent = ch.metadata.get("sentence", "0")
        idx = by_sentence.get(sent, [])
        starts = [k for k, i in enumerate(idx) if tokens[i].begin == ch.begin]
        ends = [k for k, i in enumerate(idx) if tokens[i].end == ch.end]
        if not starts or not ends or starts[0] > ends[-1]:
            raise ValueError(f"chunk {ch.result!r} [{ch.begin}, {ch.end}] is not aligned to token boundaries")
        words = [tokens[i].result for i in idx]
        vectors = None
        if embs is not None:
            vectors = np.stack([embs[i].vector for i in idx])
        inputs.append(model.scope_inputs(words, starts[0], ends[-1], vectors))

    scores = _scores(model, inputs)
    out = []
    for ch, row in zip(chunks, scores):
        best = int(row.argmax())
        label = model.labels[best]
        meta = {"assertion": label, "entity": ch.metadata.get("entity", ""), "chunk": ch.result,
                "sentence": ch.metadata.get("sentence", "0"), "confidence": f"{row[best]:.6f}"}
        out.append(Annotation(Kind.ASSERTION, ch.begin, ch.end, label, meta))
    return out


class AssertionDLModel(Stage):
    def __init__(self, model: AssertionModel, name: str = "assertion",
                 input_columns: tuple[str, ...] = ("sentence", "token", "ner_chunk", "embeddings"),
                 output_column: str = "assertion"):
        kinds = (Kind.SENTENCE, Kind.TOKEN, Kind.CHUNK, Kind.WORD_EMBEDDING)[:len(input_columns)]
        super().__init__(StageSpec(name, tuple(input_columns), output_column, Kind.ASSERTION, kinds))
        self.model = model

    def annotate(self, record: Record) -> list[Annotation]:
        cols = self.spec.input_columns
        emb = cols[3] if len(cols) > 3 else None
        return annotate_assertions(self.model, record, chunk_column=cols[2], token_column=cols[1],
                                   embeddings_column=emb)
