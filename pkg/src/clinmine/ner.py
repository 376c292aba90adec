"""BiLSTM-CNN-char named entity tagger.

Per token, a character CNN (embedding -> convolution -> max-pool) feature is
concatenated with the frozen pretrained word vector; a BiLSTM runs over the
sentence and a dense layer with softmax scores the tags at each position.
There is no CRF: ill-formed output is repaired by lenient decoding.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import tags as tagcodec
from .annotation import Annotation, Approach, Kind, Record, Stage, StageSpec
from .embeddings import EmbeddingStore
from .evaluation import chunk_prf, token_accuracy
from .nn import (AdamState, BiLSTM, CharCNN, Dense, Dropout, Embedding, ModelFileError,
                 Parameter, adam_step, load_parameters, save_parameters, softmax, softmax_xent)
from .tags import TagError, TagScheme

log = logging.getLogger(__name__)

# Longer tokens are cut to this many characters before the char CNN.
MAX_WORD_CHARS = 64
PREDICT_BATCH = 32

CONLL_COLUMNS = ("text", "document", "sentence", "token", "label")


@dataclass
class NerConfig:
    max_epochs: int = 10
    learning_rate: float = 0.001
    decay_po: float = 0.005
    batch_size: int = 8
    dropout: float = 0.5
    validation_split: float = 0.2
    char_embedding_dim: int = 25
    char_filters: int = 30
    char_window: int = 3
    lstm_hidden: int = 200
    tag_scheme: TagScheme = TagScheme.BIO
    seed: int = 42

    def __post_init__(self):
        self.tag_scheme = tagcodec.scheme_of(self.tag_scheme)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.validation_split < 1.0:
            raise ValueError("validation_split must be in [0, 1)")
        for name in ("max_epochs", "batch_size", "char_embedding_dim", "char_filters",
                     "char_window", "lstm_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tag_scheme"] = self.tag_scheme.value
        return d


@dataclass
class NerDataset:
    sentences: list[tuple[list[str], list[str]]]
    label_vocab: list[str]
    char_vocab: list[str]  # index 0 is the out-of-vocabulary / padding slot

    def __len__(self) -> int:
        return len(self.sentences)


def build_label_vocab(tag_seqs: Sequence[Sequence[str]]) -> list[str]:
    labels = {t for seq in tag_seqs for t in seq}
    labels.discard(tagcodec.OUTSIDE)
    return [tagcodec.OUTSIDE] + sorted(labels)


def build_char_vocab(token_seqs: Sequence[Sequence[str]]) -> list[str]:
    chars = {c for seq in token_seqs for tok in seq for c in tok}
    return [""] + sorted(chars)


def make_dataset(sentences: list[tuple[list[str], list[str]]], scheme: TagScheme | str = "BIO",
                 strict: bool = True) -> NerDataset:
    for i, (toks, tgs) in enumerate(sentences):
        if len(toks) != len(tgs):
            raise ValueError(f"sentence {i}: {len(toks)} tokens but {len(tgs)} tags")
        if strict:
            try:
                tagcodec.decode(tgs, scheme)
            except TagError as exc:
                raise TagError(f"sentence {i}: {exc}") from None
    return NerDataset(sentences, build_label_vocab([t for _, t in sentences]),
                      build_char_vocab([t for t, _ in sentences]))


def read_conll(path: str | os.PathLike, scheme: TagScheme | str = "BIO", strict: bool = True) -> NerDataset:
    """Whitespace-separated columns, first = token, last = tag; a blank line
    ends a sentence and ``-DOCSTART-`` lines are skipped."""
    sentences: list[tuple[list[str], list[str]]] = []
    toks: list[str] = []
    tgs: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            cols = line.split()
            if not cols:
                if toks:
                    sentences.append((toks, tgs))
                    toks, tgs = [], []
                continue
            if cols[0].startswith("-DOCSTART-"):
                continue
            if len(cols) < 2:
                raise ValueError(f"line {lineno}: missing tag column")
            toks.append(cols[0])
            tgs.append(cols[-1])
    if toks:
        sentences.append((toks, tgs))
    return make_dataset(sentences, scheme, strict)


def conll_to_records(dataset: NerDataset, prefix: str = "conll") -> list[Record]:
    """One record per sentence, with document/sentence/token/label columns,
    for training through a pipeline."""
    records = []
    for i, (toks, tgs) in enumerate(dataset.sentences):
        text = " ".join(toks)
        tokens, labels = [], []
        pos = 0
        for tok, tag in zip(toks, tgs):
            tokens.append(Annotation(Kind.TOKEN, pos, pos + len(tok) - 1, tok, {"sentence": "0"}))
            labels.append(Annotation(Kind.NAMED_ENTITY_TAG, pos, pos + len(tok) - 1, tag,
                                     {"sentence": "0", "word": tok}))
            pos += len(tok) + 1
        end = len(text) - 1
        records.append(Record(f"{prefix}-{i:06d}", text, {
            "document": [Annotation(Kind.DOCUMENT, 0, end, text, {"trim_offset": "0"})],
            "sentence": [Annotation(Kind.SENTENCE, 0, end, text, {"sentence": "0"})],
            "token": tokens,
            "label": labels,
        }))
    return records


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------

@dataclass
class Batch:
    words: np.ndarray       # [B, T, D]
    chars: np.ndarray       # [B, T, Lc] int
    char_lengths: np.ndarray  # [B, T]
    lengths: np.ndarray     # [B]
    targets: np.ndarray | None = None  # [B, T] int

    @property
    def mask(self) -> np.ndarray:
        T = self.words.shape[1]
        return np.arange(T)[None, :] < self.lengths[:, None]


class NerNetwork:
    def __init__(self, config: NerConfig, n_chars: int, n_labels: int, word_dim: int,
                 rng: np.random.Generator):
        self.word_dim = word_dim
        self.char_emb = Embedding(n_chars, config.char_embedding_dim, rng, "char_embedding")
        self.char_cnn = CharCNN(config.char_embedding_dim, config.char_filters, config.char_window,
                                rng, "char_cnn")
        self.drop_in = Dropout(config.dropout)
        self.bilstm = BiLSTM(word_dim + config.char_filters, config.lstm_hidden, rng, "bilstm")
        self.drop_out = Dropout(config.dropout)
        self.output = Dense(2 * config.lstm_hidden, n_labels, rng, "output")

    def params(self) -> list[Parameter]:
        return (self.char_emb.params() + self.char_cnn.params() + self.bilstm.params()
                + self.output.params())

    def forward(self, batch: Batch, training: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        B, T, Lc = batch.chars.shape
        ce = self.char_emb.forward(batch.chars).reshape(B * T, Lc, -1)
        cf = self.char_cnn.forward(ce, batch.char_lengths.reshape(-1)).reshape(B, T, -1)
        x = np.concatenate([batch.words, cf], axis=-1)
        x = self.drop_in.forward(x, rng, training)
        h = self.bilstm.forward(x, batch.lengths)
        h = self.drop_out.forward(h, rng, training)
        return self.output.forward(h)

    def backward(self, dlogits: np.ndarray, batch: Batch) -> None:
        B, T, Lc = batch.chars.shape
        dh = self.drop_out.backward(self.output.backward(dlogits))
        dx = self.drop_in.backward(self.bilstm.backward(dh))
        dcf = dx[..., self.word_dim:].reshape(B * T, -1)
        dce = self.char_cnn.backward(dcf).reshape(B, T, Lc, -1)
        self.char_emb.backward(dce)

    def loss(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None,
             backward: bool = True) -> float:
        for p in self.params():
            p.zero_grad()
        logits = self.forward(batch, training, rng)
        B, T, C = logits.shape
        loss, dlogits = softmax_xent(logits.reshape(-1, C), batch.targets.reshape(-1),
                                     batch.mask.reshape(-1))
        if backward:
            self.backward(dlogits.reshape(B, T, C), batch)
        return loss


@dataclass
class NerModel:
    config: NerConfig
    label_vocab: list[str]
    char_vocab: list[str]
    word_dim: int
    network: NerNetwork = field(repr=False)

    def __post_init__(self):
        self._char_index = {c: i for i, c in enumerate(self.char_vocab) if c}
        self._label_index = {t: i for i, t in enumerate(self.label_vocab)}

    def char_ids(self, token: str) -> list[int]:
        return [self._char_index.get(c, 0) for c in token[:MAX_WORD_CHARS]]

    def make_batch(self, token_seqs: Sequence[Sequence[str]], word_vectors: Sequence[np.ndarray],
                   tag_seqs: Sequence[Sequence[str]] | None = None) -> Batch:
        B = len(token_seqs)
        lengths = np.array([len(s) for s in token_seqs], dtype=np.int64)
        T = int(lengths.max())
        Lc = max(min(len(t), MAX_WORD_CHARS) for s in token_seqs for t in s)
        words = np.zeros((B, T, self.word_dim))
        chars = np.zeros((B, T, Lc), dtype=np.int64)
        char_lengths = np.zeros((B, T), dtype=np.int64)
        targets = np.zeros((B, T), dtype=np.int64) if tag_seqs is not None else None
        for b, toks in enumerate(token_seqs):
            vecs = np.asarray(word_vectors[b], dtype=np.float64)
            if vecs.shape != (len(toks), self.word_dim):
                raise ValueError(f"word vectors of shape {vecs.shape}, expected "
                                 f"({len(toks)}, {self.word_dim})")
            words[b, :len(toks)] = vecs
            for t, tok in enumerate(toks):
                ids = self.char_ids(tok)
                chars[b, t, :len(ids)] = ids
                char_lengths[b, t] = len(ids)
            if targets is not None:
                targets[b, :len(toks)] = [self._label_index[x] for x in tag_seqs[b]]
        return Batch(words, chars, char_lengths, lengths, targets)


def _new_network(config: NerConfig, n_chars: int, n_labels: int, word_dim: int,
                 rng: np.random.Generator) -> NerNetwork:
    return NerNetwork(config, n_chars, n_labels, word_dim, rng)


def _rngs(seed: int) -> tuple[np.random.Generator, ...]:
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def split_train_validation(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the last ``fraction`` of sentences is held out."""
    order = rng.permutation(n)
    n_val = int(n * fraction)
    return order[:n - n_val], order[n - n_val:]


def length_batches(indices: np.ndarray, lengths: np.ndarray, batch_size: int,
                   rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle, bucket by length (stable sort), cut into batches, shuffle batch order."""
    perm = rng.permutation(indices)
    perm = perm[np.argsort(lengths[perm], kind="stable")]
    batches = [perm[i:i + batch_size] for i in range(0, len(perm), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def _predict_vectors(model: NerModel, token_seqs: Sequence[Sequence[str]],
                     word_vectors: Sequence[np.ndarray]) -> list[tuple[list[str], list[float]]]:
    out: list[tuple[list[str], list[float]] | None] = [None] * len(token_seqs)
    order = sorted(range(len(token_seqs)), key=lambda i: len(token_seqs[i]))
    for start in range(0, len(order), PREDICT_BATCH):
        idx = order[start:start + PREDICT_BATCH]
        batch = model.make_batch([token_seqs[i] for i in idx], [word_vectors[i] for i in idx])
        probs = softmax(model.network.forward(batch, training=False))
        best = probs.argmax(axis=-1)  # lowest index wins ties
        for row, i in enumerate(idx):
            n = len(token_seqs[i])
            tags = [model.label_vocab[k] for k in best[row, :n]]
            confs = [float(probs[row, t, best[row, t]]) for t in range(n)]
            out[i] = (tags, confs)
    return out  # type: ignore[return-value]


def _evaluate(model: NerModel, sentences: Sequence[tuple[list[str], list[str]]],
              vectors: Sequence[np.ndarray]) -> dict[str, float]:
    preds = [tags for tags, _ in _predict_vectors(model, [s[0] for s in sentences], vectors)]
    gold = [s[1] for s in sentences]
    scheme = model.config.tag_scheme
    report = chunk_prf([tagcodec.decode(g, scheme) for g in gold],
                       [tagcodec.decode_lenient(p, scheme) for p in preds])
    return {"token_accuracy": token_accuracy(gold, preds), "micro_f1": report.micro_f1}


def train_on_vectors(config: NerConfig, dataset: NerDataset, vectors: Sequence[np.ndarray]
                     ) -> tuple[NerModel, dict[str, list[float]]]:
    """Train from precomputed per-sentence word vectors ``[T_i, D]``."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    dims = {np.asarray(v).shape[1] for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"inconsistent word vector dimensions {sorted(dims)}")
    word_dim = dims.pop()
    init_rng, shuffle_rng, dropout_rng = _rngs(config.seed)
    network = _new_network(config, len(dataset.char_vocab), len(dataset.label_vocab), word_dim, init_rng)
    model = NerModel(config, list(dataset.label_vocab), list(dataset.char_vocab), word_dim, network)

    train_idx, val_idx = split_train_validation(len(dataset), config.validation_split, shuffle_rng)
    if len(train_idx) == 0:
        raise ValueError("empty dataset after validation split")
    lengths = np.array([len(t) for t, _ in dataset.sentences])
    state = AdamState(base_lr=config.learning_rate, decay_po=config.decay_po)
    params = network.params()
    history: dict[str, list[float]] = {"train_loss": []}
    if len(val_idx):
        history["val_token_accuracy"] = []
        history["val_micro_f1"] = []
    val_sents = [dataset.sentences[i] for i in val_idx]
    val_vecs = [vectors[i] for i in val_idx]

    for epoch in range(config.max_epochs):
        losses = []
        for idx in length_batches(train_idx, lengths, config.batch_size, shuffle_rng):
            batch = model.make_batch([dataset.sentences[i][0] for i in idx],
                                     [vectors[i] for i in idx],
                                     [dataset.sentences[i][1] for i in idx])
            losses.append(network.loss(batch, training=True, rng=dropout_rng))
            adam_step(params, state, epoch)
        history["train_loss"].append(float(np.mean(losses)))
        if len(val_idx):
            scores = _evaluate(model, val_sents, val_vecs)
            history["val_token_accuracy"].append(scores["token_accuracy"])
            history["val_micro_f1"].append(scores["micro_f1"])
        log.info("epoch %d: %s", epoch + 1, {k: v[-1] for k, v in history.items()})
    return model, history


def train(config: NerConfig, dataset: NerDataset, store: EmbeddingStore
          ) -> tuple[NerModel, dict[str, list[float]]]:
    vectors = [store.vectors(toks) for toks, _ in dataset.sentences]
    return train_on_vectors(config, dataset, vectors)


def predict(model: NerModel, tokens: Sequence[str], store: EmbeddingStore) -> list[str]:
    return predict_batch(model, [tokens], store)[0]


def predict_batch(model: NerModel, token_seqs: Sequence[Sequence[str]], store: EmbeddingStore
                  ) -> list[list[str]]:
    if store.dimension != model.word_dim:
        raise ValueError(f"embedding dimension {store.dimension} != model word dimension {model.word_dim}")
    for toks in token_seqs:
        if not toks:
            raise ValueError("cannot tag an empty token list")
    vectors = [store.vectors(t) for t in token_seqs]
    return [tags for tags, _ in _predict_vectors(model, token_seqs, vectors)]


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

def save_model(model: NerModel, path: str | os.PathLike) -> None:
    meta = {
        "model": "ner",
        "config": model.config.to_dict(),
        "label_vocab": model.label_vocab,
        "char_vocab": model.char_vocab,
        "word_dim": model.word_dim,
    }
    save_parameters(path, model.network.params(), meta)


def _assign(params: list[Parameter], values: dict[str, np.ndarray], path) -> None:
    expected = {p.name for p in params}
    if set(values) != expected:
        raise ModelFileError(f"{path}: parameter set does not match the architecture")
    for p in params:
        if values[p.name].shape != p.value.shape:
            raise ModelFileError(f"{path}: parameter {p.name} has shape {values[p.name].shape}, "
                                 f"expected {p.value.shape}")
        p.value[...] = values[p.name]


def load_model(path: str | os.PathLike) -> NerModel:
    values, meta = load_parameters(path)
    if meta.get("model") != "ner":
        raise ModelFileError(f"{path}: not an NER model file")
    config = NerConfig(**meta["config"])
    network = _new_network(config, len(meta["char_vocab"]), len(meta["label_vocab"]),
                           meta["word_dim"], np.random.default_rng(0))
    _assign(network.params(), values, path)
    return NerModel(config, meta["label_vocab"], meta["char_vocab"], meta["word_dim"], network)


def write_manifest(path: str | os.PathLike, model: NerModel, history: dict[str, list[float]],
                   **extra: Any) -> None:
    manifest = {"config": model.config.to_dict(), "labels": model.label_vocab,
                "word_dim": model.word_dim, "history": history, **extra}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# Pipeline stages
# --------------------------------------------------------------------------

def _group_by_sentence(anns: Sequence[Annotation]) -> list[list[int]]:
    groups: list[list[int]] = []
    last = None
    for i, a in enumerate(anns):
        s = a.metadata.get("sentence", "0")
        if s != last:
            groups.append([])
            last = s
        groups[-1].append(i)
    return groups


def _sentence_vectors(record: Record, token_col: str, emb_col: str) -> tuple[list[list[Annotation]], list[np.ndarray]]:
    tokens = record.columns[token_col]
    embs = record.columns[emb_col]
    if len(tokens) != len(embs):
        raise ValueError(f"{len(tokens)} tokens but {len(embs)} embeddings")
    sents, vecs = [], []
    for group in _group_by_sentence(tokens):
        sents.append([tokens[i] for i in group])
        vecs.append(np.stack([embs[i].vector for i in group]))
    return sents, vecs


class NerDLModel(Stage):
    def __init__(self, model: NerModel, name: str = "ner",
                 input_columns: tuple[str, str, str] = ("sentence", "token", "embeddings"),
                 output_column: str = "ner"):
        super().__init__(StageSpec(name, tuple(input_columns), output_column, Kind.NAMED_ENTITY_TAG,
                                   (Kind.SENTENCE, Kind.TOKEN, Kind.WORD_EMBEDDING)))
        self.model = model

    def annotate(self, record: Record) -> list[Annotation]:
        _, token_col, emb_col = self.spec.input_columns
        sents, vecs = _sentence_vectors(record, token_col, emb_col)
        if not sents:
            return []
        preds = _predict_vectors(self.model, [[t.result for t in s] for s in sents], vecs)
        out = []
        for toks, (tags, confs) in zip(sents, preds):
            for tok, tag, conf in zip(toks, tags, confs):
                out.append(Annotation(Kind.NAMED_ENTITY_TAG, tok.begin, tok.end, tag, {
                    "sentence": tok.metadata.get("sentence", "0"), "word": tok.result,
                    "confidence": f"{conf:.6f}"}))
        return out


class NerDLApproach(Approach):
    """Trainable NER stage; reads gold tags from ``label_column``."""

    def __init__(self, config: NerConfig | None = None, name: str = "ner",
                 input_columns: tuple[str, str, str] = ("sentence", "token", "embeddings"),
                 output_column: str = "ner", label_column: str = "label"):
        super().__init__(StageSpec(name, tuple(input_columns), output_column, Kind.NAMED_ENTITY_TAG,
                                   (Kind.SENTENCE, Kind.TOKEN, Kind.WORD_EMBEDDING)))
        self.config = config or NerConfig()
        self.label_column = label_column
        self.history: dict[str, list[float]] | None = None

    def fit(self, records: list[Record]) -> NerDLModel:
        _, token_col, emb_col = self.spec.input_columns
        sentences, vectors = [], []
        for rec in records:
            labels = rec.columns[self.label_column]
            sents, vecs = _sentence_vectors(rec, token_col, emb_col)
            if sum(len(s) for s in sents) != len(labels):
                raise ValueError(f"record {rec.id}: tokens and labels are not aligned")
            k = 0
            for toks, v in zip(sents, vecs):
                sentences.append(([t.result for t in toks], [a.result for a in labels[k:k + len(toks)]]))
                vectors.append(v)
                k += len(toks)
        if not sentences:
            raise ValueError("empty dataset")
        dataset = make_dataset(sentences, self.config.tag_scheme)
        model, self.history = train_on_vectors(self.config, dataset, vectors)
        s = self.spec
        return NerDLModel(model, s.name, s.input_columns, s.output_column)  # type: ignore[arg-type]
