"""Columnar annotation model and the pipeline engine.

A :class:`Record` holds one document's text plus named columns of
:class:`Annotation` objects. Stages read some columns and append exactly one
new column; a :class:`Pipeline` is validated, fitted into a
:class:`PipelineModel`, and applied with :func:`transform`.

Offsets are indices into the Python ``str`` (Unicode scalar values), 0-based,
and ``end`` is inclusive.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

import numpy as np

TEXT_COLUMN = "text"
ERRORS_COLUMN = "errors"


class Kind(str, Enum):
    DOCUMENT = "document"
    SENTENCE = "sentence"
    TOKEN = "token"
    WORD_EMBEDDING = "word_embedding"
    NAMED_ENTITY_TAG = "named_entity_tag"
    CHUNK = "chunk"
    ASSERTION = "assertion"
    ERROR = "error"


@dataclass(slots=True)
class Annotation:
    kind: Kind
    begin: int
    end: int
    result: str
    metadata: dict[str, str] = field(default_factory=dict)
    vector: np.ndarray | None = None

    def to_dict(self, include_vector: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "kind": self.kind.value,
            "begin": self.begin,
            "end": self.end,
            "result": self.result,
            "metadata": self.metadata,
        }
        if include_vector and self.vector is not None:
            d["vector"] = [float(v) for v in self.vector]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Annotation":
        vector = d.get("vector")
        return cls(
            kind=Kind(d["kind"]),
            begin=int(d["begin"]),
            end=int(d["end"]),
            result=d["result"],
            metadata={str(k): str(v) for k, v in d.get("metadata", {}).items()},
            vector=None if vector is None else np.asarray(vector, dtype=np.float64),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Annotation):
            return NotImplemented
        if (self.kind, self.begin, self.end, self.result, self.metadata) != (
            other.kind, other.begin, other.end, other.result, other.metadata
        ):
            return False
        if self.vector is None or other.vector is None:
            return self.vector is None and other.vector is None
        return np.array_equal(self.vector, other.vector)


@dataclass(slots=True)
class Record:
    id: str
    text: str
    columns: dict[str, list[Annotation]] = field(default_factory=dict)

    def to_dict(self, include_vectors: bool = True) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "columns": {
                name: [a.to_dict(include_vectors) for a in anns]
                for name, anns in self.columns.items()
            },
        }

    def to_json(self, include_vectors: bool = True) -> str:
        return json.dumps(self.to_dict(include_vectors), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Record":
        columns = {
            name: [Annotation.from_dict(a) for a in anns]
            for name, anns in d.get("columns", {}).items()
        }
        return cls(id=str(d["id"]), text=d["text"], columns=columns)


def write_jsonl(records: Iterable[Record], path: str | os.PathLike, include_vectors: bool = True) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json(include_vectors))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(Record.from_dict(json.loads(line)))
    return records


# --------------------------------------------------------------------------
# Annotation invariants (debug validator)
# --------------------------------------------------------------------------

def check_annotation(ann: Annotation, text: str) -> list[str]:
    """Return the invariant violations of ``ann`` against its source text."""
    problems = []
    if ann.kind is Kind.ERROR:
        return problems
    if ann.kind is Kind.DOCUMENT and ann.result == "":
        if (ann.begin, ann.end) != (0, 0):
            problems.append("empty document marker must span [0, 0]")
        return problems
    if ann.begin > ann.end:
        problems.append(f"begin {ann.begin} > end {ann.end}")
    if ann.begin < 0 or ann.end >= len(text):
        problems.append(f"span [{ann.begin}, {ann.end}] outside text of length {len(text)}")
        return problems
    if ann.kind is Kind.TOKEN:
        covered = text[ann.begin:ann.end + 1]
        if ann.metadata.get("normalized") == "true":
            if ann.result not in covered:
                problems.append(f"normalized token {ann.result!r} not inside {covered!r}")
        elif ann.result != covered:
            problems.append(f"token result {ann.result!r} != source slice {covered!r}")
    if ann.kind is Kind.WORD_EMBEDDING and ann.vector is None:
        problems.append("word embedding without vector")
    return problems


def check_record(record: Record) -> list[str]:
    problems = []
    for name, anns in record.columns.items():
        for i, ann in enumerate(anns):
            problems.extend(f"{name}[{i}]: {p}" for p in check_annotation(ann, record.text))
        if anns and anns[0].kind in (Kind.SENTENCE, Kind.TOKEN):
            for i, (a, b) in enumerate(zip(anns, anns[1:])):
                if (a.begin, a.end) > (b.begin, b.end):
                    problems.append(f"{name}[{i + 1}]: not sorted")
                if b.begin <= a.end:
                    problems.append(f"{name}[{i + 1}]: overlaps previous")
    return problems


# --------------------------------------------------------------------------
# Stages and pipelines
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StageSpec:
    name: str
    input_columns: tuple[str, ...]
    output_column: str
    produces: Kind
    # expected kind per input column; None means any
    input_kinds: tuple[Kind | None, ...] = ()


class Stage:
    """A fitted (appliable) stage: reads input columns, returns one new column."""

    trainable = False

    def __init__(self, spec: StageSpec):
        self.spec = spec

    @property
    def name(self) -> str:
        return self.spec.name

    def annotate(self, record: Record) -> list[Annotation]:
        raise NotImplementedError

    def __repr__(self) -> str:
        s = self.spec
        return f"{type(self).__name__}({s.name!r}: {list(s.input_columns)} -> {s.output_column!r})"


class Approach(Stage):
    """A trainable stage; :meth:`fit` turns it into an appliable :class:`Stage`."""

    trainable = True

    def fit(self, records: list[Record]) -> Stage:
        raise NotImplementedError

    def annotate(self, record: Record) -> list[Annotation]:
        raise TypeError(f"stage {self.name} must be fitted before use")


class PipelineError(ValueError):
    pass


@dataclass
class Pipeline:
    stages: list[Stage]
    # columns supplied by the input records rather than by a stage
    inputs: tuple[str, ...] = (TEXT_COLUMN,)


@dataclass(frozen=True)
class PipelineModel:
    stages: tuple[Stage, ...]
    inputs: tuple[str, ...] = (TEXT_COLUMN,)

    @property
    def output_columns(self) -> list[str]:
        return [s.spec.output_column for s in self.stages]


def validate(pipeline: Pipeline | PipelineModel) -> list[str]:
    """Dependency errors of ``pipeline``; an empty list means it is valid."""
    errors: list[str] = []
    available: dict[str, Kind | None] = {col: None for col in pipeline.inputs}
    for stage in pipeline.stages:
        spec = stage.spec
        if spec.output_column in spec.input_columns:
            errors.append(f"stage {spec.name}: output column '{spec.output_column}' is also an input")
        kinds = spec.input_kinds or (None,) * len(spec.input_columns)
        for col, want in zip(spec.input_columns, kinds):
            if col not in available:
                errors.append(f"stage {spec.name}: missing input column '{col}'")
                continue
            have = available[col]
            if want is not None and have is not None and have is not want:
                errors.append(
                    f"stage {spec.name}: wrong kind for column '{col}' "
                    f"(expected {want.value}, got {have.value})"
                )
        if spec.output_column in available:
            errors.append(f"stage {spec.name}: duplicate output column '{spec.output_column}'")
        else:
            available[spec.output_column] = spec.produces
    return errors


def _ensure_valid(pipeline: Pipeline | PipelineModel) -> None:
    errors = validate(pipeline)
    if errors:
        raise PipelineError("; ".join(errors))


def _apply_stage(stage: Stage, record: Record) -> Record:
    columns = dict(record.columns)
    columns[stage.spec.output_column] = stage.annotate(record)
    return Record(record.id, record.text, columns)


def fit(pipeline: Pipeline, dataset: list[Record]) -> PipelineModel:
    """Fit trainable stages in order, each on the output of all earlier stages."""
    _ensure_valid(pipeline)
    fitted: list[Stage] = []
    last_trainable = max((i for i, s in enumerate(pipeline.stages) if s.trainable), default=-1)
    records = list(dataset)
    for i, stage in enumerate(pipeline.stages):
        if stage.trainable:
            try:
                stage = stage.fit(records)  # type: ignore[attr-defined]
            except Exception as exc:
                raise PipelineError(f"{exc} in stage {stage.name}") from exc
        fitted.append(stage)
        if i < last_trainable:
            try:
                records = [_apply_stage(stage, r) for r in records]
            except Exception as exc:
                raise PipelineError(f"{exc} in stage {stage.name}") from exc
    return PipelineModel(tuple(fitted), pipeline.inputs)


def error_annotation(stage_name: str, exc: BaseException) -> Annotation:
    return Annotation(
        Kind.ERROR, 0, 0, f"{type(exc).__name__}: {exc}",
        {"stage": stage_name, "error": type(exc).__name__},
    )


def transform_record(model: PipelineModel, record: Record) -> Record:
    """Apply every stage to one record; a failing stage ends processing of that
    record and is logged in the ``errors`` column."""
    columns = dict(record.columns)
    work = Record(record.id, record.text, columns)
    for stage in model.stages:
        try:
            columns[stage.spec.output_column] = stage.annotate(work)
        except Exception as exc:
            columns.setdefault(ERRORS_COLUMN, [])
            columns[ERRORS_COLUMN] = columns[ERRORS_COLUMN] + [error_annotation(stage.name, exc)]
            break
    return work


# Worker-process state; set once per worker by the pool initializer.
_WORKER_MODEL: PipelineModel | None = None
_WORKER_EMIT: Callable[[Record], Any] | None = None


def _init_worker(model: PipelineModel, emit: Callable[[Record], Any] | None) -> None:
    global _WORKER_MODEL, _WORKER_EMIT
    _WORKER_MODEL = model
    _WORKER_EMIT = emit


def _run_chunk(records: list[Record]) -> list[Any]:
    assert _WORKER_MODEL is not None
    out = [transform_record(_WORKER_MODEL, r) for r in records]
    if _WORKER_EMIT is not None:
        return [_WORKER_EMIT(r) for r in out]
    return out


def _mp_context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("fork" if "fork" in methods else None)


def run_parallel(
    model: PipelineModel,
    records: Sequence[Record],
    workers: int = 1,
    emit: Callable[[Record], Any] | None = None,
    chunks_per_worker: int = 4,
) -> list[Any]:
    """Transform ``records`` on ``workers`` processes, preserving input order.

    ``emit`` (a picklable top-level function) post-processes each transformed
    record inside the worker, e.g. serializing it so that only strings travel
    back to the parent.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    records = list(records)
    if workers == 1 or len(records) <= 1:
        _init_worker(model, emit)
        try:
            return _run_chunk(records)
        finally:
            _init_worker(None, None)  # type: ignore[arg-type]
    size = max(1, math.ceil(len(records) / (workers * chunks_per_worker)))
    chunks = [records[i:i + size] for i in range(0, len(records), size)]
    with ProcessPoolExecutor(
        max_workers=workers, mp_context=_mp_context(),
        initializer=_init_worker, initargs=(model, emit),
    ) as pool:
        results: list[Any] = []
        for part in pool.map(_run_chunk, chunks):
            results.extend(part)
    return results


def transform(model: PipelineModel, records: Sequence[Record], workers: int = 1) -> list[Record]:
    """Apply ``model`` to ``records``. Append-only; output order equals input order."""
    if not records:
        return []
    _ensure_valid(model)
    for r in records:
        if r.text is None:
            raise PipelineError(f"record {r.id} has no text")
    return run_parallel(model, records, workers)
