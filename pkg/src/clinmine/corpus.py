"""Corpus ingestion, parallel annotation runs, reports and the scaling benchmark."""

from __future__ import annotations

import json
import logging
import os
import random
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .annotation import ERRORS_COLUMN, Kind, PipelineModel, Record, run_parallel, validate
from .assertion import DISPLAY_NAMES, parse_label
from .text import Tokenizer

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    """The corpus source itself cannot be read."""


class EquivalenceError(RuntimeError):
    """Outputs differ across worker counts."""


class SourceKind(str, Enum):
    TEXT_DIRECTORY = "dir"
    JSONL_FILE = "jsonl"


@dataclass(frozen=True)
class CorpusSource:
    kind: SourceKind
    path: Path
    text_field: str = "text"
    id_field: str = "id"

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        object.__setattr__(self, "path", Path(self.path))


@dataclass
class InputError:
    location: str
    message: str


def read_source(source: CorpusSource) -> tuple[list[Record], list[InputError]]:
    """Records sorted by id plus the entries that could not be read.

    A text directory yields one record per regular file, its name as the id.
    """
    path = source.path
    records: list[Record] = []
    errors: list[InputError] = []
    if source.kind is SourceKind.TEXT_DIRECTORY:
        if not path.is_dir():
            raise CorpusError(f"{path}: not a directory")
        for f in sorted(p for p in path.iterdir() if p.is_file()):
            try:
                records.append(Record(f.name, f.read_text(encoding="utf-8")))
            except (OSError, UnicodeDecodeError) as exc:
                errors.append(InputError(f.name, str(exc)))
    else:
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise CorpusError(f"{path}: {exc.strerror or exc}") from None
        with fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    if not isinstance(d, dict):
                        raise ValueError("expected a JSON object")
                    if not isinstance(d.get(source.text_field), str):
                        raise ValueError(f"missing text field {source.text_field!r}")
                    doc_id = d.get(source.id_field, f"line{lineno:08d}")
                    records.append(Record(str(doc_id), d[source.text_field]))
                except ValueError as exc:
                    errors.append(InputError(f"line {lineno}", str(exc)))
    records.sort(key=lambda r: r.id)
    unique: list[Record] = []
    for r in records:
        if unique and unique[-1].id == r.id:
            errors.append(InputError(r.id, "duplicate document id"))
        else:
            unique.append(r)
    return unique, errors


def sample_records(records: Sequence[Record], n: int | None, seed: int) -> list[Record]:
    """A seeded random sample of ``n`` records, kept in id order."""
    if n is None or n >= len(records):
        return list(records)
    keep = set(random.Random(seed).sample(range(len(records)), n))
    return [r for i, r in enumerate(records) if i in keep]


def _to_json(record: Record) -> str:
    return record.to_json(include_vectors=False)


@dataclass
class RunSummary:
    documents: int
    input_errors: int
    records_with_errors: int
    column_totals: dict[str, int]
    workers: int
    wall_time_seconds: float


def annotate_records(model: PipelineModel, records: Sequence[Record], workers: int = 1) -> list[str]:
    """Serialized annotated records, one JSON line each, in input order."""
    errors = validate(model)
    if errors:
        raise ValueError("; ".join(errors))
    return run_parallel(model, records, workers, emit=_to_json)


def annotate_corpus(source: CorpusSource, model: PipelineModel, output_dir: str | os.PathLike,
                    workers: int = 1, sample: int | None = None, seed: int = 0) -> RunSummary:
    """Write ``annotations.jsonl``, ``errors.jsonl`` and ``summary.json``."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    start = time.perf_counter()
    records, input_errors = read_source(source)
    records = sample_records(records, sample, seed)
    for e in input_errors:
        log.warning("skipped %s: %s", e.location, e.message)
    lines = annotate_records(model, records, workers) if records else []
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    totals: Counter[str] = Counter()
    failed = 0
    with open(out / "annotations.jsonl", "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
            cols = json.loads(line)["columns"]
            for name, anns in cols.items():
                totals[name] += len(anns)
            failed += bool(cols.get(ERRORS_COLUMN))
    with open(out / "errors.jsonl", "w", encoding="utf-8") as fh:
        for e in input_errors:
            fh.write(json.dumps(asdict(e)) + "\n")
    summary = RunSummary(len(lines), len(input_errors), failed, dict(sorted(totals.items())), workers,
                         time.perf_counter() - start)
    (out / "summary.json").write_text(json.dumps(asdict(summary), indent=2) + "\n", encoding="utf-8")
    return summary


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

def load_annotations(path: str | os.PathLike) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    records.append(Record.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorpusError(f"{path}: line {lineno}: {exc}") from None
    return records


def chunk_columns(records: Iterable[Record]) -> list[str]:
    """Names of columns holding chunk annotations, in first-seen order."""
    seen: dict[str, None] = {}
    for r in records:
        for name, anns in r.columns.items():
            if anns and anns[0].kind is Kind.CHUNK:
                seen.setdefault(name, None)
    return list(seen)


def _chunks(record: Record, columns: Sequence[str]):
    for col in columns:
        for a in record.columns.get(col, []):
            if a.kind is Kind.CHUNK:
                yield col, a


def report_top_terms(records: Sequence[Record], entity_types: Sequence[str], k: int = 10
                     ) -> dict[str, list[tuple[str, int]]]:
    """The ``k`` most frequent chunk strings per entity type.

    Counting is case-insensitive; the displayed form is the most frequent
    surface form (lexicographically smallest on ties). Equal counts are
    ordered lexicographically by the lowercased term.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cols = chunk_columns(records)
    counts: dict[str, Counter[str]] = defaultdict(Counter)
    forms: dict[tuple[str, str], Counter[str]] = defaultdict(Counter)
    for r in records:
        for _, a in _chunks(r, cols):
            etype = a.metadata.get("entity", "")
            key = a.result.lower()
            counts[etype][key] += 1
            forms[etype, key][a.result] += 1
    out = {}
    for etype in entity_types:
        if etype not in counts:
            log.warning("entity type %r does not occur in the annotations", etype)
            out[etype] = []
            continue
        ranked = sorted(counts[etype].items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        out[etype] = [(min(forms[etype, key].items(), key=lambda fc: (-fc[1], fc[0]))[0], n)
                      for key, n in ranked]
    return out


@dataclass
class EntityMatrix:
    documents: list[str]
    entity_types: list[str]
    counts: list[list[int]]
    # chunk column -> entity type -> total
    column_totals: dict[str, dict[str, int]] = field(default_factory=dict)


def report_entity_matrix(records: Sequence[Record], entity_types: Sequence[str] | None = None
                         ) -> EntityMatrix:
    cols = chunk_columns(records)
    if entity_types is None:
        entity_types = sorted({a.metadata.get("entity", "") for r in records for _, a in _chunks(r, cols)})
    types = list(entity_types)
    index = {t: i for i, t in enumerate(types)}
    ordered = sorted(records, key=lambda r: r.id)
    rows = []
    totals: dict[str, dict[str, int]] = {c: {t: 0 for t in types} for c in cols}
    for r in ordered:
        row = [0] * len(types)
        for col, a in _chunks(r, cols):
            t = a.metadata.get("entity", "")
            if t in index:
                row[index[t]] += 1
                totals[col][t] += 1
        rows.append(row)
    return EntityMatrix([r.id for r in ordered], types, rows, totals)


def report_assertion_filter(records: Sequence[Record], entity_type: str | None = None,
                            labels: Iterable[str] | None = None) -> list[tuple[str, str]]:
    """(chunk text, assertion display label) rows in document order.

    ``entity_type=None`` keeps every type; empty ``labels`` keeps every label.
    """
    wanted = {parse_label(x) for x in labels} if labels else None
    rows = []
    for r in sorted(records, key=lambda r: r.id):
        for anns in r.columns.values():
            for a in anns:
                if a.kind is not Kind.ASSERTION:
                    continue
                if entity_type is not None and a.metadata.get("entity") != entity_type:
                    continue
                if wanted is not None and a.result not in wanted:
                    continue
                rows.append((a.metadata.get("chunk", r.text[a.begin:a.end + 1]),
                             DISPLAY_NAMES.get(a.result, a.result)))
    return rows


def _tsv(rows: Iterable[Sequence[object]]) -> str:
    return "".join("\t".join(str(x) for x in row) + "\n" for row in rows)


def top_terms_tsv(report: dict[str, list[tuple[str, int]]]) -> str:
    rows: list[Sequence[object]] = [("entity_type", "rank", "term", "count")]
    for etype, terms in report.items():
        rows.extend((etype, i + 1, term, n) for i, (term, n) in enumerate(terms))
    return _tsv(rows)


def entity_matrix_tsv(matrix: EntityMatrix) -> str:
    rows: list[Sequence[object]] = [("document", *matrix.entity_types)]
    rows.extend((doc, *row) for doc, row in zip(matrix.documents, matrix.counts))
    return _tsv(rows)


def column_totals_tsv(matrix: EntityMatrix) -> str:
    rows: list[Sequence[object]] = [("column", *matrix.entity_types, "total")]
    for col, per_type in matrix.column_totals.items():
        vals = [per_type[t] for t in matrix.entity_types]
        rows.append((col, *vals, sum(vals)))
    return _tsv(rows)


def assertion_filter_tsv(rows: Sequence[tuple[str, str]]) -> str:
    return _tsv([("chunk", "assertion"), *rows])


def write_reports(records: Sequence[Record], output_dir: str | os.PathLike,
                  entity_types: Sequence[str] | None = None, k: int = 10,
                  assertion_entity: str | None = None, labels: Sequence[str] | None = None) -> dict:
    """Write every report as TSV plus one combined ``reports.json``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix = report_entity_matrix(records, entity_types)
    top = report_top_terms(records, matrix.entity_types, k)
    assertions = report_assertion_filter(records, assertion_entity, labels)
    (out / "top_terms.tsv").write_text(top_terms_tsv(top), encoding="utf-8")
    (out / "entity_matrix.tsv").write_text(entity_matrix_tsv(matrix), encoding="utf-8")
    (out / "entity_totals.tsv").write_text(column_totals_tsv(matrix), encoding="utf-8")
    (out / "assertions.tsv").write_text(assertion_filter_tsv(assertions), encoding="utf-8")
    combined = {
        "top_terms": {t: [{"term": term, "count": n} for term, n in terms] for t, terms in top.items()},
        "entity_matrix": asdict(matrix),
        "assertions": [{"chunk": c, "assertion": lab} for c, lab in assertions],
    }
    (out / "reports.json").write_text(json.dumps(combined, indent=2, ensure_ascii=False) + "\n",
                                      encoding="utf-8")
    return combined


# --------------------------------------------------------------------------
# Benchmark
# --------------------------------------------------------------------------

@dataclass
class BenchRow:
    group: str
    workers: int
    seconds: float
    docs_per_second: float
    speedup: float


@dataclass
class BenchReport:
    documents: int
    corpus_bytes: int
    rows: list[BenchRow]

    def speedup(self, group: str, workers: int) -> float:
        for r in self.rows:
            if r.group == group and r.workers == workers:
                return r.speedup
        raise KeyError((group, workers))

    @property
    def ordering_holds(self) -> bool:
        """Tokenization scales at least as well as the full pipeline at each worker count."""
        groups = {r.group for r in self.rows}
        if groups != {"tokenization", "ner"}:
            return True
        return all(self.speedup("ner", r.workers) <= r.speedup
                   for r in self.rows if r.group == "tokenization")


def tokenization_prefix(model: PipelineModel) -> PipelineModel:
    """The stages up to and including the last tokenizer."""
    last = max((i for i, s in enumerate(model.stages) if isinstance(s, Tokenizer)), default=-1)
    if last < 0:
        raise ValueError("pipeline has no Tokenizer stage")
    return PipelineModel(model.stages[:last + 1], model.inputs)


def benchmark(records: Sequence[Record], model: PipelineModel, worker_counts: Sequence[int],
              repeats: int = 1) -> BenchReport:
    """Time the tokenization-only prefix and the full pipeline at each worker count.

    Outputs of every worker count are compared with the first before any
    timing is reported; a difference raises :class:`EquivalenceError`.
    """
    counts = list(dict.fromkeys(worker_counts))
    if not counts or min(counts) < 1:
        raise ValueError("worker counts must be positive")
    if 1 not in counts:
        counts.insert(0, 1)
    groups = [("tokenization", tokenization_prefix(model))]
    if len(groups[0][1].stages) < len(model.stages):
        groups.append(("ner", model))
    rows: list[BenchRow] = []
    for name, pipe in groups:
        reference: list[str] | None = None
        times: dict[int, float] = {}
        for w in counts:
            best = float("inf")
            for _ in range(repeats):
                start = time.perf_counter()
                out = annotate_records(pipe, records, w)
                best = min(best, time.perf_counter() - start)
            if reference is None:
                reference = out
            elif out != reference:
                bad = next(i for i, (a, b) in enumerate(zip(out, reference)) if a != b) \
                    if len(out) == len(reference) else -1
                raise EquivalenceError(f"{name} output with {w} workers differs from {counts[0]} workers"
                                       + (f" at document {records[bad].id}" if bad >= 0 else ""))
            times[w] = best
        for w in counts:
            t = times[w]
            rows.append(BenchRow(name, w, t, len(records) / t if t > 0 else float("inf"),
                                 times[1] / t if t > 0 else float("inf")))
    return BenchReport(len(records), sum(len(r.text.encode("utf-8")) for r in records), rows)


def bench_tsv(report: BenchReport) -> str:
    rows: list[Sequence[object]] = [("group", "workers", "seconds", "docs_per_second", "speedup")]
    rows.extend((r.group, r.workers, f"{r.seconds:.4f}", f"{r.docs_per_second:.2f}", f"{r.speedup:.3f}")
                for r in report.rows)
    return _tsv(rows)
