"""Command-line entry point.

Exit codes: 0 success (warnings allowed), 1 usage error, 2 data error,
3 benchmark output mismatch across worker counts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from . import assertion, ner
from .annotation import PipelineError
from .config import load_pipeline
from .corpus import (CorpusError, CorpusSource, EquivalenceError, annotate_corpus, bench_tsv, benchmark,
                     load_annotations, read_source, sample_records, write_reports)
from .embeddings import EmbeddingFormatError, load_embeddings
from .nn import ModelFileError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MISMATCH = 0, 1, 2, 3

log = logging.getLogger("clinmine")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _csv(value: str) -> list[str]:
    return [x.strip() for x in value.split(",") if x.strip()]


def _ints(value: str) -> list[int]:
    try:
        out = [int(x) for x in _csv(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("worker counts must be positive")
    return out


def _positive(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="text directory or JSON Lines file")
    p.add_argument("--input-format", choices=("dir", "jsonl"), default="jsonl")
    p.add_argument("--text-field", default="text")
    p.add_argument("--id-field", default="id")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clinmine", description="Clinical text annotation pipelines.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("annotate", help="run a pipeline over a corpus")
    p.add_argument("--pipeline", required=True)
    _add_source(p)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", type=_positive, help="annotate a seeded random sample of N documents")
    p.add_argument("--output", required=True, help="output directory")

    p = sub.add_parser("train-ner", help="train an NER model on CoNLL data")
    p.add_argument("--input", required=True, help="CoNLL file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--output", required=True, help="model file")
    p.add_argument("--scheme", choices=("BIO", "BIOES"), default="BIO")
    p.add_argument("--epochs", type=_positive)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("train-assertion", help="train an assertion model on JSON Lines examples")
    p.add_argument("--input", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--output", required=True, help="model file")
    p.add_argument("--labels", type=_csv, help="label set (default: all six)")
    p.add_argument("--epochs", type=_positive)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("report", help="reports from an annotations file")
    p.add_argument("--input", required=True, help="annotations.jsonl")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--entity-types", type=_csv)
    p.add_argument("--top-k", type=_positive, default=10)
    p.add_argument("--assertion-entity", help="entity type for the assertion listing")
    p.add_argument("--labels", type=_csv, help="assertion labels to keep")

    p = sub.add_parser("bench", help="time tokenization and the full pipeline across worker counts")
    p.add_argument("--pipeline", required=True)
    _add_source(p)
    p.add_argument("--worker-counts", type=_ints, default=[1, 2, 4])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", type=_positive)
    p.add_argument("--repeats", type=_positive, default=1)
    p.add_argument("--min-bytes", type=int, default=0, help="refuse corpora smaller than this")
    p.add_argument("--output", help="directory for bench.tsv and bench.json")
    return parser


def _source(args) -> CorpusSource:
    return CorpusSource(args.input_format, Path(args.input), args.text_field, args.id_field)


def cmd_annotate(args) -> int:
    model = load_pipeline(args.pipeline)
    summary = annotate_corpus(_source(args), model, args.output, args.workers, args.sample, args.seed)
    print(json.dumps(asdict(summary), indent=2))
    return EXIT_OK


def cmd_train_ner(args) -> int:
    store = load_embeddings(args.embeddings)
    config = ner.NerConfig(tag_scheme=args.scheme, seed=args.seed)
    if args.epochs:
        config.max_epochs = args.epochs
    dataset = ner.read_conll(args.input, config.tag_scheme)
    model, history = ner.train(config, dataset, store)
    ner.save_model(model, args.output)
    ner.write_manifest(args.output + ".json", model, history, sentences=len(dataset.sentences))
    print(json.dumps({k: v[-1] for k, v in history.items() if v}))
    return EXIT_OK


def cmd_train_assertion(args) -> int:
    store = load_embeddings(args.embeddings)
    config = assertion.AssertionConfig(seed=args.seed)
    if args.epochs:
        config.epochs = args.epochs
    examples = assertion.read_examples(args.input)
    labels = [assertion.parse_label(x) for x in args.labels] if args.labels else assertion.LABELS
    model, history = assertion.train_assertion(config, examples, store, labels)
    assertion.save_model(model, args.output)
    with open(args.output + ".json", "w", encoding="utf-8") as fh:
        json.dump({"config": asdict(config), "labels": list(labels), "history": history,
                   "examples": len(examples)}, fh, indent=2, sort_keys=True)
    print(json.dumps({k: v[-1] for k, v in history.items() if v}))
    return EXIT_OK


def cmd_report(args) -> int:
    records = load_annotations(args.input)
    write_reports(records, args.output, args.entity_types, args.top_k, args.assertion_entity, args.labels)
    return EXIT_OK


def cmd_bench(args) -> int:
    model = load_pipeline(args.pipeline)
    records, errors = read_source(_source(args))
    for e in errors:
        log.warning("skipped %s: %s", e.location, e.message)
    records = sample_records(records, args.sample, args.seed)
    size = sum(len(r.text.encode("utf-8")) for r in records)
    if size < args.min_bytes:
        raise CorpusError(f"corpus has {size} bytes, fewer than --min-bytes {args.min_bytes}")
    report = benchmark(records, model, args.worker_counts, args.repeats)
    text = bench_tsv(report)
    print(text, end="")
    if not report.ordering_holds:
        log.warning("full-pipeline speedup exceeds tokenization speedup")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.tsv").write_text(text, encoding="utf-8")
        (out / "bench.json").write_text(json.dumps(asdict(report), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "annotate": cmd_annotate,
    "train-ner": cmd_train_ner,
    "train-assertion": cmd_train_assertion,
    "report": cmd_report,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except EquivalenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (CorpusError, PipelineError, ModelFileError, EmbeddingFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
