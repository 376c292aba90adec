"""Token accuracy, strict chunk-level P/R/F1, and the assertion label report.

All ratios resolve 0/0 to 0.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .tags import Chunk

# Row order and display names of the assertion report.
ASSERTION_REPORT_ORDER = (
    ("absent", "Absent"),
    ("associated_with_someone_else", "Someone-else"),
    ("conditional", "Conditional"),
    ("hypothetical", "Hypothetical"),
    ("possible", "Possible"),
    ("present", "Present"),
)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return _ratio(2 * p * r, p + r)


@dataclass
class LabelScores:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "LabelScores":
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        return cls(tp, fp, fn, p, r, _f1(p, r))


@dataclass
class EvalReport:
    per_label: dict[str, LabelScores] = field(default_factory=dict)
    micro_precision: float = 0.0
    micro_recall: float = 0.0
    micro_f1: float = 0.0
    macro_f1: float = 0.0
    token_accuracy: float | None = None

    @classmethod
    def from_counts(cls, counts: dict[str, tuple[int, int, int]],
                    macro_labels: Iterable[str] | None = None) -> "EvalReport":
        per_label = {lab: LabelScores.from_counts(*c) for lab, c in counts.items()}
        tp = sum(c[0] for c in counts.values())
        fp = sum(c[1] for c in counts.values())
        fn = sum(c[2] for c in counts.values())
        micro_p = _ratio(tp, tp + fp)
        micro_r = _ratio(tp, tp + fn)
        macro_over = list(per_label) if macro_labels is None else list(macro_labels)
        macro = _ratio(sum(per_label[lab].f1 for lab in macro_over), len(macro_over))
        return cls(per_label, micro_p, micro_r, _f1(micro_p, micro_r), macro)


def chunk_prf(gold: Sequence[Iterable[Chunk]], pred: Sequence[Iterable[Chunk]]) -> EvalReport:
    """Exact-match chunk scoring: a prediction counts only if the identical
    (first, last, label) chunk is in the gold set of the same sentence."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted sentences")
    tp: Counter[str] = Counter()
    fp: Counter[str] = Counter()
    fn: Counter[str] = Counter()
    for g, p in zip(gold, pred):
        g_set = {Chunk(*c) for c in g}
        p_set = {Chunk(*c) for c in p}
        for c in p_set:
            (tp if c in g_set else fp)[c.label] += 1
        for c in g_set - p_set:
            fn[c.label] += 1
    labels = sorted(set(tp) | set(fp) | set(fn))
    return EvalReport.from_counts({lab: (tp[lab], fp[lab], fn[lab]) for lab in labels})


def token_accuracy(gold: Sequence, pred: Sequence) -> float:
    """Fraction of matching positions. Accepts flat sequences or sequences of
    per-sentence sequences."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} vs {len(pred)}")
    if gold and not isinstance(gold[0], str) and isinstance(gold[0], Sequence):
        for g, p in zip(gold, pred):
            if len(g) != len(p):
                raise ValueError(f"length mismatch: {len(g)} vs {len(p)}")
        gold = [t for s in gold for t in s]
        pred = [t for s in pred for t in s]
    if not gold:
        raise ValueError("empty evaluation")
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def assertion_report(gold: Sequence[str], pred: Sequence[str]) -> EvalReport:
    """Per-label report for single-label classification, rows in the fixed
    assertion order; micro F1 here equals accuracy."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} vs {len(pred)}")
    known = {key for key, _ in ASSERTION_REPORT_ORDER}
    for lab in list(gold) + list(pred):
        if lab not in known:
            raise ValueError(f"unknown assertion label {lab!r}")
    counts = {}
    for key, _ in ASSERTION_REPORT_ORDER:
        tp = sum(g == key and p == key for g, p in zip(gold, pred))
        fp = sum(g != key and p == key for g, p in zip(gold, pred))
        fn = sum(g == key and p != key for g, p in zip(gold, pred))
        counts[key] = (tp, fp, fn)
    seen = [key for key, _ in ASSERTION_REPORT_ORDER if key in set(gold) | set(pred)]
    report = EvalReport.from_counts(counts, macro_labels=seen)
    if gold:
        report.token_accuracy = sum(g == p for g, p in zip(gold, pred)) / len(gold)
    return report


def _display(label: str) -> str:
    return dict(ASSERTION_REPORT_ORDER).get(label, label)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "per_label": {lab: asdict(s) for lab, s in report.per_label.items()},
        "micro_precision": report.micro_precision,
        "micro_recall": report.micro_recall,
        "micro_f1": report.micro_f1,
        "macro_f1": report.macro_f1,
        "token_accuracy": report.token_accuracy,
    }


def report_from_dict(d: dict) -> EvalReport:
    return EvalReport(
        per_label={lab: LabelScores(**s) for lab, s in d["per_label"].items()},
        micro_precision=d["micro_precision"],
        micro_recall=d["micro_recall"],
        micro_f1=d["micro_f1"],
        macro_f1=d["macro_f1"],
        token_accuracy=d.get("token_accuracy"),
    )


def format_report(report: EvalReport, style: str = "table") -> str:
    if style == "json":
        return json.dumps(report_to_dict(report), indent=2)
    if style != "table":
        raise ValueError(f"unknown report style {style!r}")
    rows = [("label", "precision", "recall", "f1")]
    for lab, s in report.per_label.items():
        rows.append((_display(lab), f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}"))
    rows.append(("micro F1", f"{report.micro_precision:.4f}", f"{report.micro_recall:.4f}",
                 f"{report.micro_f1:.4f}"))
    rows.append(("macro F1", "", "", f"{report.macro_f1:.4f}"))
    if report.token_accuracy is not None:
        rows.append(("accuracy", "", "", f"{report.token_accuracy:.4f}"))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{r[0]:<{width}}  {r[1]:>9}  {r[2]:>9}  {r[3]:>9}".rstrip() for r in rows)
