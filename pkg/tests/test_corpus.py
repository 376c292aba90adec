import json
import logging

import pytest

from clinmine import synthetic
from clinmine.annotation import Annotation, Kind, PipelineError, Record
from clinmine.assertion import save_model as save_assertion
from clinmine.config import ConfigError, build_pipeline, load_pipeline
from clinmine.corpus import (CorpusError, CorpusSource, EquivalenceError, annotate_corpus, benchmark,
                             load_annotations, read_source, report_assertion_filter, report_entity_matrix,
                             report_top_terms, sample_records, write_reports)
from clinmine.ner import save_model as save_ner

TEXT_STAGES = {"stages": [{"type": "DocumentAssembler"}, {"type": "SentenceDetector"}, {"type": "Tokenizer"}]}


def chunk(text, entity, begin=0):
    return Annotation(Kind.CHUNK, begin, begin + len(text) - 1, text, {"entity": entity, "sentence": "0"})


def assertion(text, entity, label, begin=0):
    return Annotation(Kind.ASSERTION, begin, begin + len(text) - 1, label,
                      {"entity": entity, "chunk": text, "assertion": label})


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def full_pipeline(tmp_path_factory, ner_trained, assertion_trained, vectors_path):
    d = tmp_path_factory.mktemp("pipe")
    save_ner(ner_trained[0], d / "ner.clnm")
    save_assertion(assertion_trained[0], d / "assertion.clnm")
    config = {"stages": TEXT_STAGES["stages"] + [
        {"type": "WordEmbeddings", "path": str(vectors_path)},
        {"type": "NerDLModel", "path": "ner.clnm"},
        {"type": "NerConverter", "scheme": "BIO"},
        {"type": "AssertionDLModel", "path": "assertion.clnm"}]}
    (d / "pipeline.json").write_text(json.dumps(config))
    return d / "pipeline.json"


def test_read_directory_sorted(tmp_path):
    for name in ("b.txt", "a.txt", "c.txt"):
        (tmp_path / name).write_text(f"text of {name}")
    records, errors = read_source(CorpusSource("dir", tmp_path))
    assert [r.id for r in records] == ["a.txt", "b.txt", "c.txt"] and errors == []


def test_read_jsonl_captures_bad_lines(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "2", "text": "b"}\n{oops\n{"id": "1", "text": "a"}\n{"id": "3"}\n'
                    '{"id": "1", "text": "dup"}\n', encoding="utf-8")
    records, errors = read_source(CorpusSource("jsonl", path))
    assert [r.id for r in records] == ["1", "2"]
    assert [e.location for e in errors] == ["line 2", "line 4", "1"]


def test_unreadable_source(tmp_path):
    with pytest.raises(CorpusError):
        read_source(CorpusSource("jsonl", tmp_path / "missing.jsonl"))
    with pytest.raises(CorpusError):
        read_source(CorpusSource("dir", tmp_path / "missing"))


def test_sample_is_seeded():
    records = [Record(f"{i:02d}", "x") for i in range(20)]
    a = sample_records(records, 5, seed=1)
    assert a == sample_records(records, 5, seed=1) and len(a) == 5
    assert [r.id for r in a] == sorted(r.id for r in a)
    assert sample_records(records, None, 0) == records


def test_annotate_empty_directory(tmp_path):
    (tmp_path / "in").mkdir()
    summary = annotate_corpus(CorpusSource("dir", tmp_path / "in"), build_pipeline(TEXT_STAGES), tmp_path / "out")
    assert summary.documents == 0
    assert (tmp_path / "out" / "annotations.jsonl").read_text() == ""


def test_annotate_orders_by_id_for_any_workers(tmp_path):
    docs = synthetic.documents(10, seed=4)
    rows = [{"id": i, "text": t} for i, t in reversed(docs)]
    src = CorpusSource("jsonl", write_jsonl(tmp_path / "c.jsonl", rows))
    outputs = []
    for w in (1, 3):
        annotate_corpus(src, build_pipeline(TEXT_STAGES), tmp_path / f"o{w}", workers=w)
        lines = (tmp_path / f"o{w}" / "annotations.jsonl").read_text().splitlines()
        assert [json.loads(x)["id"] for x in lines] == sorted(i for i, _ in docs)
        outputs.append(lines)
    assert outputs[0] == outputs[1]


def test_annotate_malformed_line(tmp_path, caplog):
    rows = [{"id": f"d{i}", "text": "Fever today."} for i in range(4)]
    path = write_jsonl(tmp_path / "c.jsonl", rows)
    with open(path, "a") as fh:
        fh.write("not json\n")
    with caplog.at_level(logging.WARNING):
        summary = annotate_corpus(CorpusSource("jsonl", path), build_pipeline(TEXT_STAGES), tmp_path / "out")
    assert summary.documents == 4 and summary.input_errors == 1
    assert len((tmp_path / "out" / "annotations.jsonl").read_text().splitlines()) == 4
    assert len((tmp_path / "out" / "errors.jsonl").read_text().splitlines()) == 1
    assert "line 5" in caplog.text
    saved = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert saved["column_totals"]["document"] == 4 and "wall_time_seconds" in saved


def test_full_pipeline_from_config(full_pipeline, tmp_path):
    docs = [("a", "Patient took aspirin. He shows no stomach pain."), ("b", ""), ("c", "Father with Alzheimer.")]
    src = CorpusSource("jsonl", write_jsonl(tmp_path / "c.jsonl", [{"id": i, "text": t} for i, t in docs]))
    summary = annotate_corpus(src, load_pipeline(full_pipeline), tmp_path / "out", workers=2)
    assert summary.documents == 3 and summary.records_with_errors == 0
    records = load_annotations(tmp_path / "out" / "annotations.jsonl")
    assert [r.id for r in records] == ["a", "b", "c"]
    assert "vector" not in (tmp_path / "out" / "annotations.jsonl").read_text()
    first = records[0]
    assert len(first.columns["assertion"]) == len(first.columns["ner_chunk"])


def test_config_errors(tmp_path, vectors_path):
    with pytest.raises(ConfigError):
        build_pipeline({"stages": []})
    with pytest.raises(ConfigError, match="unknown type"):
        build_pipeline({"stages": [{"type": "Lemmatizer"}]})
    with pytest.raises(ConfigError, match="unknown keys"):
        build_pipeline({"stages": [{"type": "DocumentAssembler", "colour": 1}]})
    with pytest.raises(ConfigError, match="WordEmbeddings"):
        build_pipeline({"stages": [{"type": "DocumentAssembler"}, {"type": "AssertionDLModel", "path": "x"}]})
    with pytest.raises(PipelineError, match="missing input column 'sentence'"):
        build_pipeline({"stages": [{"type": "DocumentAssembler"}, {"type": "Tokenizer"}]})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_pipeline(tmp_path / "bad.json")


def test_config_rules_and_columns():
    model = build_pipeline({"stages": [
        {"type": "DocumentAssembler"},
        {"type": "SentenceDetector", "abbreviations": ["pt."]},
        {"type": "Tokenizer", "keep_internal_hyphens": False, "output_column": "tok"},
        {"type": "Normalizer", "input_column": "tok"}]})
    assert model.stages[1].rules.abbreviations == frozenset({"pt."})
    assert model.stages[2].spec.output_column == "tok"
    assert model.stages[3].spec.input_columns == ("tok",)


def planted():
    return [
        Record("d2", "x", {"ner_chunk": [chunk("Cough", "Symptom"), chunk("cough", "Symptom"),
                                         chunk("fever", "Symptom"), chunk("SARS", "Disease")],
                           "assertion": [assertion("Cough", "Symptom", "present"),
                                         assertion("fever", "Symptom", "absent"),
                                         assertion("SARS", "Disease", "present")]}),
        Record("d1", "x", {"ner_chunk": [chunk("cough", "Symptom"), chunk("fever", "Symptom")],
                           "drug_chunk": [chunk("aspirin", "Drug")]}),
        Record("d3", "x", {"ner_chunk": []}),
    ]


def test_top_terms(caplog):
    report = report_top_terms(planted(), ["Symptom", "Drug", "Unknown"], k=2)
    assert report["Symptom"] == [("cough", 3), ("fever", 2)]
    assert report["Drug"] == [("aspirin", 1)]
    assert report["Unknown"] == [] and "Unknown" in caplog.text


def test_top_terms_ties_and_surface_form():
    recs = [Record("a", "x", {"c": [chunk("b", "T"), chunk("a", "T"), chunk("C", "T"), chunk("C", "T"),
                                    chunk("c", "T")]})]
    assert report_top_terms(recs, ["T"], k=10)["T"] == [("C", 3), ("a", 1), ("b", 1)]


def test_entity_matrix():
    m = report_entity_matrix(planted(), ["Symptom", "Disease"])
    assert m.documents == ["d1", "d2", "d3"]
    assert m.counts == [[2, 0], [3, 1], [0, 0]]
    assert m.column_totals == {"ner_chunk": {"Symptom": 5, "Disease": 1}, "drug_chunk": {"Symptom": 0, "Disease": 0}}
    assert report_entity_matrix(planted()).entity_types == ["Disease", "Drug", "Symptom"]


def test_assertion_filter():
    recs = planted()
    assert report_assertion_filter(recs, "Symptom", ["present"]) == [("Cough", "Present")]
    assert report_assertion_filter(recs, None, []) == [("Cough", "Present"), ("fever", "Absent"),
                                                       ("SARS", "Present")]
    assert report_assertion_filter(recs, "Disease", ["Present", "Absent"]) == [("SARS", "Present")]


def test_reports_deterministic(tmp_path):
    a = write_reports(planted(), tmp_path / "a", ["Symptom"], 5)
    b = write_reports(list(reversed(planted())), tmp_path / "b", ["Symptom"], 5)
    assert a == b
    for name in ("top_terms.tsv", "entity_matrix.tsv", "entity_totals.tsv", "assertions.tsv", "reports.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_benchmark_shapes():
    records = [Record(i, t) for i, t in synthetic.documents(12, seed=1)]
    report = benchmark(records, build_pipeline(TEXT_STAGES), [1])
    assert [r.speedup for r in report.rows] == [1.0]
    report = benchmark(records, build_pipeline(TEXT_STAGES | {"stages": TEXT_STAGES["stages"] + [
        {"type": "Normalizer"}]}), [1, 2])
    assert [(r.group, r.workers) for r in report.rows] == [("tokenization", 1), ("tokenization", 2),
                                                           ("ner", 1), ("ner", 2)]


def test_benchmark_detects_mismatch(monkeypatch):
    import clinmine.corpus as corpus

    records = [Record(i, t) for i, t in synthetic.documents(4, seed=1)]
    real = corpus.annotate_records

    def flaky(model, recs, workers=1):
        out = real(model, recs, workers)
        return out if workers == 1 else out[:-1] + ["different"]

    monkeypatch.setattr(corpus, "annotate_records", flaky)
    with pytest.raises(EquivalenceError):
        benchmark(records, build_pipeline(TEXT_STAGES), [1, 2])
