import json

import pytest

from clinmine import cli, synthetic
from clinmine.assertion import write_examples
from clinmine.corpus import EquivalenceError


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, vectors_path):
    d = tmp_path_factory.mktemp("cli")
    synthetic.write_conll(d / "train.conll", synthetic.ner_corpus(30, seed=3))
    write_examples(d / "assert.jsonl", synthetic.assertion_corpus(60, seed=3))
    with open(d / "docs.jsonl", "w") as fh:
        for i, t in synthetic.documents(6, seed=3):
            fh.write(json.dumps({"id": i, "text": t}) + "\n")
    assert cli.main(["train-ner", "--input", str(d / "train.conll"), "--embeddings", str(vectors_path),
                     "--output", str(d / "ner.clnm"), "--epochs", "1"]) == 0
    assert cli.main(["train-assertion", "--input", str(d / "assert.jsonl"), "--embeddings", str(vectors_path),
                     "--output", str(d / "assert.clnm"), "--epochs", "1"]) == 0
    (d / "pipeline.json").write_text(json.dumps({"stages": [
        {"type": "DocumentAssembler"}, {"type": "SentenceDetector"}, {"type": "Tokenizer"},
        {"type": "WordEmbeddings", "path": str(vectors_path)}, {"type": "NerDLModel", "path": "ner.clnm"},
        {"type": "NerConverter"}, {"type": "AssertionDLModel", "path": "assert.clnm"}]}))
    return d


def test_training_writes_models_and_manifests(workspace):
    for name in ("ner.clnm", "ner.clnm.json", "assert.clnm", "assert.clnm.json"):
        assert (workspace / name).exists()
    assert json.loads((workspace / "ner.clnm.json").read_text())["config"]["max_epochs"] == 1


def test_annotate_report_bench(workspace, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["annotate", "--pipeline", str(workspace / "pipeline.json"), "--input",
                     str(workspace / "docs.jsonl"), "--input-format", "jsonl", "--workers", "2",
                     "--output", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["documents"] == 6
    assert len((out / "annotations.jsonl").read_text().splitlines()) == 6
    rep = tmp_path / "rep"
    assert cli.main(["report", "--input", str(out / "annotations.jsonl"), "--output", str(rep),
                     "--entity-types", "DRUG,PROBLEM", "--top-k", "3", "--labels", "present,absent"]) == 0
    assert (rep / "top_terms.tsv").read_text().startswith("entity_type\trank\tterm\tcount\n")
    assert (rep / "entity_matrix.tsv").read_text().startswith("document\tDRUG\tPROBLEM\n")
    capsys.readouterr()
    assert cli.main(["bench", "--pipeline", str(workspace / "pipeline.json"), "--input",
                     str(workspace / "docs.jsonl"), "--worker-counts", "1,2", "--output", str(tmp_path / "b")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split("\t") == ["group", "workers", "seconds", "docs_per_second", "speedup"]
    assert len(lines) == 5
    assert json.loads((tmp_path / "b" / "bench.json").read_text())["documents"] == 6


def test_annotate_directory_input(workspace, tmp_path):
    src = tmp_path / "texts"
    src.mkdir()
    (src / "one.txt").write_text("Patient took aspirin.")
    assert cli.main(["annotate", "--pipeline", str(workspace / "pipeline.json"), "--input", str(src),
                     "--input-format", "dir", "--output", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "annotations.jsonl").read_text())["id"] == "one.txt"


@pytest.mark.parametrize("argv", [
    [],
    ["annotate"],
    ["frobnicate"],
    ["annotate", "--pipeline", "p", "--input", "i", "--output", "o", "--workers", "0"],
    ["annotate", "--pipeline", "p", "--input", "i", "--output", "o", "--input-format", "csv"],
    ["bench", "--pipeline", "p", "--input", "i", "--worker-counts", "1,x"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert capsys.readouterr().err


def test_data_errors_exit_2(workspace, tmp_path):
    assert cli.main(["annotate", "--pipeline", str(tmp_path / "missing.json"), "--input",
                     str(workspace / "docs.jsonl"), "--output", str(tmp_path / "o")]) == cli.EXIT_DATA
    assert cli.main(["annotate", "--pipeline", str(workspace / "pipeline.json"), "--input",
                     str(tmp_path / "missing.jsonl"), "--output", str(tmp_path / "o")]) == cli.EXIT_DATA
    bad = tmp_path / "bad.conll"
    bad.write_text("aspirin I-DRUG\n")
    assert cli.main(["train-ner", "--input", str(bad), "--embeddings", str(workspace / "ner.clnm"),
                     "--output", str(tmp_path / "m")]) == cli.EXIT_DATA
    assert cli.main(["bench", "--pipeline", str(workspace / "pipeline.json"), "--input",
                     str(workspace / "docs.jsonl"), "--min-bytes", "10000000"]) == cli.EXIT_DATA


def test_malformed_line_still_exit_0(workspace, tmp_path, caplog):
    src = tmp_path / "c.jsonl"
    src.write_text((workspace / "docs.jsonl").read_text() + "{broken\n")
    assert cli.main(["annotate", "--pipeline", str(workspace / "pipeline.json"), "--input", str(src),
                     "--output", str(tmp_path / "o")]) == 0
    assert "skipped line 7" in caplog.text


def test_bench_mismatch_exit_3(workspace, monkeypatch):
    def mismatch(*args, **kwargs):
        raise EquivalenceError("outputs differ")

    monkeypatch.setattr(cli, "benchmark", mismatch)
    assert cli.main(["bench", "--pipeline", str(workspace / "pipeline.json"), "--input",
                     str(workspace / "docs.jsonl")]) == cli.EXIT_MISMATCH
