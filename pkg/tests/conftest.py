import pytest

from clinmine import synthetic
from clinmine.assertion import AssertionConfig, AssertionExample, train_assertion
from clinmine.embeddings import load_embeddings
from clinmine.ner import NerConfig, make_dataset, train


@pytest.fixture(scope="session")
def vectors_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("vectors") / "vectors.txt"
    synthetic.write_vectors(path)
    return path


@pytest.fixture(scope="session")
def store(vectors_path):
    return load_embeddings(vectors_path)


@pytest.fixture(scope="session")
def ner_trained(store):
    dataset = make_dataset(synthetic.ner_corpus(400, seed=1))
    model, history = train(NerConfig(), dataset, store)
    return model, history


def as_examples(samples):
    return [AssertionExample(s.tokens, s.target_first, s.target_last, s.label) for s in samples]


@pytest.fixture(scope="session")
def assertion_trained(store):
    data = as_examples(synthetic.assertion_corpus(900, seed=2))
    model, history = train_assertion(AssertionConfig(), data[:720], store)
    return model, history, data[720:]


def pytest_terminal_summary(terminalreporter):
    from verdicts import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
