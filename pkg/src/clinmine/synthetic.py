"""Seeded synthetic corpora whose labels are known by construction.

Used to exercise training, inference, reporting and benchmarking without
licensed clinical data:

* a templated gazetteer NER corpus (DRUG / PROBLEM),
* a rule-generated six-label assertion corpus driven by cue phrases,
* word vectors for the generated vocabulary, clustered by word class the way
  pretrained vectors cluster semantically related words,
* free-text documents for corpus runs and benchmarks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tags import Chunk, encode

DRUGS = [
    "aspirin", "ibuprofen", "metformin", "lisinopril", "atorvastatin", "amoxicillin", "warfarin",
    "heparin", "insulin", "prednisone", "omeprazole", "oseltamivir", "ribavirin", "acetaminophen",
    "azithromycin", "ceftriaxone", "furosemide", "vitamin d", "folic acid", "insulin glargine",
    "magnesium sulfate", "vancomycin", "quercetin", "saline",
]

PROBLEMS = [
    "fever", "cough", "sore throat", "chest pain", "stomach pain", "headache", "nausea",
    "shortness of breath", "short of breath", "pneumonia", "sepsis", "hypertension", "diabetes",
    "asthma", "atrial fibrillation", "lung tumor", "severe fever", "pain control", "alzheimer",
    "influenza", "diarrhea", "hypoxia", "dizziness", "rash", "fatigue", "back pain",
]

TREATMENTS = ["an epidural", "pca", "antibiotics", "oxygen", "dialysis", "intubation"]
TESTS = ["ct", "mri", "x-ray", "ekg", "blood cultures", "ultrasound"]

SUBJECTS = ["patient", "he", "she", "the patient"]
RELATIVES = ["father", "mother", "brother", "sister", "aunt", "uncle", "grandmother", "son", "daughter"]
ACTIVITIES = ["climbing a flight of stairs", "climbing stairs", "walking", "exertion", "lying flat",
              "exercise", "walking uphill", "running"]
TIMES = ["yesterday", "today", "this morning", "last week", "two days ago"]

ASSERTION_LABELS = ("present", "absent", "possible", "conditional", "hypothetical",
                    "associated_with_someone_else")

NER_TEMPLATES = [
    "patient took {DRUG}",
    "patient took {DRUG} for {PROBLEM}",
    "{S} took {DRUG} {TIME}",
    "{S} was given {DRUG} {TIME}",
    "{S} was started on {DRUG} for {PROBLEM}",
    "{S} reports {PROBLEM} since {TIME}",
    "{S} complains of {PROBLEM} and {PROBLEM}",
    "{S} has a history of {PROBLEM}",
    "continue {DRUG} and monitor {PROBLEM}",
    "{S} stopped {DRUG} because of {PROBLEM}",
    "{DRUG} was discontinued {TIME}",
    "{S} was seen in clinic {TIME}",
    "no known allergies",
    "{S} denies {PROBLEM} .",
    "{PROBLEM} improved after {DRUG} .",
]

ASSERTION_TEMPLATES = {
    "present": [
        "{S} has {T}", "patient with {T}", "{S} complains of {T}", "{S} reports {T}",
        "{S} presents with {T}", "{S} is maintained on {T}", "after {T} , {S} improved",
        "{T} located at the right lower lobe", "{S} was started on {T}", "{S} underwent {T}",
        "patient with {T} and {U}", "patient with {U} and {T}", "{S} shows {T}",
        "{S} is on {T} for {U}", "{S} is on {U} for {T}",
        "{S} shows no {U} and is maintained on {T}", "{S} denies {U} but is maintained on {T} for {U}",
        "{S} shows no {U} and is maintained on {U} and {T} for {U}",
        "{S} shows no {U} and is maintained on {U} for {T}", "no {U} , {S} is on {T}",
        "{R} has {U} but {S} has {T}", "possible {U} , {S} has {T}",
    ],
    "absent": [
        "{S} denies {T}", "no {T}", "{S} shows no {T}", "negative for {T}", "{S} has no {T}",
        "without {T}", "{S} reports no {T}", "no evidence of {T}", "{S} denies any {T}",
        "{S} shows no {T} and is maintained on {U} for {U}", "{S} has no {T} but is on {U}",
        "{S} shows no {T} and is maintained on {U} and {U} for {U}", "{S} has {U} but no {T}",
    ],
    "associated_with_someone_else": [
        "family history of {T}", "{R} with {T}", "{R} has {T}", "her {R} had {T}",
        "his {R} died of {T}", "{R} was diagnosed with {T}", "{R} also has {T}",
    ],
    "conditional": [
        "{S} became {T} with {A}", "{S} also became {T} with {A}", "{T} while {A}",
        "{S} gets {T} when {A}", "{S} develops {T} on {A}", "{S} has {T} with {A}",
        "{S} reports {T} only with {A}", "{S} has {U} and became {T} with {A}",
    ],
    "hypothetical": [
        "return if {T} develops", "call if {S} develops {T}", "if {S} experiences {T}",
        "watch for {T}", "should {T} occur , return", "in case of {T} , call",
        "{S} was told to return for {T}", "{S} is on {U} and should return if {T} develops",
    ],
    "possible": [
        "possible {T}", "{T} is suspected", "{S} may have {T}", "rule out {T}", "probable {T}",
        "suspicious for {T}", "cannot exclude {T}", "questionable {T}", "{T} is likely",
    ],
}

ASSERTION_PREFIXES = ["", "", "", "today ,", "on exam ,", "overall ,", "in summary ,"]
ASSERTION_SUFFIXES = ["", "", "", ".", "and is maintained on an epidural .", "for two days .",
                      "and is stable .", "per report .", "according to the chart ."]

# Sentences from a published clinical sample text, with their expected chunk labels.
TABLE_PROBES = [
    ("Patient with severe fever and sore throat .", "severe fever", "PROBLEM", "present"),
    ("Patient with severe fever and sore throat .", "sore throat", "PROBLEM", "present"),
    ("He shows no stomach pain and is maintained on an epidural and PCA for pain control .",
     "stomach pain", "PROBLEM", "absent"),
    ("He shows no stomach pain and is maintained on an epidural and PCA for pain control .",
     "an epidural", "TREATMENT", "present"),
    ("He shows no stomach pain and is maintained on an epidural and PCA for pain control .",
     "PCA", "TREATMENT", "present"),
    ("He shows no stomach pain and is maintained on an epidural and PCA for pain control .",
     "pain control", "PROBLEM", "present"),
    ("He also became short of breath with climbing a flight of stairs .",
     "short of breath", "PROBLEM", "conditional"),
    ("After CT , lung tumor located at the right lower lobe .", "CT", "TEST", "present"),
    ("After CT , lung tumor located at the right lower lobe .", "lung tumor", "PROBLEM", "present"),
    ("Father with Alzheimer .", "Alzheimer", "PROBLEM", "associated_with_someone_else"),
]


def _fill(template: str, rng: random.Random, slots: dict[str, list[str]]) -> tuple[list[str], list[Chunk]]:
    """Expand ``{SLOT}`` placeholders; returns tokens and the chunks of labelled slots."""
    tokens: list[str] = []
    chunks: list[Chunk] = []
    for piece in template.split():
        if piece.startswith("{") and piece.endswith("}"):
            name = piece[1:-1]
            words = rng.choice(slots[name]).split()
            if name in ("DRUG", "PROBLEM"):
                chunks.append(Chunk(len(tokens), len(tokens) + len(words) - 1, name))
            tokens.extend(words)
        else:
            tokens.append(piece)
    return tokens, chunks


def ner_corpus(n_sentences: int, seed: int = 0, scheme: str = "BIO") -> list[tuple[list[str], list[str]]]:
    rng = random.Random(seed)
    slots = {"DRUG": DRUGS, "PROBLEM": PROBLEMS, "S": SUBJECTS, "TIME": TIMES}
    out = []
    for _ in range(n_sentences):
        tokens, chunks = _fill(rng.choice(NER_TEMPLATES), rng, slots)
        out.append((tokens, encode(chunks, len(tokens), scheme)))
    return out


def write_conll(path, sentences: Iterable[tuple[list[str], list[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("-DOCSTART- O\n\n")
        for tokens, tags in sentences:
            for tok, tag in zip(tokens, tags):
                fh.write(f"{tok} {tag}\n")
            fh.write("\n")


@dataclass
class AssertionSample:
    tokens: list[str]
    target_first: int
    target_last: int
    label: str


def assertion_corpus(n_examples: int, seed: int = 0, labels: Iterable[str] = ASSERTION_LABELS
                     ) -> list[AssertionSample]:
    """Balanced over ``labels``; the label is fixed by the template's cue."""
    rng = random.Random(seed)
    labels = list(labels)
    targets = PROBLEMS + TREATMENTS + TESTS
    slots = {"S": SUBJECTS, "R": RELATIVES, "A": ACTIVITIES}
    out = []
    for k in range(n_examples):
        label = labels[k % len(labels)]
        template = rng.choice(ASSERTION_TEMPLATES[label])
        text = " ".join(x for x in (rng.choice(ASSERTION_PREFIXES), template,
                                    rng.choice(ASSERTION_SUFFIXES)) if x)
        tokens: list[str] = []
        first = last = -1
        for piece in text.split():
            if piece == "{T}":
                words = rng.choice(targets).split()
                first, last = len(tokens), len(tokens) + len(words) - 1
                tokens.extend(words)
            elif piece == "{U}":
                tokens.extend(rng.choice(targets).split())
            elif piece.startswith("{") and piece.endswith("}"):
                tokens.extend(rng.choice(slots[piece[1:-1]]).split())
            else:
                tokens.append(piece)
        out.append(AssertionSample(tokens, first, last, label))
    rng.shuffle(out)
    return out


_WORD_CLASSES = {
    "drug": DRUGS,
    "problem": PROBLEMS,
    "treatment": TREATMENTS + TESTS,
    "negation": ["no", "denies", "without", "negative", "any"],
    "relative": RELATIVES + ["family", "her", "his"],
    "activity": ACTIVITIES + ["with", "while", "when", "only", "on"],
    "hypothetical": ["if", "return", "call", "watch", "should", "occur", "case", "told", "develops",
                     "experiences"],
    "possible": ["possible", "suspected", "may", "rule", "probable", "suspicious", "exclude",
                 "cannot", "questionable", "likely"],
}


def vocabulary() -> list[str]:
    words: set[str] = set()
    for entries in (DRUGS, PROBLEMS, TREATMENTS, TESTS, SUBJECTS, RELATIVES, ACTIVITIES, TIMES):
        for e in entries:
            words.update(e.split())
    for templates in [NER_TEMPLATES] + list(ASSERTION_TEMPLATES.values()):
        for t in templates:
            words.update(w for w in t.split() if not w.startswith("{"))
    for x in ASSERTION_PREFIXES + ASSERTION_SUFFIXES + [p[0] for p in TABLE_PROBES] + FILLER_SENTENCES:
        words.update(w.lower() for w in x.split())
    return sorted(words)


def word_vectors(words: Iterable[str], dim: int = 50, seed: int = 0, cluster_weight: float = 0.6
                 ) -> np.ndarray:
    """Class centroid plus per-word noise, so related words share a direction."""
    words = list(words)
    rng = np.random.default_rng(seed)
    centroids = {c: rng.normal(size=dim) for c in sorted(_WORD_CLASSES)}
    cls_of: dict[str, str] = {}
    for c in sorted(_WORD_CLASSES):
        for entry in _WORD_CLASSES[c]:
            for w in entry.split():
                cls_of.setdefault(w, c)
    out = np.empty((len(words), dim))
    for i, w in enumerate(words):
        noise = rng.normal(size=dim)
        c = cls_of.get(w)
        vec = noise if c is None else cluster_weight * centroids[c] + (1 - cluster_weight) * noise
        out[i] = vec / np.linalg.norm(vec)
    return out


def write_vectors(path, dim: int = 50, seed: int = 0, header: bool = False) -> list[str]:
    from .embeddings import save_embeddings
    words = vocabulary()
    save_embeddings(path, words, word_vectors(words, dim, seed), header=header)
    return words


FILLER_SENTENCES = [
    "The patient was seen in clinic today.",
    "Vital signs were stable.",
    "Plan was discussed with the family.",
    "Follow up in two weeks.",
    "Dr. Smith reviewed the chart.",
]


def documents(n_docs: int, seed: int = 0, sentences_per_doc: tuple[int, int] = (3, 8)) -> list[tuple[str, str]]:
    """``(doc_id, text)`` pairs of free clinical-style text."""
    rng = random.Random(seed)
    ner = ner_corpus(n_docs * sentences_per_doc[1], seed=seed + 1)
    asr = assertion_corpus(n_docs * sentences_per_doc[1], seed=seed + 2)
    docs = []
    k = 0
    for d in range(n_docs):
        parts = []
        for _ in range(rng.randint(*sentences_per_doc)):
            r = rng.random()
            if r < 0.45:
                toks = ner[k % len(ner)][0]
            elif r < 0.9:
                toks = asr[k % len(asr)].tokens
            else:
                parts.append(rng.choice(FILLER_SENTENCES))
                k += 1
                continue
            k += 1
            sent = " ".join(t for t in toks if t != ".")
            parts.append(sent[0].upper() + sent[1:] + ".")
        docs.append((f"doc-{d:05d}", " ".join(parts)))
    return docs


def corpus_of_size(n_bytes: int, seed: int = 0, docs_per_batch: int = 200) -> list[tuple[str, str]]:
    """Documents totalling at least ``n_bytes`` UTF-8 bytes."""
    out: list[tuple[str, str]] = []
    total = 0
    batch = 0
    while total < n_bytes:
        for doc_id, text in documents(docs_per_batch, seed=seed + batch):
            out.append((f"doc-{len(out):07d}", text))
            total += len(text.encode("utf-8"))
            if total >= n_bytes:
                break
        batch += 1
    return out
