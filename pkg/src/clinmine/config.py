"""Build a pipeline from a JSON description.

    {"stages": [
        {"type": "DocumentAssembler"},
        {"type": "SentenceDetector"},
        {"type": "Tokenizer"},
        {"type": "WordEmbeddings", "path": "vectors.txt"},
        {"type": "NerDLModel", "path": "ner.clnm"},
        {"type": "NerConverter", "scheme": "BIO"},
        {"type": "AssertionDLModel", "path": "assertion.clnm"}
    ]}

Every stage accepts ``name``, ``input_columns`` (or ``input_column``) and
``output_column`` to override its defaults. Relative paths resolve against
the directory of the config file. An AssertionDLModel uses the embedding
store of the nearest preceding WordEmbeddings stage.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from . import assertion, ner
from .annotation import Pipeline, PipelineError, PipelineModel, Stage, validate
from .embeddings import EmbeddingStore, WordEmbeddings, load_embeddings
from .tags import NerConverter
from .text import DocumentAssembler, Normalizer, SentenceDetector, SentenceRules, Tokenizer, TokenizerRules

STAGE_TYPES = ("DocumentAssembler", "SentenceDetector", "Tokenizer", "Normalizer", "WordEmbeddings",
               "NerDLModel", "NerConverter", "AssertionDLModel")

_COMMON = ("type", "name", "input_columns", "input_column", "output_column")


class ConfigError(ValueError):
    pass


def _columns(spec: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if "name" in spec:
        out["name"] = spec["name"]
    if "output_column" in spec:
        out["output_column"] = spec["output_column"]
    return out


def _single_input(spec: dict[str, Any], kwargs: dict[str, Any]) -> dict[str, Any]:
    if "input_column" in spec:
        kwargs["input_column"] = spec["input_column"]
    elif "input_columns" in spec:
        cols = spec["input_columns"]
        if len(cols) != 1:
            raise ConfigError(f"stage {spec['type']} takes one input column")
        kwargs["input_column"] = cols[0]
    return kwargs


def _multi_input(spec: dict[str, Any], kwargs: dict[str, Any]) -> dict[str, Any]:
    if "input_columns" in spec:
        kwargs["input_columns"] = tuple(spec["input_columns"])
    return kwargs


def _check_keys(spec: dict[str, Any], allowed: tuple[str, ...]) -> None:
    extra = set(spec) - set(_COMMON) - set(allowed)
    if extra:
        raise ConfigError(f"stage {spec['type']}: unknown keys {sorted(extra)}")


def build_pipeline(config: dict[str, Any], base_dir: str | os.PathLike = ".") -> PipelineModel:
    """Instantiate the stages of ``config`` and validate their wiring."""
    base = Path(base_dir)
    stages_cfg = config.get("stages")
    if not isinstance(stages_cfg, list) or not stages_cfg:
        raise ConfigError("config needs a non-empty 'stages' list")
    stores: dict[tuple[str, bool], EmbeddingStore] = {}
    last_store: EmbeddingStore | None = None
    stages: list[Stage] = []

    def path_of(spec: dict[str, Any]) -> Path:
        if "path" not in spec:
            raise ConfigError(f"stage {spec['type']} needs a 'path'")
        p = Path(spec["path"])
        return p if p.is_absolute() else base / p

    for i, spec in enumerate(stages_cfg):
        if not isinstance(spec, dict) or "type" not in spec:
            raise ConfigError(f"stage {i}: expected an object with a 'type'")
        kind = spec["type"]
        kwargs = _columns(spec)
        if kind == "DocumentAssembler":
            _check_keys(spec, ())
            stage: Stage = DocumentAssembler(**_single_input(spec, kwargs))
        elif kind == "SentenceDetector":
            _check_keys(spec, ("abbreviations", "terminators"))
            rules = SentenceRules.from_params(spec)
            stage = SentenceDetector(rules=rules, **_single_input(spec, kwargs))
        elif kind == "Tokenizer":
            _check_keys(spec, ("keep_internal_hyphens", "split_characters", "keep_decimal_marks"))
            try:
                rules = TokenizerRules.from_params(spec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"stage Tokenizer: {exc}") from None
            stage = Tokenizer(rules=rules, **_single_input(spec, kwargs))
        elif kind == "Normalizer":
            _check_keys(spec, ())
            stage = Normalizer(**_single_input(spec, kwargs))
        elif kind == "WordEmbeddings":
            _check_keys(spec, ("path", "case_fallback"))
            fallback = bool(spec.get("case_fallback", True))
            key = (str(path_of(spec).resolve()), fallback)
            if key not in stores:
                stores[key] = load_embeddings(path_of(spec), case_fallback=fallback)
            last_store = stores[key]
            stage = WordEmbeddings(last_store, **_multi_input(spec, kwargs))
        elif kind == "NerDLModel":
            _check_keys(spec, ("path",))
            stage = ner.NerDLModel(ner.load_model(path_of(spec)), **_multi_input(spec, kwargs))
        elif kind == "NerConverter":
            _check_keys(spec, ("scheme", "lenient"))
            stage = NerConverter(scheme=spec.get("scheme", "BIO"), lenient=bool(spec.get("lenient", True)),
                                 **_multi_input(spec, kwargs))
        elif kind == "AssertionDLModel":
            _check_keys(spec, ("path",))
            if last_store is None:
                raise ConfigError("AssertionDLModel needs a preceding WordEmbeddings stage")
            model = assertion.load_model(path_of(spec), last_store)
            stage = assertion.AssertionDLModel(model, **_multi_input(spec, kwargs))
        else:
            raise ConfigError(f"stage {i}: unknown type {kind!r}; expected one of {', '.join(STAGE_TYPES)}")
        stages.append(stage)

    model = PipelineModel(tuple(stages), tuple(config.get("inputs", ("text",))))
    errors = validate(Pipeline(list(model.stages), model.inputs))
    if errors:
        raise PipelineError("; ".join(errors))
    return model


def load_pipeline(path: str | os.PathLike) -> PipelineModel:
    path = Path(path)
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return build_pipeline(config, path.parent)
