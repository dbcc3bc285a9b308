"""Declarative run configuration.

One YAML file describes a whole run: data paths, embedding providers, model
backends, ensemble subsets, scoring costs. CLI flags override file values,
which override dataclass defaults. Unknown keys are rejected so typos fail
fast instead of silently running with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import yaml

from .dataset import SPLITS
from .llm import DecodingConfig, EmbeddingProviderConfig, ModelConfig
from .scoring import MODES


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    db: str
    output_dir: str = "out"
    train_questions: str | None = None
    train_labels: str | None = None
    valid_questions: str | None = None
    valid_labels: str | None = None
    test_questions: str | None = None
    test_labels: str | None = None


@dataclass(frozen=True)
class RetrievalConfig:
    # exemplars per prompt; this default is arbitrary, tune per dataset
    n: int = 5


@dataclass(frozen=True)
class PromptSettings:
    with_samples: bool = True
    samples_per_column: int = 1
    include_foreign_keys: bool = False
    sample_truncate: int = 40
    char_budget: int | None = None
    most_similar_first: bool = True
    save_prompts: bool = False


@dataclass(frozen=True)
class EnsembleSettings:
    subsets: tuple[tuple[str, ...], ...] = ()
    ignore_failing_members: bool = False


@dataclass(frozen=True)
class ScoringSettings:
    costs: tuple[float, ...] = (0, 5, 10)
    mode: str = "task"


@dataclass(frozen=True)
class ExecutionSettings:
    timeout_ms: int = 30000
    # literal substituted for current_time in every query; None = off
    time_anchor: str | None = None


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig
    embedding_providers: tuple[EmbeddingProviderConfig, ...] = ()
    models: tuple[ModelConfig, ...] = ()
    retrieval: RetrievalConfig = RetrievalConfig()
    prompt: PromptSettings = PromptSettings()
    ensemble: EnsembleSettings = EnsembleSettings()
    scoring: ScoringSettings = ScoringSettings()
    execution: ExecutionSettings = ExecutionSettings()
    split: str = "valid"
    parallelism: int = 4
    seed: int = 0
    # model used by the prompt-configuration sweep; None = first model
    ablation_model: str | None = None

    def questions_file(self, split: str | None = None) -> str | None:
        return getattr(self.paths, f"{split or self.split}_questions")

    def labels_file(self, split: str | None = None) -> str | None:
        return getattr(self.paths, f"{split or self.split}_labels")


def _reject_unknown(section: str, doc: Mapping, allowed: set[str]) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")


def _as_mapping(section: str, value: object) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{section} must be a mapping")
    return value


def _parse_paths(doc: Mapping) -> PathsConfig:
    allowed = {
        "db", "output_dir", "train_questions", "train_labels",
        "valid_questions", "valid_labels", "test_questions", "test_labels",
    }
    _reject_unknown("paths", doc, allowed)
    if "db" not in doc:
        raise ConfigError("paths.db is required")
    return PathsConfig(**doc)


def _parse_providers(entries: object) -> tuple[EmbeddingProviderConfig, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        raise ConfigError("embedding_providers must be a list")
    out = []
    for i, entry in enumerate(entries):
        entry = _as_mapping(f"embedding_providers[{i}]", entry)
        _reject_unknown(
            f"embedding_providers[{i}]", entry, {"model_id", "source", "dims", "location"}
        )
        try:
            out.append(EmbeddingProviderConfig(**entry))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"embedding_providers[{i}]: {exc}") from exc
    ids = [p.model_id for p in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate embedding provider model_id")
    return tuple(out)


def _parse_models(entries: object) -> tuple[ModelConfig, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        raise ConfigError("models must be a list")
    out = []
    for i, entry in enumerate(entries):
        entry = dict(_as_mapping(f"models[{i}]", entry))
        _reject_unknown(
            f"models[{i}]",
            entry,
            {"model_id", "endpoint", "decoding", "priority", "response_path",
             "token_env", "timeout_s"},
        )
        decoding_doc = _as_mapping(f"models[{i}].decoding", entry.pop("decoding", None))
        _reject_unknown(
            f"models[{i}].decoding", decoding_doc, {"temperature", "top_p", "max_tokens"}
        )
        try:
            decoding = DecodingConfig(**decoding_doc)
            out.append(ModelConfig(decoding=decoding, **entry))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"models[{i}]: {exc}") from exc
    ids = [m.model_id for m in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate model_id")
    return tuple(out)


def _parse_ensemble(doc: Mapping, model_ids: set[str]) -> EnsembleSettings:
    _reject_unknown("ensemble", doc, {"subsets", "ignore_failing_members"})
    subsets_doc = doc.get("subsets") or []
    if not isinstance(subsets_doc, list):
        raise ConfigError("ensemble.subsets must be a list of lists")
    subsets = []
    for i, subset in enumerate(subsets_doc):
        if not isinstance(subset, list) or not subset:
            raise ConfigError(f"ensemble.subsets[{i}] must be a non-empty list")
        for model_id in subset:
            if model_id not in model_ids:
                raise ConfigError(
                    f"ensemble.subsets[{i}] references unknown model {model_id!r}"
                )
        subsets.append(tuple(subset))
    return EnsembleSettings(
        subsets=tuple(subsets),
        ignore_failing_members=bool(doc.get("ignore_failing_members", False)),
    )


def _parse_scoring(doc: Mapping) -> ScoringSettings:
    _reject_unknown("scoring", doc, {"costs", "mode"})
    costs = doc.get("costs", list(ScoringSettings.costs))
    if not isinstance(costs, list) or not all(isinstance(c, (int, float)) for c in costs):
        raise ConfigError("scoring.costs must be a list of numbers")
    mode = doc.get("mode", "task")
    if mode not in MODES:
        raise ConfigError(f"scoring.mode must be one of {MODES}, got {mode!r}")
    return ScoringSettings(costs=tuple(costs), mode=mode)


_TOP_LEVEL_KEYS = {
    "paths", "embedding_providers", "models", "retrieval", "prompt", "ensemble",
    "scoring", "execution", "split", "parallelism", "seed", "ablation_model",
}


def parse_config(doc: Mapping) -> RunConfig:
    _reject_unknown("config", doc, _TOP_LEVEL_KEYS)
    if "paths" not in doc:
        raise ConfigError("paths section is required")
    paths = _parse_paths(_as_mapping("paths", doc["paths"]))
    providers = _parse_providers(doc.get("embedding_providers"))
    models = _parse_models(doc.get("models"))

    retrieval_doc = _as_mapping("retrieval", doc.get("retrieval"))
    _reject_unknown("retrieval", retrieval_doc, {"n"})
    n = retrieval_doc.get("n", RetrievalConfig.n)
    if not isinstance(n, int) or n < 0:
        raise ConfigError(f"retrieval.n must be a non-negative integer, got {n!r}")

    prompt_doc = _as_mapping("prompt", doc.get("prompt"))
    _reject_unknown(
        "prompt", prompt_doc,
        {"with_samples", "samples_per_column", "include_foreign_keys",
         "sample_truncate", "char_budget", "most_similar_first", "save_prompts"},
    )
    try:
        prompt = PromptSettings(**prompt_doc)
    except TypeError as exc:
        raise ConfigError(f"prompt: {exc}") from exc

    ensemble = _parse_ensemble(
        _as_mapping("ensemble", doc.get("ensemble")), {m.model_id for m in models}
    )
    scoring = _parse_scoring(_as_mapping("scoring", doc.get("scoring")))

    execution_doc = _as_mapping("execution", doc.get("execution"))
    _reject_unknown("execution", execution_doc, {"timeout_ms", "time_anchor"})
    timeout_ms = execution_doc.get("timeout_ms", 30000)
    if not isinstance(timeout_ms, int) or timeout_ms < 1:
        raise ConfigError("execution.timeout_ms must be a positive integer")
    execution = ExecutionSettings(
        timeout_ms=timeout_ms, time_anchor=execution_doc.get("time_anchor")
    )

    split = doc.get("split", "valid")
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    parallelism = doc.get("parallelism", 4)
    if not isinstance(parallelism, int) or parallelism < 1:
        raise ConfigError("parallelism must be a positive integer")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    ablation_model = doc.get("ablation_model")
    if ablation_model is not None and ablation_model not in {m.model_id for m in models}:
        raise ConfigError(f"ablation_model {ablation_model!r} is not a configured model")

    return RunConfig(
        paths=paths,
        embedding_providers=providers,
        models=models,
        retrieval=RetrievalConfig(n=n),
        prompt=prompt,
        ensemble=ensemble,
        scoring=scoring,
        execution=execution,
        split=split,
        parallelism=parallelism,
        seed=seed,
        ablation_model=ablation_model,
    )


def _set_dotted(doc: dict, dotted: str, value: object) -> None:
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot override {dotted}: {part} is not a mapping")
        node = nxt
    node[parts[-1]] = value


def load_config(path: str | Path, overrides: Mapping[str, object] | None = None) -> RunConfig:
    """Load a YAML config; `overrides` maps dotted keys (e.g. "retrieval.n")
    to values that replace whatever the file says."""
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    doc = _as_mapping("config", doc)
    for dotted, value in (overrides or {}).items():
        _set_dotted(doc, dotted, value)
    config = parse_config(doc)
    _check_paths(config)
    return config


def _check_paths(config: RunConfig) -> None:
    missing = []
    if not Path(config.paths.db).is_file():
        missing.append(("paths.db", config.paths.db))
    for split in SPLITS:
        for kind in ("questions", "labels"):
            value = getattr(config.paths, f"{split}_{kind}")
            if value is not None and not Path(value).is_file():
                missing.append((f"paths.{split}_{kind}", value))
    for i, provider in enumerate(config.embedding_providers):
        if provider.source == "vector_file" and not Path(provider.location).is_file():
            missing.append((f"embedding_providers[{i}].location", provider.location))
    for i, model in enumerate(config.models):
        for prefix in ("replay:", "mock:"):
            if model.endpoint.startswith(prefix):
                target = model.endpoint[len(prefix):]
                if not Path(target).is_file():
                    missing.append((f"models[{i}].endpoint", target))
    if missing:
        details = ", ".join(f"{key}={value!r}" for key, value in missing)
        raise ConfigError(f"missing files: {details}")
