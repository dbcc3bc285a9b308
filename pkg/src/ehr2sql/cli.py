"""Pipeline driver: generate, ensemble, score, ablate, export-raft, embed-index.

Every stage reads one declarative config and persists its artifacts under the
output directory, so stages can be rerun and inspected independently:

    out/exemplars/<split>.json        retrieved exemplar sets
    out/prompts/<split>/<qid>.txt     assembled prompts (opt-in)
    out/predictions/<model>.json      per-model predictions
    out/predictions/ensemble_*.json   validated ensemble predictions
    out/manifests/<model>.json        per-question latency/cache-hit records
    out/report.{json,txt}             combined individual + ensemble scores
    out/ablation_report.{json,txt}    prompt-configuration sweep
    out/raft/train.jsonl              finetuning export
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from . import dataset, ensemble, llm, prompt, retrieval, schema_context, scoring, sql_exec
from .config import ConfigError, RunConfig, load_config

_CLI_ERRORS = (
    ConfigError,
    dataset.MalformedFileError,
    dataset.DanglingLabelError,
    retrieval.VectorStoreFormatError,
    retrieval.AlignmentError,
    retrieval.ZeroVectorError,
    retrieval.DimensionMismatchError,
    schema_context.DatabaseUnreadableError,
    schema_context.EmptySchemaError,
    prompt.UnresolvableExemplarError,
    prompt.PromptShapeError,
    llm.BackendError,
    sql_exec.GroundTruthUnexecutableError,
    ensemble.UnknownModelIdError,
    ensemble.MissingPredictionError,
    scoring.AlignmentError,
    OSError,
)


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.paths.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_active_split(config: RunConfig, require_labels: bool):
    questions_file = config.questions_file()
    if questions_file is None:
        raise ConfigError(f"paths.{config.split}_questions is not configured")
    labels_file = config.labels_file()
    if require_labels and labels_file is None:
        raise ConfigError(f"paths.{config.split}_labels is required for scoring")
    questions, labels = dataset.load_split(questions_file, labels_file, config.split)
    return questions, labels


def _load_train(config: RunConfig):
    if config.paths.train_questions is None or config.paths.train_labels is None:
        raise ConfigError("paths.train_questions and paths.train_labels are required when retrieval.n > 0")
    return dataset.load_split(
        config.paths.train_questions, config.paths.train_labels, "train"
    )


def _introspect(config: RunConfig, with_samples: bool | None = None) -> schema_context.SchemaContext:
    settings = config.prompt
    return schema_context.introspect(
        config.paths.db,
        with_samples=settings.with_samples if with_samples is None else with_samples,
        samples_per_column=settings.samples_per_column,
        include_foreign_keys=settings.include_foreign_keys,
        sample_truncate=settings.sample_truncate,
    )


def _prompt_config(config: RunConfig) -> prompt.PromptConfig:
    return prompt.PromptConfig(
        char_budget=config.prompt.char_budget,
        most_similar_first=config.prompt.most_similar_first,
    )


def _build_exemplar_sets(config: RunConfig, questions, providers=None):
    if config.retrieval.n == 0:
        return [retrieval.ExemplarSet(q.id, [], 0) for q in questions], {}
    train_questions, train_labels = _load_train(config)
    if providers is None:
        providers = [llm.build_embedding_provider(c) for c in config.embedding_providers]
    sets = retrieval.retrieve(questions, train_questions, providers, config.retrieval.n)
    lookup = prompt.build_train_lookup(train_questions, train_labels)
    return sets, lookup


def _save_exemplar_sets(sets: Sequence[retrieval.ExemplarSet], path: Path) -> None:
    doc = {
        s.test_question_id: [
            {
                "train_question_id": h.train_question_id,
                "raw_score": h.raw_score,
                "z_score": h.z_score,
                "source_model": h.source_model,
            }
            for h in s.hits
        ]
        for s in sets
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _build_prompts(config: RunConfig, questions, sets, lookup, schema):
    prompt_config = _prompt_config(config)
    bundles = [
        prompt.build_prompt(q, s, lookup, schema, prompt_config)
        for q, s in zip(questions, sets)
    ]
    if config.prompt.save_prompts:
        prompt_dir = _out_dir(config) / "prompts" / config.split
        prompt_dir.mkdir(parents=True, exist_ok=True)
        for bundle in bundles:
            (prompt_dir / f"{bundle.question_id}.txt").write_text(
                bundle.text, encoding="utf-8"
            )
    return bundles


def _generate_for_model(model_config, bundles, parallelism: int):
    backend = llm.build_generation_backend(model_config)

    def work(bundle):
        try:
            result = llm.generate(bundle, model_config, backend)
            return result.question_id, result.extracted, result.from_cache, result.latency_ms, None
        except llm.BackendError as exc:
            return bundle.question_id, None, False, 0.0, str(exc)

    if parallelism <= 1:
        rows = [work(b) for b in bundles]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(work, bundles))
    predictions = {qid: extracted for qid, extracted, _, _, _ in rows}
    manifest = [
        {
            "question_id": qid,
            "model_id": model_config.model_id,
            "from_cache": from_cache,
            "latency_ms": latency_ms,
            "error": error,
        }
        for qid, _, from_cache, latency_ms, error in rows
    ]
    return predictions, manifest


def run_generate(config: RunConfig) -> dict[str, Path]:
    """Stage 1: retrieval-augmented prompting of every configured model."""
    if not config.models:
        raise ConfigError("no models configured")
    questions, _ = _load_active_split(config, require_labels=False)
    schema = _introspect(config)
    sets, lookup = _build_exemplar_sets(config, questions)
    out = _out_dir(config)
    _save_exemplar_sets(sets, out / "exemplars" / f"{config.split}.json")
    bundles = _build_prompts(config, questions, sets, lookup, schema)

    written: dict[str, Path] = {}
    predictions_dir = out / "predictions"
    manifests_dir = out / "manifests"
    predictions_dir.mkdir(parents=True, exist_ok=True)
    manifests_dir.mkdir(parents=True, exist_ok=True)
    for model_config in config.models:
        predictions, manifest = _generate_for_model(
            model_config, bundles, config.parallelism
        )
        pred_path = predictions_dir / f"{model_config.model_id}.json"
        dataset.save_predictions(predictions, pred_path)
        manifest_path = manifests_dir / f"{model_config.model_id}.json"
        manifest_path.write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        written[model_config.model_id] = pred_path
    return written


def _ensemble_file_name(subset: tuple[str, ...]) -> str:
    return "ensemble_" + "+".join(subset) + ".json"


def run_ensemble(config: RunConfig) -> dict[tuple[str, ...], Path]:
    """Stage 2: unanimity validation over every configured model subset."""
    if not config.ensemble.subsets:
        raise ConfigError("ensemble.subsets is empty")
    out = _out_dir(config)
    predictions_dir = out / "predictions"
    needed = {model_id for subset in config.ensemble.subsets for model_id in subset}
    per_model = {}
    for model_id in sorted(needed):
        path = predictions_dir / f"{model_id}.json"
        if not path.is_file():
            raise ensemble.MissingPredictionError(
                f"no prediction file for {model_id!r} at {path}"
            )
        per_model[model_id] = dataset.load_predictions(path)
    cache = sql_exec.ExecutionCache(config.paths.db, config.execution.timeout_ms)
    results = ensemble.sweep_ensembles(
        per_model,
        config.ensemble.subsets,
        config.models,
        config.paths.db,
        config.execution.timeout_ms,
        cache=cache,
        time_anchor=config.execution.time_anchor,
        ignore_failing_members=config.ensemble.ignore_failing_members,
    )
    written = {}
    for subset, predictions in results.items():
        path = predictions_dir / _ensemble_file_name(subset)
        dataset.save_predictions(predictions, path)
        written[subset] = path
    return written


def _score_one(
    label_map, questions, predictions, cache, config: RunConfig
) -> scoring.ScoreReport:
    outcomes = []
    ordered_preds = []
    exec_results = []
    for q in questions:
        if q.id not in predictions:
            raise ensemble.MissingPredictionError(f"no prediction for question {q.id!r}")
        predicted = predictions[q.id]
        gold = label_map[q.id]
        outcomes.append(
            sql_exec.compare_to_ground_truth(
                predicted,
                gold,
                config.paths.db,
                config.execution.timeout_ms,
                cache=cache,
                time_anchor=config.execution.time_anchor,
            )
        )
        ordered_preds.append(predicted)
        if predicted is None:
            exec_results.append(None)
        else:
            sql = predicted
            if config.execution.time_anchor is not None:
                sql = sql_exec.substitute_time_anchor(sql, config.execution.time_anchor)
            exec_results.append(cache.run(sql))
    return scoring.summarize(
        outcomes,
        ordered_preds,
        exec_results,
        costs=config.scoring.costs,
        mode=config.scoring.mode,
    )


def run_score(config: RunConfig) -> tuple[Path, Path]:
    """Score every individual model and every configured ensemble subset."""
    questions, labels = _load_active_split(config, require_labels=True)
    label_map = {lab.id: lab.answer for lab in labels}
    unlabeled = [q.id for q in questions if q.id not in label_map]
    if unlabeled:
        raise ConfigError(
            f"split {config.split!r} lacks labels for {unlabeled[:5]}"
            + ("..." if len(unlabeled) > 5 else "")
        )
    out = _out_dir(config)
    predictions_dir = out / "predictions"
    cache = sql_exec.ExecutionCache(config.paths.db, config.execution.timeout_ms)
    reports: dict[str, scoring.ScoreReport] = {}
    for model_config in config.models:
        path = predictions_dir / f"{model_config.model_id}.json"
        if not path.is_file():
            raise ensemble.MissingPredictionError(
                f"no prediction file for {model_config.model_id!r} at {path}"
            )
        predictions = dataset.load_predictions(path)
        reports[model_config.model_id] = _score_one(
            label_map, questions, predictions, cache, config
        )
    for subset in config.ensemble.subsets:
        path = predictions_dir / _ensemble_file_name(subset)
        if not path.is_file():
            raise ensemble.MissingPredictionError(
                f"no ensemble prediction file at {path}; run the ensemble stage first"
            )
        predictions = dataset.load_predictions(path)
        reports["+".join(subset)] = _score_one(
            label_map, questions, predictions, cache, config
        )
    json_path = out / "report.json"
    text_path = out / "report.txt"
    json_path.write_text(scoring.report_json(reports), encoding="utf-8")
    text_path.write_text(scoring.render_table(reports), encoding="utf-8")
    return json_path, text_path


def run_ensemble_and_score(config: RunConfig) -> tuple[Path, Path]:
    run_ensemble(config)
    return run_score(config)


_ABLATION_VARIANTS = ("no_few_shot", "one_embedding", "two_embeddings",
                      "two_embeddings_column_values")


def _ablation_plan(config: RunConfig, providers):
    n = config.retrieval.n
    return {
        "no_few_shot": (0, [], False),
        "one_embedding": (n, providers[:1], False),
        "two_embeddings": (n, providers[:2], False),
        "two_embeddings_column_values": (n, providers[:2], True),
    }


def run_ablation(config: RunConfig) -> tuple[Path, Path]:
    """Prompt-configuration sweep for one model: no exemplars, one embedding
    model, two embedding models, and two embedding models plus column samples."""
    if not config.models:
        raise ConfigError("no models configured")
    if len(config.embedding_providers) < 2:
        raise ConfigError("ablation needs at least two embedding providers")
    if config.retrieval.n < 1:
        raise ConfigError("ablation needs retrieval.n >= 1")
    model_id = config.ablation_model or config.models[0].model_id
    model_config = next(m for m in config.models if m.model_id == model_id)
    questions, labels = _load_active_split(config, require_labels=True)
    label_map = {lab.id: lab.answer for lab in labels}
    unlabeled = [q.id for q in questions if q.id not in label_map]
    if unlabeled:
        raise ConfigError(f"split {config.split!r} lacks labels for {unlabeled[:5]}")

    providers = [llm.build_embedding_provider(c) for c in config.embedding_providers]
    train_questions, train_labels = _load_train(config)
    lookup = prompt.build_train_lookup(train_questions, train_labels)
    schema_plain = _introspect(config, with_samples=False)
    schema_sampled = _introspect(config, with_samples=True)
    prompt_config = _prompt_config(config)

    out = _out_dir(config)
    predictions_dir = out / "predictions"
    predictions_dir.mkdir(parents=True, exist_ok=True)
    cache = sql_exec.ExecutionCache(config.paths.db, config.execution.timeout_ms)
    reports: dict[str, scoring.ScoreReport] = {}
    for variant, (n, variant_providers, with_samples) in _ablation_plan(
        config, providers
    ).items():
        schema = schema_sampled if with_samples else schema_plain
        if n == 0:
            sets = [retrieval.ExemplarSet(q.id, [], 0) for q in questions]
        else:
            sets = retrieval.retrieve(questions, train_questions, variant_providers, n)
        bundles = [
            prompt.build_prompt(q, s, lookup, schema, prompt_config)
            for q, s in zip(questions, sets)
        ]
        predictions, _ = _generate_for_model(model_config, bundles, config.parallelism)
        dataset.save_predictions(predictions, predictions_dir / f"ablation_{variant}.json")
        reports[variant] = _score_one(label_map, questions, predictions, cache, config)
    json_path = out / "ablation_report.json"
    text_path = out / "ablation_report.txt"
    json_path.write_text(scoring.report_json(reports), encoding="utf-8")
    text_path.write_text(scoring.render_table(reports), encoding="utf-8")
    return json_path, text_path


def run_export_raft(config: RunConfig, out_path: Path | None = None) -> Path:
    """Export one finetuning record per train question (self-excluded retrieval)."""
    train_questions, train_labels = _load_train(config)
    schema = _introspect(config)
    providers = [llm.build_embedding_provider(c) for c in config.embedding_providers]
    records = prompt.export_raft(
        train_questions,
        train_labels,
        schema,
        providers,
        config.retrieval.n,
        _prompt_config(config),
    )
    if out_path is None:
        out_path = _out_dir(config) / "raft" / "train.jsonl"
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    prompt.write_raft_jsonl(records, out_path)
    return out_path


def run_embed_index(
    config: RunConfig,
    provider_id: str,
    questions_file: str | None,
    out_path: str | Path,
) -> Path:
    """Embed a question file with one provider and write a text-hash-keyed
    vector store usable by the vector_file provider."""
    provider_config = next(
        (c for c in config.embedding_providers if c.model_id == provider_id), None
    )
    if provider_config is None:
        raise ConfigError(f"no embedding provider {provider_id!r} in config")
    if questions_file is None:
        questions_file = config.questions_file()
        if questions_file is None:
            raise ConfigError(f"paths.{config.split}_questions is not configured")
    questions = dataset.load_questions(questions_file, config.split)
    provider = llm.build_embedding_provider(provider_config)
    vectors = provider.embed([q.text for q in questions])
    store = retrieval.VectorStore(model_id=provider_config.model_id, entries={})
    for question, vector in zip(questions, vectors):
        store.add(llm.text_hash(question.text), vector)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    retrieval.save_vector_store(store, out_path)
    return out_path


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("-c", "--config", required=True, help="YAML run config")
    sub.add_argument("--output-dir", help="override paths.output_dir")
    sub.add_argument("--split", choices=dataset.SPLITS, help="override active split")
    sub.add_argument("--n", type=int, help="override retrieval.n")
    sub.add_argument("--parallelism", type=int, help="override worker count")
    sub.add_argument("--timeout-ms", type=int, help="override execution.timeout_ms")


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    mapping = {
        "output_dir": "paths.output_dir",
        "split": "split",
        "n": "retrieval.n",
        "parallelism": "parallelism",
        "timeout_ms": "execution.timeout_ms",
    }
    out = {}
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[dotted] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehr2sql",
        description="Reliable text-to-SQL: generate candidates, validate by "
        "cross-model execution agreement, score with a cost penalty.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("generate", "run retrieval-augmented generation for every model"),
        ("ensemble", "validate configured model subsets by execution agreement"),
        ("score", "score individual models and ensembles against labels"),
        ("ablate", "sweep prompt configurations for one model"),
    ):
        _add_common(sub.add_parser(name, help=text))

    raft = sub.add_parser("export-raft", help="export retrieval-augmented finetuning records")
    _add_common(raft)
    raft.add_argument("--out", help="output JSONL path (default out/raft/train.jsonl)")

    index = sub.add_parser("embed-index", help="build a vector store file via a provider")
    _add_common(index)
    index.add_argument("--provider", required=True, help="embedding provider model_id")
    index.add_argument("--questions", help="question file (default: active split's)")
    index.add_argument("--out", required=True, help="output vector store path")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, _overrides(args))
        if args.command == "generate":
            written = run_generate(config)
            for model_id, path in written.items():
                print(f"{model_id}: {path}")
        elif args.command == "ensemble":
            written = run_ensemble(config)
            for subset, path in written.items():
                print(f"{'+'.join(subset)}: {path}")
        elif args.command == "score":
            json_path, text_path = run_score(config)
            print(Path(text_path).read_text(encoding="utf-8"), end="")
            print(f"report: {json_path}")
        elif args.command == "ablate":
            json_path, text_path = run_ablation(config)
            print(Path(text_path).read_text(encoding="utf-8"), end="")
            print(f"report: {json_path}")
        elif args.command == "export-raft":
            path = run_export_raft(config, Path(args.out) if args.out else None)
            print(f"raft export: {path}")
        elif args.command == "embed-index":
            path = run_embed_index(config, args.provider, args.questions, args.out)
            print(f"vector store: {path}")
    except _CLI_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
