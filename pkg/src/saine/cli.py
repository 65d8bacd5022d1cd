"""Command line entry point.

Subcommands wrap the library one-to-one; their file outputs are produced by
the same writer helpers the library exposes, so CLI output equals the
library-level result byte for byte. Every output-producing run writes one
manifest.json recording inputs, seed, a config digest, and output paths.

Option precedence: command line flags > --config JSON file > built-in
defaults. All randomness flows from an explicit --seed flag.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import agreement, curation, sampling
from .annotation_data import (
    load_taxonomy,
    parse_export,
    validate_tasks_against_taxonomy,
)
from .classifier import (
    LinearTextModel,
    TrainParams,
    compare_predictions,
    evaluate_pair,
    fine_tune_curated,
    train,
)
from .errors import SaineError

MODEL_DIR_ENV = "SAINE_MODEL_DIR"


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict
    seed: int | None
    config_digest: str
    outputs: list[str]
    started_at: str
    finished_at: str = ""


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _digest(options: dict) -> str:
    body = json.dumps(options, sort_keys=True, default=str)
    return hashlib.sha256(body.encode()).hexdigest()


class Run:
    """Collects one subcommand's resolved options and emitted files."""

    def __init__(self, subcommand: str, args: argparse.Namespace):
        self.subcommand = subcommand
        self.config = _load_config(getattr(args, "config", None))
        self.args = args
        self.options: dict = {}
        self.outputs: list[Path] = []
        self.started_at = _utcnow()

    def opt(self, name: str, default=None, required: bool = False):
        value = getattr(self.args, name, None)
        if value is None:
            value = self.config.get(name, default)
        if required and value is None:
            raise SaineError(f"--{name.replace('_', '-')} is required")
        self.options[name] = value
        return value

    def emit(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def write_manifest(self, out_dir: Path) -> None:
        digest_options = {k: v for k, v in self.options.items() if k != "out"}
        manifest = RunManifest(
            subcommand=self.subcommand,
            inputs={k: str(v) for k, v in self.options.items()},
            seed=self.options.get("seed"),
            config_digest=_digest(digest_options),
            outputs=[str(p) for p in self.outputs],
            started_at=self.started_at,
            finished_at=_utcnow(),
        )
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(asdict(manifest), f, indent=2)
            f.write("\n")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise SaineError("config file must hold a JSON object")
    return config


def _out_dir(run: Run) -> Path:
    out = Path(run.opt("out", required=True))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


# --- subcommand handlers -----------------------------------------------------


def cmd_parse_export(args) -> int:
    run = Run("parse-export", args)
    out = _out_dir(run)
    parsed = parse_export(run.opt("export", required=True))
    taxonomy_path = run.opt("taxonomy")
    if taxonomy_path:
        validate_tasks_against_taxonomy(parsed.tasks,
                                        load_taxonomy(taxonomy_path))
    _write_jsonl(run.emit(out / "tasks.jsonl"), (
        {"task_id": t.task_id, "abstract": t.abstract,
         "mag_keywords": t.mag_keywords,
         "predicted_categories": t.predicted_categories,
         "discipline": t.discipline}
        for t in parsed.tasks))
    _write_jsonl(run.emit(out / "annotations.jsonl"), (
        {"annotator_id": a.annotator_id, "task_id": a.task_id,
         "verdict": a.verdict.value,
         "suggested_category": a.suggested_category,
         "removed_keywords": a.removed_keywords,
         "added_keywords": [asdict(s) for s in a.added_keywords],
         "duration_seconds": a.duration_seconds,
         "is_valid": a.is_valid}
        for a in parsed.annotations))
    _write_jsonl(run.emit(out / "flags.jsonl"),
                 (asdict(flag) for flag in parsed.flags))
    run.write_manifest(out)
    return 0


def cmd_iaa(args) -> int:
    run = Run("iaa", args)
    out = _out_dir(run)
    parsed = parse_export(run.opt("export", required=True))
    matrix = agreement.agreement_matrix(parsed.tasks, parsed.annotations)
    _write_text(run.emit(out / "iaa.csv"), agreement.matrix_to_csv(matrix))
    _write_text(run.emit(out / "iaa.json"), agreement.matrix_to_json(matrix))
    run.write_manifest(out)
    return 0


def cmd_curate(args) -> int:
    run = Run("curate", args)
    out = _out_dir(run)
    seed = run.opt("seed", required=True)
    parsed = parse_export(run.opt("export", required=True))
    taxonomy_path = run.opt("taxonomy")
    taxonomy = load_taxonomy(taxonomy_path) if taxonomy_path else None
    curated, report = curation.curate(parsed.tasks, parsed.annotations,
                                      seed=int(seed), taxonomy=taxonomy)
    curated_path, report_path = curation.write_curation_outputs(
        curated, report, out)
    run.emit(curated_path)
    run.emit(report_path)
    run.write_manifest(out)
    print(json.dumps(asdict(report)))
    return 0


def cmd_sample(args) -> int:
    run = Run("sample", args)
    out = _out_dir(run)
    config = sampling.SamplingConfig(
        ratio=float(run.opt("ratio", 2e-5)),
        per_class_minimum=int(run.opt("min_per_class", 1)),
        seed=int(run.opt("seed", required=True)),
    )
    corpus = sampling.load_corpus_jsonl(run.opt("corpus", required=True))
    tasks = sampling.stratified_sample(corpus, config)
    _write_jsonl(run.emit(out / "sample.jsonl"), (
        {"task_id": t.task_id, "abstract": t.abstract,
         "mag_keywords": t.mag_keywords,
         "predicted_categories": t.predicted_categories,
         "discipline": t.discipline}
        for t in tasks))
    run.write_manifest(out)
    return 0


def cmd_make_testset(args) -> int:
    run = Run("make-testset", args)
    out = _out_dir(run)
    corpus = sampling.load_corpus_jsonl(run.opt("corpus", required=True))
    raw_classes = run.opt("classes")
    classes = (raw_classes.split(",") if raw_classes
               else sorted({item.stratum for item in corpus}))
    testset = sampling.build_test_set(
        corpus, classes,
        per_class=int(run.opt("per_class", required=True)),
        seed=int(run.opt("seed", required=True)))
    path = run.emit(out / "testset.jsonl")
    sampling.write_corpus_jsonl(testset, path)
    run.write_manifest(out)
    return 0


def _model_dir(run: Run, required: bool = False) -> str | None:
    models = run.opt("models", os.environ.get(MODEL_DIR_ENV))
    if required and not models:
        raise SaineError(f"--models or ${MODEL_DIR_ENV} is required")
    return models


def _load_model(reference: str, models_dir: str | None) -> LinearTextModel:
    if Path(reference).is_file():
        return LinearTextModel.load(reference)
    if not models_dir:
        raise SaineError(
            f"{reference!r} is not a file and no model registry is configured")
    from .registry import ModelRegistry

    return ModelRegistry(models_dir).load(reference)


def _train_params(run: Run) -> TrainParams:
    return TrainParams(
        learning_rate=float(run.opt("lr", 0.1)),
        epochs=int(run.opt("epochs", 300)),
        l2=float(run.opt("l2", 1e-4)),
        seed=int(run.opt("seed", 0)),
        max_terms=int(run.opt("max_terms", 5000)),
    )


def _maybe_register(run: Run, model: LinearTextModel, name: str) -> None:
    if not run.opt("register", False):
        return
    from .registry import ModelRegistry

    registry = ModelRegistry(_model_dir(run, required=True))
    registered_name, version = registry.register_model(model, name)
    print(f"registered {registered_name}@{version}")


def cmd_train(args) -> int:
    run = Run("train", args)
    out = _out_dir(run)
    corpus = sampling.load_corpus_jsonl(run.opt("corpus", required=True))
    mode = run.opt("mode", "single")
    mode_name = {"single": "single_label", "multi": "multi_label"}[mode]
    labels = sorted({label for item in corpus for label in item.labels})
    pairs = [(item.abstract, item.labels) for item in corpus]
    name = run.opt("name", required=True)
    model = train(pairs, labels, level=run.opt("level", "field"),
                  mode=mode_name, params=_train_params(run), name=name,
                  architecture_tag=run.opt("arch", "Linear"))
    path = run.emit(out / "model.json")
    model.save(path)
    _maybe_register(run, model, name)
    run.write_manifest(out)
    return 0


def cmd_finetune(args) -> int:
    run = Run("finetune", args)
    out = _out_dir(run)
    base = _load_model(run.opt("base", required=True), _model_dir(run))
    instances = curation.load_curated(run.opt("curated", required=True))
    model = fine_tune_curated(base, instances, _train_params(run))
    path = run.emit(out / "model.json")
    model.save(path)
    _maybe_register(run, model, base.metadata.name or run.opt("name", "model"))
    run.write_manifest(out)
    return 0


def _load_predictions(path: str, ids: list[str]) -> list[str]:
    by_id = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            by_id[str(row["id"])] = str(row["label"])
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise SaineError(f"prediction file {path} misses ids: {missing[:5]}")
    return [by_id[i] for i in ids]


def cmd_evaluate(args) -> int:
    run = Run("evaluate", args)
    out = _out_dir(run)
    testset = sampling.load_corpus_jsonl(run.opt("testset", required=True))
    base_preds = run.opt("base_predictions")
    ft_preds = run.opt("ft_predictions")
    model_type = run.opt("model_type")
    if base_preds or ft_preds:
        if not (base_preds and ft_preds):
            raise SaineError("replay evaluation needs both prediction files")
        ids = [item.id for item in testset]
        comparison = compare_predictions(
            _load_predictions(base_preds, ids),
            _load_predictions(ft_preds, ids),
            [item.labels for item in testset],
            model_type or "Linear")
    else:
        models_dir = _model_dir(run)
        base = _load_model(run.opt("base", required=True), models_dir)
        ft = _load_model(run.opt("ft", required=True), models_dir)
        comparison = evaluate_pair(base, ft, testset, model_type)
    _write_text(run.emit(out / "evaluation.csv"), comparison.csv_row())
    run.write_manifest(out)
    print(comparison.csv_row(), end="")
    return 0


def cmd_serve(args) -> int:
    run = Run("serve", args)
    from .service import run_server

    run_server(_model_dir(run, required=True),
               host=run.opt("host", "127.0.0.1"),
               port=int(run.opt("port", 8000)))
    return 0


def cmd_match(args) -> int:
    from . import matching

    run = Run("match", args)
    out = _out_dir(run)
    with open(run.opt("article", required=True), encoding="utf-8") as f:
        raw = json.load(f)
    article = matching.Article(id=str(raw["id"]), abstract=raw["abstract"])
    config = matching.MatchingConfig(
        author_keyword_count=int(run.opt("author_keywords", 250)),
        article_keyword_count=int(run.opt("article_keywords", 15)),
    )
    profiles_dir = Path(run.opt("profiles", required=True))
    authors: dict = {}
    for path in sorted(profiles_dir.glob("*.jsonl")):
        for author_id, articles in matching.load_author_articles(path).items():
            authors.setdefault(author_id, []).extend(articles)
    if not authors:
        raise SaineError(f"no author article files under {profiles_dir}")
    profiles = [matching.build_author_profile(author_id, articles, config)
                for author_id, articles in sorted(authors.items())]
    ranking = matching.rank_authors(article, profiles, config)
    lines = ["author_id,similarity"]
    lines += [f"{author_id},{score!r}" for author_id, score in ranking.ranked]
    _write_text(run.emit(out / "ranking.csv"), "\n".join(lines) + "\n")
    run.write_manifest(out)
    return 0


def cmd_project(args) -> int:
    from . import matching

    run = Run("project", args)
    out = _out_dir(run)
    documents = []
    with open(run.opt("documents", required=True), encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            documents.append((str(row["id"]), str(row.get("owner", "")),
                              row["abstract"]))
    points, eigenvalues = matching.project_2d(documents,
                                              seed=int(run.opt("seed", 0)))
    lines = ["id,owner,x,y"]
    lines += [f"{p.document_id},{p.owner},{p.x!r},{p.y!r}" for p in points]
    _write_text(run.emit(out / "projection.csv"), "\n".join(lines) + "\n")
    _write_text(run.emit(out / "eigenvalues.json"),
                json.dumps({"lambda1": eigenvalues[0],
                            "lambda2": eigenvalues[1]}) + "\n")
    run.write_manifest(out)
    return 0


def cmd_llm_annotate(args) -> int:
    from . import llm_annotation as llm

    run = Run("llm-annotate", args)
    out = _out_dir(run)
    parsed = parse_export(run.opt("export", required=True))
    taxonomy = load_taxonomy(run.opt("taxonomy", required=True))
    names_path = run.opt("category_names")
    category_names = None
    if names_path:
        with open(names_path, encoding="utf-8") as f:
            category_names = json.load(f)

    client_kind = run.opt("client", "replay")
    if client_kind == "replay":
        client = llm.ReplayClient.from_file(run.opt("responses", required=True))
    elif client_kind == "http":
        client = llm.HttpCompletionClient(llm.LlmClientConfig(
            endpoint=run.opt("endpoint", required=True),
            max_length=int(run.opt("max_length", 100000)),
            temperature=float(run.opt("temperature", 0.7))))
    else:
        raise SaineError(f"unknown client kind {client_kind!r}")

    def build_context(task):
        return llm.context_from_task(task, taxonomy, category_names)

    mode = run.opt("mode", "single")
    if mode == "single":
        result = llm.run_single_campaign(parsed.tasks, client, build_context)
        _write_jsonl(run.emit(out / "verdicts.jsonl"), (
            {"task_id": task_id, "verdict": v.verdict.value,
             "suggested_category": v.suggested_category,
             "raw_response": v.raw_response}
            for task_id, v in result.rows))
    elif mode == "multi":
        result = llm.run_multi_campaign(parsed.tasks, client, build_context)
        _write_jsonl(run.emit(out / "verdicts.jsonl"), (
            {"task_id": task_id, "econ": v.econ.value,
             "per_category": [c.value for c in v.per_category],
             "extra_categories": v.extra_categories}
            for task_id, v in result.rows))
    else:
        raise SaineError(f"unknown campaign mode {mode!r}")
    _write_text(run.emit(out / "tally.csv"), result.tally.to_csv())
    run.write_manifest(out)
    print(result.tally.to_csv(), end="")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saine",
        description="Annotation post-processing and inference engine")
    parser.add_argument("--config", help="JSON file of default option values")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def add(name, handler, **flags):
        p = sub.add_parser(name)
        p.set_defaults(handler=handler)
        for flag, kwargs in flags.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, **kwargs)
        return p

    add("parse-export", cmd_parse_export,
        export={}, out={}, taxonomy={})
    add("iaa", cmd_iaa, export={}, out={})
    add("curate", cmd_curate,
        export={}, out={}, taxonomy={}, seed={"type": int})
    add("sample", cmd_sample,
        corpus={}, out={}, seed={"type": int}, ratio={"type": float},
        min_per_class={"type": int})
    add("make-testset", cmd_make_testset,
        corpus={}, out={}, seed={"type": int}, per_class={"type": int},
        classes={})
    add("train", cmd_train,
        corpus={}, out={}, name={}, level={},
        mode={"choices": ["single", "multi"]},
        arch={"choices": ["CNN", "RNN", "DNN", "Transformer", "Linear"]},
        lr={"type": float}, epochs={"type": int}, l2={"type": float},
        seed={"type": int}, max_terms={"type": int},
        register={"action": "store_true", "default": None}, models={})
    add("finetune", cmd_finetune,
        base={}, curated={}, out={}, name={},
        lr={"type": float}, epochs={"type": int}, l2={"type": float},
        seed={"type": int},
        register={"action": "store_true", "default": None}, models={})
    add("evaluate", cmd_evaluate,
        testset={}, out={}, base={}, ft={}, models={},
        base_predictions={}, ft_predictions={}, model_type={})
    add("serve", cmd_serve, models={}, host={}, port={"type": int})
    add("match", cmd_match,
        article={}, profiles={}, out={},
        author_keywords={"type": int}, article_keywords={"type": int})
    add("project", cmd_project, documents={}, out={}, seed={"type": int})
    add("llm-annotate", cmd_llm_annotate,
        mode={"choices": ["single", "multi"]},
        client={"choices": ["replay", "http"]},
        export={}, taxonomy={}, out={}, responses={}, endpoint={},
        category_names={}, temperature={"type": float},
        max_length={"type": int})
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "handler"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.handler(args)
    except SaineError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
