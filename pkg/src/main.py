import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv
# Load .env file without overwriting existing environment variables
load_dotenv(override=False)

from . import __version__
from .artifacts import Bundle, manifest, provenance
from .config import Config
from .data import Dataset, SplitPair, eda_report, feature_stats, file_checksum, load_csv, load_schema, stratified_split
from .ensemble import Model, load_model, predict, predict_proba, save_model
from .errors import ConfigError, InputError, OsteoriskError, UsageError
from .explain import (
    LimeConfig,
    concordance,
    lime_explain,
    permutation_importance,
    shap_summary,
    tree_shap,
    waterfall_from_attribution,
)
from .families import ALIASES, FAMILY_ORDER, REPORTED_METRICS, REPORTED_PARAMS, fit_model, resolve_family
from .logging_utils import configure_logging
from .metrics import evaluate_predictions, match_reported
from .params import ParamsConfig
from .tuning import grid_search, load_grid

logger = logging.getLogger(__name__)

COMMANDS = ("ingest", "eda", "tune", "train", "evaluate", "explain", "report", "pipeline")
METHODS = ("shap", "lime", "pfi", "concordance")
PIPELINE_LIME_INSTANCES = (0, 100)


@dataclass
class Experiment:
    """The ingested dataset, its stratified split and the run's provenance."""
    dataset: Dataset
    split: SplitPair
    checksum: str
    seed: int
    test_fraction: float

    def provenance(self, **extra) -> dict:
        return provenance(self.seed, self.checksum, test_fraction=self.test_fraction, **extra)


def build_parser(config: Config) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osteorisk",
        description="Osteoporosis risk models, evaluation and explanations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--csv", default=config.csv_path, help="dataset CSV")
    parser.add_argument("--schema", default=config.schema_path, help="schema config JSON")
    parser.add_argument("--seed", type=int, default=config.seed)
    parser.add_argument("--test-fraction", type=float, default=config.test_fraction)
    parser.add_argument("--folds", type=int, default=config.folds)
    parser.add_argument("--n-jobs", type=int, default=config.n_jobs)
    parser.add_argument("--family", choices=sorted(ALIASES), help="model family")
    parser.add_argument("--grid", help="grid file for tune (default config/grids/<family>.json)")
    parser.add_argument("--params", help="hyperparameter file for train")
    parser.add_argument("--model", help="model file (default <out>/<family>/model.json)")
    parser.add_argument("--out", default=config.output_dir, help="output (bundle) directory")
    parser.add_argument("--method", choices=METHODS, default="shap", help="explanation method")
    parser.add_argument("--instance", type=int, action="append",
                        help="test-split row index to explain (repeatable)")
    parser.add_argument("--metric", default="accuracy", help="permutation importance metric")
    parser.add_argument("--repeats", type=int, default=10, help="permutation importance repeats")
    parser.add_argument("--tune", action="store_true", help="pipeline: grid-search every family")
    return parser


def _require_file(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"Missing {what} path")
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def shipped_file(*parts: str) -> str:
    """A repository config file, looked up in the working directory first, then next to src/."""
    possible_paths = [
        os.path.join(*parts),
        os.path.join(os.path.dirname(__file__), "..", *parts),
    ]
    for path in possible_paths:
        if os.path.exists(path):
            return path
    return possible_paths[0]


def _family(args) -> str:
    if not args.family:
        raise UsageError(f"Command '{args.command}' needs --family")
    return resolve_family(args.family)


def load_experiment(args) -> Experiment:
    """Load the CSV and recompute the deterministic split."""
    csv_path = _require_file(args.csv, "Dataset CSV")
    schema_path = _require_file(args.schema, "Schema config")
    if not 0.0 < args.test_fraction < 1.0:
        raise UsageError("--test-fraction must lie strictly between 0 and 1")
    dataset = load_csv(csv_path, load_schema(schema_path))
    split = stratified_split(dataset, args.test_fraction, args.seed)
    return Experiment(dataset=dataset, split=split, checksum=file_checksum(csv_path),
                      seed=args.seed, test_fraction=args.test_fraction)


def _model_path(args, family: Optional[str]) -> Path:
    if args.model:
        return Path(_require_file(args.model, "Model file"))
    if not family:
        raise UsageError(f"Command '{args.command}' needs --model or --family")
    path = Path(args.out) / family / "model.json"
    if not path.is_file():
        raise UsageError(f"Model file not found: {path} (run train or tune first)")
    return path


def _load_model(args, experiment: Experiment) -> Model:
    family = resolve_family(args.family) if args.family else None
    model, stored = load_model(_model_path(args, family))
    if stored.get("dataset_checksum") not in (None, experiment.checksum):
        logger.warning("Model was trained on a different dataset file than the one loaded")
    if stored.get("seed") not in (None, experiment.seed):
        logger.warning(f"Model was trained with seed {stored.get('seed')}, evaluating with seed {experiment.seed}")
    return model


# -- stages ---------------------------------------------------------------
# Each stage adds artifacts to the bundle; nothing is written until the
# whole command has succeeded.

def stage_ingest(bundle: Bundle, experiment: Experiment):
    split = experiment.split
    bundle.add_json("ingest.json", {
        **experiment.provenance(),
        "row_count": experiment.dataset.row_count,
        "class_counts": experiment.dataset.class_counts(),
        "train_rows": split.train.row_count,
        "test_rows": split.test.row_count,
        "train_class_counts": split.train.class_counts(),
        "test_class_counts": split.test.class_counts(),
        "schema": experiment.dataset.schema.to_dict(),
        "schema_fingerprint": experiment.dataset.schema.fingerprint,
    })
    bundle.add_json("split.json", {
        **experiment.provenance(),
        "train_row_ids": split.train.row_ids,
        "test_row_ids": split.test.row_ids,
    })


def stage_eda(bundle: Bundle, experiment: Experiment):
    report = eda_report(experiment.dataset)
    bundle.add_json("eda.json", {**experiment.provenance(), **report.to_dict()})
    bundle.add_csv("correlation.csv", report.correlation, index=True)


def stage_train(bundle: Bundle, experiment: Experiment, family: str, params_path: Optional[str],
                n_jobs: int) -> Model:
    config = ParamsConfig(family, params_path)
    model = fit_model(family, experiment.split.train, config.params, seed=experiment.seed, n_jobs=n_jobs)
    save_model(model, f"{family}/model.json", experiment.provenance(params_source=config.source),
               write=bundle.add_json)
    return model


def stage_tune(bundle: Bundle, experiment: Experiment, family: str, grid_path: Optional[str],
               folds: int, n_jobs: int) -> Model:
    if grid_path is None:
        grid_path = shipped_file("config", "grids", f"{family}.json")
    grid = load_grid(_require_file(grid_path, "Grid file"))
    if grid.family != family:
        raise ConfigError(f"Grid file {grid_path} is for '{grid.family}', not '{family}'")
    reported = _reported_candidate(grid, family)
    result = grid_search(experiment.split.train, grid, k=folds, seed=experiment.seed, n_jobs=n_jobs,
                         extra_candidates=[reported] if reported else [])
    bundle.add_json(f"{family}/cv_results.json", {**experiment.provenance(), **result.to_dict()})
    save_model(result.model, f"{family}/model.json", experiment.provenance(params_source=str(grid_path)),
               write=bundle.add_json)
    return result.model


def _reported_candidate(grid, family: str) -> dict:
    """The published winner restricted to the grid's axes."""
    axes = {name for name, _ in grid.axes}
    reported = REPORTED_PARAMS.get(family, {})
    return {name: value for name, value in reported.items() if name in axes}


def stage_evaluate(bundle: Bundle, experiment: Experiment, model: Model) -> dict:
    test = experiment.split.test
    scores = predict_proba(model, test)[:, 1]
    report = evaluate_predictions(test.labels, predict(model, test.features), scores)
    payload = {
        **experiment.provenance(),
        **report.to_dict(),
        "family": model.family,
        "params": model.params,
        "rows": test.row_count,
        "decision_rule": "positive when P(1) >= 0.5",
        "reported_comparison": match_reported(report, REPORTED_METRICS[model.family]),
    }
    bundle.add_json(f"{model.family}/metrics.json", payload)
    bundle.add_csv(f"{model.family}/roc.csv", report.roc_frame())
    bundle.add_csv(f"{model.family}/confusion.csv", report.confusion.to_frame(), index=True)
    return payload


def _instances(requested: Optional[Sequence[int]], test: Dataset, defaults: Sequence[int]) -> List[int]:
    if requested:
        for index in requested:
            if not 0 <= index < test.row_count:
                raise UsageError(f"--instance {index} is outside the test split (0..{test.row_count - 1})")
        return list(requested)
    return [index for index in defaults if index < test.row_count]


def stage_shap(bundle: Bundle, experiment: Experiment, model: Model, instances: Sequence[int], n_jobs: int):
    test = experiment.split.test
    summary = shap_summary(model, test, n_jobs=n_jobs)
    bundle.add_json(f"{model.family}/shap_summary.json", {
        **experiment.provenance(), **summary.to_dict(),
        "family": model.family, "matrix_file": "shap_matrix.csv",
    })
    bundle.add_csv(f"{model.family}/shap_matrix.csv", summary.matrix_frame(test.features))
    waterfalls = []
    for index in instances:
        x = test.features[index]
        waterfall = waterfall_from_attribution(tree_shap(model, x), test.feature_names, x)
        waterfalls.append({"instance": index, "row_id": int(test.row_ids[index]), **waterfall.to_dict()})
    bundle.add_json(f"{model.family}/waterfall.json", {
        **experiment.provenance(), "family": model.family,
        "output_space": model.output_space, "waterfalls": waterfalls,
    })
    return summary


def stage_lime(bundle: Bundle, experiment: Experiment, model: Model, instances: Sequence[int]):
    stats = feature_stats(experiment.split.train)
    test = experiment.split.test
    explanations = []
    for index in instances:
        cfg = LimeConfig(seed=experiment.seed)
        explanation = lime_explain(lambda rows: predict_proba(model, rows), test.features[index], stats, cfg)
        explanations.append({"instance": index, "row_id": int(test.row_ids[index]),
                             "true_label": int(test.labels[index]), **explanation.to_dict()})
    bundle.add_json(f"{model.family}/lime.json", {
        **experiment.provenance(), "family": model.family, "explanations": explanations,
    })


def stage_pfi(bundle: Bundle, experiment: Experiment, model: Model, metric: str, repeats: int, n_jobs: int):
    report = permutation_importance(model, experiment.split.test, metric=metric, n_repeats=repeats,
                                    seed=experiment.seed, n_jobs=n_jobs)
    bundle.add_json(f"{model.family}/pfi.json", {**experiment.provenance(), "family": model.family,
                                                 **report.to_dict()})
    return report


def stage_concordance(bundle: Bundle, experiment: Experiment, model: Model, metric: str, repeats: int,
                      n_jobs: int):
    summary = shap_summary(model, experiment.split.test, n_jobs=n_jobs)
    report = permutation_importance(model, experiment.split.test, metric=metric, n_repeats=repeats,
                                    seed=experiment.seed, n_jobs=n_jobs)
    bundle.add_json(f"{model.family}/concordance.json", {
        **experiment.provenance(), "family": model.family, **concordance(summary, report),
    })


def comparison_table(rows: List[dict]) -> pd.DataFrame:
    """Accuracy descending, ties by family name."""
    if not rows:
        raise InputError("No evaluate artifacts found; run evaluate for at least one family")
    frame = pd.DataFrame(rows, columns=["family", "accuracy", "precision_macro", "recall_macro", "f1_macro",
                                        "precision_weighted", "recall_weighted", "f1_weighted", "auc"])
    return frame.sort_values(["accuracy", "family"], ascending=[False, True], kind="mergesort").reset_index(drop=True)


def _comparison_row(metrics: dict) -> dict:
    return {
        "family": metrics["family"],
        "accuracy": metrics["accuracy"],
        "precision_macro": metrics["macro"]["precision"],
        "recall_macro": metrics["macro"]["recall"],
        "f1_macro": metrics["macro"]["f1"],
        "precision_weighted": metrics["weighted"]["precision"],
        "recall_weighted": metrics["weighted"]["recall"],
        "f1_weighted": metrics["weighted"]["f1"],
        "auc": metrics["auc"],
    }


def stage_report(bundle: Bundle, rows: List[dict], seed: Optional[int], checksum: Optional[str]) -> pd.DataFrame:
    table = comparison_table(rows)
    bundle.add_json("comparison.json", {**provenance(seed, checksum), "rows": table.to_dict(orient="records")})
    bundle.add_csv("comparison.csv", table)
    return table


def _collect_metrics(out_dir: Path) -> List[dict]:
    rows = []
    for family in sorted(FAMILY_ORDER):
        path = out_dir / family / "metrics.json"
        if path.is_file():
            with open(path, "r", encoding="utf-8") as f:
                rows.append(json.load(f))
    return rows


# -- commands -------------------------------------------------------------

def cmd_ingest(args) -> Bundle:
    experiment = load_experiment(args)
    bundle = Bundle(args.out)
    stage_ingest(bundle, experiment)
    bundle.add_json("manifest.json", manifest("ingest", experiment.seed, experiment.checksum))
    return bundle


def cmd_eda(args) -> Bundle:
    experiment = load_experiment(args)
    bundle = Bundle(args.out)
    stage_eda(bundle, experiment)
    bundle.add_json("manifest.json", manifest("eda", experiment.seed, experiment.checksum))
    return bundle


def cmd_train(args) -> Bundle:
    family = _family(args)
    if args.params:
        _require_file(args.params, "Params file")
    experiment = load_experiment(args)
    bundle = Bundle(args.out)
    stage_train(bundle, experiment, family, args.params, args.n_jobs)
    bundle.add_json("manifest.json", manifest("train", experiment.seed, experiment.checksum, family=family))
    return bundle


def cmd_tune(args) -> Bundle:
    family = _family(args)
    if args.grid:
        _require_file(args.grid, "Grid file")
    experiment = load_experiment(args)
    bundle = Bundle(args.out)
    stage_tune(bundle, experiment, family, args.grid, args.folds, args.n_jobs)
    bundle.add_json("manifest.json", manifest("tune", experiment.seed, experiment.checksum, family=family))
    return bundle


def cmd_evaluate(args) -> Bundle:
    experiment = load_experiment(args)
    model = _load_model(args, experiment)
    bundle = Bundle(args.out)
    stage_evaluate(bundle, experiment, model)
    bundle.add_json("manifest.json", manifest("evaluate", experiment.seed, experiment.checksum,
                                              family=model.family))
    return bundle


def cmd_explain(args) -> Bundle:
    experiment = load_experiment(args)
    model = _load_model(args, experiment)
    test = experiment.split.test
    bundle = Bundle(args.out)
    if args.method == "shap":
        stage_shap(bundle, experiment, model, _instances(args.instance, test, (0,)), args.n_jobs)
    elif args.method == "lime":
        stage_lime(bundle, experiment, model, _instances(args.instance, test, PIPELINE_LIME_INSTANCES))
    elif args.method == "pfi":
        stage_pfi(bundle, experiment, model, args.metric, args.repeats, args.n_jobs)
    else:
        stage_concordance(bundle, experiment, model, args.metric, args.repeats, args.n_jobs)
    bundle.add_json("manifest.json", manifest("explain", experiment.seed, experiment.checksum,
                                              family=model.family, method=args.method))
    return bundle


def cmd_report(args) -> Bundle:
    out_dir = Path(args.out)
    collected = _collect_metrics(out_dir)
    rows = [_comparison_row(metrics) for metrics in collected]
    bundle = Bundle(out_dir)
    seeds = {metrics.get("seed") for metrics in collected}
    checksums = {metrics.get("dataset_checksum") for metrics in collected}
    if len(seeds) > 1 or len(checksums) > 1:
        logger.warning("Bundle mixes artifacts from different seeds or datasets")
    table = stage_report(bundle, rows, next(iter(seeds), None), next(iter(checksums), None))
    print(table.to_string(index=False))
    return bundle


def cmd_pipeline(args) -> Bundle:
    """ingest, eda, train or tune every family, evaluate, explain the best tree family, report."""
    experiment = load_experiment(args)
    bundle = Bundle(args.out)
    stage_ingest(bundle, experiment)
    stage_eda(bundle, experiment)

    evaluated = []
    models = {}
    for family in FAMILY_ORDER:
        if args.tune:
            model = stage_tune(bundle, experiment, family, None, args.folds, args.n_jobs)
        else:
            model = stage_train(bundle, experiment, family, None, args.n_jobs)
        models[family] = model
        evaluated.append(stage_evaluate(bundle, experiment, model))

    tree_rows = [metrics for metrics in evaluated if models[metrics["family"]].is_tree_family]
    best = sorted(tree_rows, key=lambda m: (-m["accuracy"], m["family"]))[0]["family"]
    logger.info(f"Explaining the best tree family: {best}")
    model = models[best]
    test = experiment.split.test
    summary = stage_shap(bundle, experiment, model, _instances(None, test, PIPELINE_LIME_INSTANCES), args.n_jobs)
    stage_lime(bundle, experiment, model, _instances(None, test, PIPELINE_LIME_INSTANCES))
    pfi = stage_pfi(bundle, experiment, model, args.metric, args.repeats, args.n_jobs)
    bundle.add_json(f"{best}/concordance.json", {
        **experiment.provenance(), "family": best, **concordance(summary, pfi),
    })

    table = stage_report(bundle, [_comparison_row(metrics) for metrics in evaluated],
                         experiment.seed, experiment.checksum)
    bundle.add_json("manifest.json", manifest("pipeline", experiment.seed, experiment.checksum,
                                              explained_family=best, tuned=bool(args.tune)))
    print(table.to_string(index=False))
    return bundle


HANDLERS = {
    "ingest": cmd_ingest,
    "eda": cmd_eda,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    try:
        config = Config()
    except ConfigError as e:
        print(f"osteorisk: configuration error: {e}", file=sys.stderr)
        return 2

    configure_logging(
        log_level=config.log_level,
        logs_dir=config.logs_dir or None,
        exclude_library_logs=config.exclude_library_logs,
        model_log_level=config.model_log_level,
    )

    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.n_jobs < 1 or args.folds < 2:
        print("osteorisk: --n-jobs must be >= 1 and --folds >= 2", file=sys.stderr)
        return 2

    logger.info(f"osteorisk {__version__}: {args.command} (seed {args.seed})")
    try:
        bundle = HANDLERS[args.command](args)
        bundle.flush()
    except OsteoriskError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"osteorisk: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
