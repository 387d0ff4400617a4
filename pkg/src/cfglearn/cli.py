"""Command-line interface.

Subcommands: dataset-build, train, configure, evaluate, experiment, report.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every run prints its resolved seed(s) and the file format versions to stderr;
stdout carries only the requested results so outputs stay scriptable.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config_space import build_constraints, decode_settings, enumerate_feasible
from .errors import (
    ArgumentError,
    CfgLearnError,
    DataError,
    DegenerateDataError,
    DecodeError,
    DimensionError,
    DivergenceError,
    ClusteringError,
    EnumerationCapError,
    ExternalError,
    FeasibilityError,
    ParseError,
    PersistenceError,
    SchemaError,
)
from .logreg import FeatureScaling, TrainConfig, TrainingSet, log_likelihood, log_likelihood_multi, train, train_multi
from .pipeline import (
    ExperimentConfig,
    assemble_training,
    build_dataset,
    config_id_for_index,
    evaluate_instance,
    kmeans,
    run_experiment,
    stratified_split,
)
from .report import (
    format_summary_table,
    read_summary_csv,
    render_figures,
    summary_from_result,
    write_records_csv,
    write_summary_csv,
)
from .search import SearchProblem, solve
from .solver_adapter import (
    DATASET_FORMAT_VERSION,
    MODEL_FORMAT_VERSION,
    ModelBundle,
    SyntheticSpec,
    load_dataset,
    load_features_csv,
    load_model,
    load_performance_csv,
    load_schema_file,
    save_dataset,
    save_model,
    synthetic_performance,
)

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERICAL_ERROR = 3

_DATA_ERRORS = (
    SchemaError,
    DecodeError,
    DataError,
    ParseError,
    PersistenceError,
    EnumerationCapError,
    ExternalError,
    FeasibilityError,
    ClusteringError,
)
_NUMERICAL_ERRORS = (DivergenceError, DegenerateDataError)
_USAGE_ERRORS = (ArgumentError, DimensionError)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the CLI contract wants 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _print_versions() -> None:
    _log(
        f"cfglearn {__version__} (dataset format {DATASET_FORMAT_VERSION}, "
        f"model format {MODEL_FORMAT_VERSION})"
    )


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        weight_init_scale=args.weight_init_scale,
        l2_penalty=args.l2_penalty,
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learning-rate", type=float, default=0.1)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--weight-init-scale", type=float, default=0.1)
    parser.add_argument("--l2-penalty", type=float, default=0.0)


def cmd_dataset_build(args) -> int:
    schema, extra = load_schema_file(args.schema)
    features = load_features_csv(args.features)
    if args.synthetic:
        with open(args.synthetic) as fh:
            spec = SyntheticSpec.from_dict(json.load(fh))
        feasible = enumerate_feasible(schema, build_constraints(schema, extra))
        total = len(feasible)
        gaps = {}
        for iid, vec in features.items():
            for i, config in enumerate(feasible):
                gaps[(iid, config_id_for_index(i, total))] = synthetic_performance(
                    spec, vec, config
                )
        provenance = {"source": "synthetic", "spec": spec.to_dict()}
        _log(f"synthetic oracle seed: {spec.seed}")
    else:
        raw = load_performance_csv(args.perf)
        gaps = dict(zip(raw.keys, raw.values))
        provenance = {"source": "csv", "path": str(args.perf)}
    ds = build_dataset(
        schema,
        extra,
        features,
        gaps,
        clip_margin=args.clip_margin,
        default_config=args.default_config,
        provenance=provenance,
    )
    save_dataset(args.output, ds)
    _log(
        f"dataset: {len(ds.instance_ids)} instances x {len(ds.configs)} configurations, "
        f"clip_margin={ds.clip_margin}, default={ds.default_config_id}"
    )
    print(args.output)
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = _train_config_from_args(args)
    _log(f"seed: {cfg.seed}")
    ts = assemble_training(args.variant, ds, ds.instance_ids)
    labels = kmeans(ts.X, args.cluster_count, cfg.seed)
    tr, va, te = stratified_split(labels, tuple(args.fractions), cfg.seed)
    if args.standardize_features:
        scaling = FeatureScaling.standardize(ts.X[tr][:, : ds.t])
    else:
        scaling = FeatureScaling.identity(ds.t)
    X = ts.X.copy()
    X[:, : ds.t] = scaling.apply(X[:, : ds.t])
    train_set = TrainingSet(X[tr], ts.Y[tr])
    val_set = TrainingSet(X[va], ts.Y[va]) if va.size else None
    patience = args.patience if val_set is not None else None
    if args.variant == "pao":
        model = train(train_set, cfg, val_set if patience else None, patience)
        train_ll = log_likelihood(model, train_set.X, train_set.Y[:, 0])
        val_ll = log_likelihood(model, val_set.X, val_set.Y[:, 0]) if val_set else None
    else:
        model = train_multi(train_set, cfg, val_set if patience else None, patience)
        train_ll = log_likelihood_multi(model, train_set.X, train_set.Y)
        val_ll = log_likelihood_multi(model, val_set.X, val_set.Y) if val_set else None
    bundle = ModelBundle(args.variant, model, scaling, cfg)
    save_model(args.output, bundle)
    print(f"train_log_likelihood {train_ll!r}")
    print(f"validation_log_likelihood {'n/a' if val_ll is None else repr(val_ll)}")
    print(args.output)
    return 0


def _read_feature_vector(args) -> np.ndarray:
    if args.features is not None:
        try:
            return np.array([float(x) for x in args.features.split(",")], dtype=float)
        except ValueError as exc:
            raise ArgumentError(f"bad inline feature vector: {exc}") from None
    path = Path(args.features_file)
    if path.suffix == ".csv":
        table = load_features_csv(path)
        if args.instance_id is None:
            raise ArgumentError("--instance-id is required with a features CSV")
        if args.instance_id not in table:
            raise DataError(f"instance {args.instance_id!r} not in {path}")
        return table[args.instance_id]
    with path.open() as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a JSON array of numbers")
    return np.array([float(x) for x in doc], dtype=float)


def cmd_configure(args) -> int:
    bundle = load_model(args.model)
    schema, extra = load_schema_file(args.schema)
    features = _read_feature_vector(args)
    if bundle.variant == "pao" and args.formulation == "pai":
        raise ArgumentError("a pao model cannot drive the pai formulation")
    if bundle.variant == "pai" and args.formulation != "pai":
        raise ArgumentError(f"a pai model cannot drive {args.formulation}")
    constraints = build_constraints(schema, extra)
    feasible = enumerate_feasible(schema, constraints)
    _log(f"seed: {args.seed}")
    problem = SearchProblem(
        variant=args.formulation,
        model=bundle.model,
        features=bundle.scaling.apply(features),
        feasible=tuple(feasible),
        r_grid_points=args.r_grid_points,
        constraints=constraints,
    )
    solution = solve(problem)
    settings = decode_settings(schema, solution.config)
    for name, label in settings.items():
        print(f"{name} = {label}")
    print(f"r = {solution.r!r}")
    print(f"objective = {solution.objective!r}")
    if solution.sigma is not None:
        print(f"sigma = {solution.sigma!r}")
    if args.output:
        record = {
            "formulation": args.formulation,
            "bits": list(solution.config.bits),
            "settings": settings,
            "r": solution.r,
            "objective": solution.objective,
            "sigma": solution.sigma,
        }
        with open(args.output, "w") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.dataset)
    record = evaluate_instance(ds, args.instance_id, args.config_id)
    print(f"score = {record.score!r}")
    print(f"default_score = {record.default_score!r}")
    print(f"improved = {record.improved}")
    print(f"non_worsened = {record.non_worsened}")
    print(f"pd = {record.pd!r}")
    return 0


def _write_experiment_outputs(result, out_dir: Path) -> None:
    data = summary_from_result(result)
    table = format_summary_table(data)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.txt").write_text(table)
    write_summary_csv(out_dir / "summary.csv", data)
    for run in result.runs:
        run_dir = out_dir / "runs" / str(run.run_index)
        outcomes = [o for v in run.variant_runs.values() for o in v.outcomes]
        write_records_csv(run_dir / "records.csv", outcomes)
        meta = {
            "run_index": run.run_index,
            "out_of_sample": list(run.out_of_sample),
            "variants": {
                v: {
                    "failed_instances": list(vr.failed_instances),
                    **vr.metadata,
                }
                for v, vr in run.variant_runs.items()
            },
        }
        with (run_dir / "run.json").open("w") as fh:
            json.dump(meta, fh, indent=2, default=repr)
            fh.write("\n")
    render_figures(data, out_dir)
    print(table, end="")


def cmd_experiment(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    if "dataset" not in doc:
        raise ArgumentError("experiment config must name a dataset path")
    dataset_path = Path(doc["dataset"])
    if not dataset_path.is_absolute():
        dataset_path = Path(args.config).parent / dataset_path
    ds = load_dataset(dataset_path)
    cfg = ExperimentConfig.from_dict(doc)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    _log(f"master seed: {cfg.master_seed}")
    result = run_experiment(ds, cfg, jobs=args.jobs)
    _write_experiment_outputs(result, Path(args.output_dir))
    return 0


def cmd_report(args) -> int:
    data = read_summary_csv(Path(args.input_dir) / "summary.csv")
    out_dir = Path(args.output_dir if args.output_dir else args.input_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = format_summary_table(data)
    (out_dir / "summary.txt").write_text(table)
    paths = render_figures(data, out_dir)
    _log("figures: " + ", ".join(str(p) for p in paths))
    print(table, end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cfglearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset-build", help="assemble a scored dataset file")
    p.add_argument("--features", required=True, help="features CSV path")
    p.add_argument("--schema", required=True, help="schema JSON path")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--perf", help="performance CSV path")
    source.add_argument("--synthetic", help="synthetic oracle spec JSON path")
    p.add_argument("--clip-margin", type=float, default=1.0)
    p.add_argument("--default-config", default="middle",
                   help="config id, or 'first' / 'middle' (default middle)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_dataset_build)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", choices=("pao", "pai"), required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--cluster-count", type=int, default=5)
    p.add_argument("--fractions", type=float, nargs=3, default=(0.75, 0.20, 0.05))
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--standardize-features", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("configure", help="pick a configuration for one instance")
    p.add_argument("--model", required=True)
    p.add_argument("--schema", required=True)
    feat = p.add_mutually_exclusive_group(required=True)
    feat.add_argument("--features", help="inline comma-separated feature vector")
    feat.add_argument("--features-file", help="JSON array or features CSV")
    p.add_argument("--instance-id", default=None, help="row to pick from a features CSV")
    p.add_argument(
        "--formulation",
        choices=("pao-direct", "pao-likelihood", "pao-weighted", "pai"),
        required=True,
    )
    p.add_argument("--r-grid-points", type=int, default=101)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="write a JSON record here")
    p.set_defaults(fn=cmd_configure)

    p = sub.add_parser("evaluate", help="compare a stored configuration to the default")
    p.add_argument("--dataset", required=True)
    p.add_argument("--instance-id", required=True)
    p.add_argument("--config-id", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("experiment", help="run the repeated-split experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("report", help="re-render table and figures from summary.csv")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_versions()
    try:
        return args.fn(args)
    except _USAGE_ERRORS as exc:
        _log(f"error: {exc}")
        return USAGE_ERROR
    except _NUMERICAL_ERRORS as exc:
        _log(f"numerical failure: {exc}")
        return NUMERICAL_ERROR
    except _DATA_ERRORS as exc:
        _log(f"data error: {exc}")
        return DATA_ERROR
    except CfgLearnError as exc:
        _log(f"error: {exc}")
        return DATA_ERROR
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return DATA_ERROR
    except json.JSONDecodeError as exc:
        _log(f"parse error: {exc}")
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
