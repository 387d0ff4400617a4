"""End-to-end experiment harness: dataset assembly, clustered stratified
splitting, training, per-instance configuration search, and aggregation of
improvement / non-worsening / performance-difference statistics over
repeated runs."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .config_space import (
    Configuration,
    ConstraintSystem,
    LinearInequality,
    ParameterSchema,
    build_constraints,
    decode_settings,
    enumerate_feasible,
)
from .errors import ArgumentError, ClusteringError, DataError, CfgLearnError
from .logreg import (
    FeatureScaling,
    LinearModel,
    MultiOutputModel,
    TrainConfig,
    TrainingSet,
    log_likelihood,
    log_likelihood_multi,
    train,
    train_multi,
)
from .perf_map import rank_scale
from .search import SearchProblem, solve

VARIANTS = ("pao", "pai")

# A chosen score may fall this far below the baseline and still count as
# a non-worsening.
NON_WORSENING_SLACK = 0.001


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features, feasible configurations, and rank-scaled scores."""

    schema: ParameterSchema
    extra_constraints: tuple[LinearInequality, ...]
    constraints: ConstraintSystem
    features: dict[str, np.ndarray]
    config_ids: tuple[str, ...]
    configs: tuple[Configuration, ...]
    scores: dict[tuple[str, str], float]
    clip_margin: float
    default_config_id: str
    provenance: dict

    def __post_init__(self) -> None:
        if len(self.config_ids) != len(self.configs):
            raise DataError("configuration ids and configurations must align")
        if self.default_config_id not in self.config_ids:
            raise DataError(
                f"default configuration {self.default_config_id!r} not in dataset"
            )
        widths = {v.shape[0] for v in self.features.values()}
        if len(widths) != 1:
            raise DataError("all feature vectors must share one length")
        object.__setattr__(
            self,
            "_bits_to_id",
            {c.bits: cid for cid, c in zip(self.config_ids, self.configs)},
        )

    @property
    def t(self) -> int:
        return next(iter(self.features.values())).shape[0]

    @property
    def instance_ids(self) -> tuple[str, ...]:
        return tuple(self.features.keys())

    def config_id_of(self, config: Configuration) -> str:
        cid = self._bits_to_id.get(config.bits)
        if cid is None:
            raise DataError("configuration is not part of this dataset")
        return cid

    def score(self, instance_id: str, config_id: str) -> float:
        try:
            return self.scores[(instance_id, config_id)]
        except KeyError:
            raise DataError(
                f"no score recorded for ({instance_id!r}, {config_id!r})"
            ) from None


def config_id_for_index(index: int, total: int) -> str:
    width = max(4, len(str(max(total - 1, 0))))
    return f"c{index:0{width}d}"


def resolve_default_config(config_ids: Sequence[str], spec: str) -> str:
    """Map 'first' / 'middle' / explicit id to a concrete config id."""
    if spec == "first":
        return config_ids[0]
    if spec == "middle":
        return config_ids[len(config_ids) // 2]
    if spec in config_ids:
        return spec
    raise DataError(f"default configuration {spec!r} not found")


def build_dataset(
    schema: ParameterSchema,
    extra_constraints: Sequence[LinearInequality],
    features: Mapping[str, Sequence[float]],
    gaps: Mapping[tuple[str, str], float],
    clip_margin: float = 1.0,
    default_config: str = "middle",
    provenance: dict | None = None,
    enumeration_cap: int | None = None,
) -> Dataset:
    """Enumerate the feasible set, collect one gap per (instance, config)
    pair, and rank-scale the gaps globally into scores."""
    if not features:
        raise DataError("at least one instance with features is required")
    constraints = build_constraints(schema, tuple(extra_constraints))
    kwargs = {} if enumeration_cap is None else {"cap": enumeration_cap}
    configs = tuple(enumerate_feasible(schema, constraints, **kwargs))
    if not configs:
        raise DataError("constraint system leaves no feasible configuration")
    config_ids = tuple(
        config_id_for_index(i, len(configs)) for i in range(len(configs))
    )
    feat = {iid: np.asarray(vec, dtype=float) for iid, vec in features.items()}
    keys: list[tuple[str, str]] = []
    values: list[float] = []
    for iid in feat:
        for cid in config_ids:
            if (iid, cid) not in gaps:
                raise DataError(f"missing gap for pair ({iid!r}, {cid!r})")
            keys.append((iid, cid))
            values.append(float(gaps[(iid, cid)]))
    scaled = rank_scale(values, clip_margin)
    scores = dict(zip(keys, scaled.scores))
    return Dataset(
        schema=schema,
        extra_constraints=tuple(extra_constraints),
        constraints=constraints,
        features=feat,
        config_ids=config_ids,
        configs=configs,
        scores=scores,
        clip_margin=float(clip_margin),
        default_config_id=resolve_default_config(config_ids, default_config),
        provenance=provenance or {},
    )


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
) -> np.ndarray:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Iterates until assignments stabilize or ``max_iter`` passes; a cluster
    that empties is re-seeded to the point farthest from its assigned
    centroid.  Deterministic given the seed.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ArgumentError("points must be a non-empty 2-d array")
    n = points.shape[0]
    distinct = np.unique(points, axis=0).shape[0]
    if k < 1 or k > distinct:
        raise ClusteringError(
            f"cannot form {k} clusters from {distinct} distinct points"
        )
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, points.shape[1]), dtype=float)
    centroids[0] = points[int(rng.integers(n))]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            # All remaining mass sits on chosen points; fall back to uniform.
            probs = np.full(n, 1.0 / n)
        else:
            probs = d2 / total
        centroids[j] = points[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))

    labels = np.full(n, -1, dtype=int)
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        for j in range(k):
            member = new_labels == j
            if not member.any():
                assigned = dists[np.arange(n), new_labels]
                far = int(np.argmax(assigned))
                centroids[j] = points[far]
                new_labels[far] = j
            else:
                centroids[j] = points[member].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def split_instances(
    instance_ids: Sequence[str], n_out: int, seed: int
) -> tuple[frozenset[str], frozenset[str]]:
    """Uniformly draw ``n_out`` held-out instances; returns (in, out) sets."""
    ids = sorted(instance_ids)
    if not 0 < n_out < len(ids):
        raise ArgumentError(
            f"n_out must be strictly between 0 and {len(ids)}, got {n_out}"
        )
    rng = np.random.default_rng(seed)
    out_idx = rng.choice(len(ids), size=n_out, replace=False)
    out = frozenset(ids[i] for i in out_idx)
    return frozenset(ids) - out, out


def assemble_training(
    variant: str, ds: Dataset, in_sample: Sequence[str]
) -> TrainingSet:
    """Build the training matrix for one variant.

    pao rows are x = (features, config bits), y = score; pai rows are
    x = (features, score), y = config bits.  Row order is instances ascending,
    configurations in dataset (lexicographic) order.
    """
    if variant not in VARIANTS:
        raise ArgumentError(f"unknown variant {variant!r}")
    ids = sorted(in_sample)
    if not ids:
        raise DataError("in-sample instance set is empty")
    missing = [g for g in ids if g not in ds.features]
    if missing:
        raise DataError(f"instances without features: {missing}")
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    for g in ids:
        f = ds.features[g]
        for cid, config in zip(ds.config_ids, ds.configs):
            score = ds.score(g, cid)
            bits = np.asarray(config.bits, dtype=float)
            if variant == "pao":
                xs.append(np.concatenate([f, bits]))
                ys.append(np.array([score]))
            else:
                xs.append(np.concatenate([f, [score]]))
                ys.append(bits)
    return TrainingSet(np.array(xs), np.array(ys))


def _largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    exact = [f * n for f in fractions]
    base = [int(np.floor(e)) for e in exact]
    rem = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return base


def stratified_split(
    labels: Sequence[int],
    fractions: Sequence[float] = (0.75, 0.20, 0.05),
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffle each cluster and allot rows to (train, validation, test) by
    largest-remainder rounding of the fractions."""
    labels = np.asarray(labels)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ArgumentError("fractions must be three non-negative numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ArgumentError("fractions must sum to 1")
    rng = np.random.default_rng(seed)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for cluster in np.unique(labels):
        idx = np.flatnonzero(labels == cluster)
        idx = idx[rng.permutation(idx.shape[0])]
        n_tr, n_va, n_te = _largest_remainder(idx.shape[0], fractions)
        parts[0].extend(idx[:n_tr])
        parts[1].extend(idx[n_tr : n_tr + n_va])
        parts[2].extend(idx[n_tr + n_va :])
    return tuple(np.array(sorted(p), dtype=int) for p in parts)


@dataclass(frozen=True)
class EvaluationRecord:
    """Outcome of evaluating one chosen configuration against the default."""

    instance_id: str
    config_id: str
    score: float
    default_score: float
    improved: bool
    non_worsened: bool
    pd: float


def evaluate_instance(
    ds: Dataset, instance_id: str, chosen: Configuration | str
) -> EvaluationRecord:
    """Look up stored scores; never re-solves anything."""
    if isinstance(chosen, Configuration):
        config_id = ds.config_id_of(chosen)
    else:
        if chosen not in ds.config_ids:
            raise DataError(f"unknown configuration id {chosen!r}")
        config_id = chosen
    score = ds.score(instance_id, config_id)
    base = ds.score(instance_id, ds.default_config_id)
    return EvaluationRecord(
        instance_id=instance_id,
        config_id=config_id,
        score=score,
        default_score=base,
        improved=score > base,
        non_worsened=score >= base - NON_WORSENING_SLACK,
        pd=abs(score - base),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a repeated experiment needs besides the dataset itself."""

    variant: str = "pao"
    formulation: str = "pao-weighted"
    repeats: int = 10
    n_out: int = 11
    cluster_count: int = 5
    fractions: tuple[float, float, float] = (0.75, 0.20, 0.05)
    master_seed: int = 0
    r_grid_points: int = 101
    training: TrainConfig = field(default_factory=TrainConfig)
    patience: int | None = None
    standardize_features: bool = False

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS + ("both",):
            raise ArgumentError(f"variant must be one of {VARIANTS + ('both',)}")
        if self.formulation not in ("pao-direct", "pao-likelihood", "pao-weighted"):
            raise ArgumentError(
                "formulation must be pao-direct, pao-likelihood or pao-weighted"
            )
        if self.repeats < 1:
            raise ArgumentError("repeats must be at least 1")
        if self.master_seed < 0:
            raise ArgumentError("master_seed must be non-negative")

    @property
    def variants(self) -> tuple[str, ...]:
        return VARIANTS if self.variant == "both" else (self.variant,)

    def to_dict(self) -> dict:
        d = {
            "variant": self.variant,
            "formulation": self.formulation,
            "repeats": self.repeats,
            "n_out": self.n_out,
            "cluster_count": self.cluster_count,
            "fractions": list(self.fractions),
            "master_seed": self.master_seed,
            "r_grid_points": self.r_grid_points,
            "training": {
                "learning_rate": self.training.learning_rate,
                "epochs": self.training.epochs,
                "batch_size": self.training.batch_size,
                "seed": self.training.seed,
                "weight_init_scale": self.training.weight_init_scale,
                "l2_penalty": self.training.l2_penalty,
            },
            "patience": self.patience,
            "standardize_features": self.standardize_features,
        }
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "ExperimentConfig":
        known = {
            "variant",
            "formulation",
            "repeats",
            "n_out",
            "cluster_count",
            "fractions",
            "master_seed",
            "r_grid_points",
            "training",
            "patience",
            "standardize_features",
        }
        unknown = set(d) - known - {"dataset"}
        if unknown:
            raise ArgumentError(f"unknown experiment config keys: {sorted(unknown)}")
        kwargs = {k: d[k] for k in known if k in d}
        if "fractions" in kwargs:
            kwargs["fractions"] = tuple(kwargs["fractions"])
        if "training" in kwargs:
            kwargs["training"] = TrainConfig(**kwargs["training"])
        return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class InstanceOutcome:
    """One configuration-search result plus its evaluation."""

    instance_id: str
    config_id: str
    bits: tuple[int, ...]
    settings: tuple[str, ...]
    r: float
    objective: float
    sigma: float | None
    score: float
    default_score: float
    improved: bool
    non_worsened: bool
    pd: float
    solve_seconds: float


@dataclass(frozen=True)
class VariantRun:
    """Per-run counters for one variant."""

    variant: str
    outcomes: tuple[InstanceOutcome, ...]
    failed_instances: tuple[str, ...]
    im: int
    nw: int
    attempts: int
    pd_mean: float
    cpu_seconds: float
    metadata: dict


@dataclass(frozen=True)
class RunRecord:
    run_index: int
    out_of_sample: tuple[str, ...]
    variant_runs: dict[str, VariantRun]


def _derived_seeds(master_seed: int, run_index: int) -> dict[str, int]:
    root = np.random.SeedSequence(entropy=(master_seed, run_index))
    names = ("split", "cluster", "stratify", "train")
    return {
        name: int(child.generate_state(1)[0])
        for name, child in zip(names, root.spawn(len(names)))
    }


def run_one(ds: Dataset, cfg: ExperimentConfig, run_index: int) -> RunRecord:
    """A single draw of the split / train / configure / evaluate cycle."""
    seeds = _derived_seeds(cfg.master_seed, run_index)
    in_sample, out_sample = split_instances(ds.instance_ids, cfg.n_out, seeds["split"])
    variant_runs: dict[str, VariantRun] = {}
    for variant in cfg.variants:
        ts = assemble_training(variant, ds, in_sample)
        labels = kmeans(ts.X, cfg.cluster_count, seeds["cluster"])
        tr, va, te = stratified_split(labels, cfg.fractions, seeds["stratify"])
        if cfg.standardize_features:
            scaling = FeatureScaling.standardize(ts.X[tr][:, : ds.t])
        else:
            scaling = FeatureScaling.identity(ds.t)
        X = ts.X.copy()
        X[:, : ds.t] = scaling.apply(X[:, : ds.t])
        train_set = TrainingSet(X[tr], ts.Y[tr])
        val_set = TrainingSet(X[va], ts.Y[va]) if va.size else None
        use_early_stop = cfg.patience is not None and val_set is not None
        train_cfg = replace(cfg.training, seed=seeds["train"])
        patience = cfg.patience if use_early_stop else None
        validation = val_set if use_early_stop else None
        if variant == "pao":
            model: LinearModel | MultiOutputModel = train(
                train_set, train_cfg, validation, patience
            )
            train_ll = log_likelihood(model, train_set.X, train_set.Y[:, 0])
            val_ll = (
                log_likelihood(model, val_set.X, val_set.Y[:, 0]) if val_set else None
            )
            formulation = cfg.formulation
        else:
            model = train_multi(train_set, train_cfg, validation, patience)
            train_ll = log_likelihood_multi(model, train_set.X, train_set.Y)
            val_ll = (
                log_likelihood_multi(model, val_set.X, val_set.Y) if val_set else None
            )
            formulation = "pai"

        outcomes: list[InstanceOutcome] = []
        failed: list[str] = []
        for g in sorted(out_sample):
            f_scaled = scaling.apply(ds.features[g])
            started = time.perf_counter()
            try:
                problem = SearchProblem(
                    variant=formulation,
                    model=model,
                    features=f_scaled,
                    feasible=ds.configs,
                    r_grid_points=cfg.r_grid_points,
                    constraints=ds.constraints,
                )
                solution = solve(problem)
                record = evaluate_instance(ds, g, solution.config)
            except CfgLearnError:
                failed.append(g)
                continue
            elapsed = time.perf_counter() - started
            settings = decode_settings(ds.schema, solution.config)
            outcomes.append(
                InstanceOutcome(
                    instance_id=g,
                    config_id=record.config_id,
                    bits=solution.config.bits,
                    settings=tuple(settings[p.name] for p in ds.schema.parameters),
                    r=solution.r,
                    objective=solution.objective,
                    sigma=solution.sigma,
                    score=record.score,
                    default_score=record.default_score,
                    improved=record.improved,
                    non_worsened=record.non_worsened,
                    pd=record.pd,
                    solve_seconds=elapsed,
                )
            )
        attempts = len(outcomes)
        variant_runs[variant] = VariantRun(
            variant=variant,
            outcomes=tuple(outcomes),
            failed_instances=tuple(failed),
            im=sum(o.improved for o in outcomes),
            nw=sum(o.non_worsened for o in outcomes),
            attempts=attempts,
            pd_mean=(sum(o.pd for o in outcomes) / attempts) if attempts else 0.0,
            cpu_seconds=sum(o.solve_seconds for o in outcomes),
            metadata={
                "seeds": seeds,
                "formulation": formulation,
                "rows": {
                    "train": int(tr.size),
                    "validation": int(va.size),
                    "test": int(te.size),
                },
                "selection": "validation" if use_early_stop else "objective",
                "train_log_likelihood": train_ll,
                "validation_log_likelihood": val_ll,
                "standardize_features": cfg.standardize_features,
            },
        )
    return RunRecord(
        run_index=run_index,
        out_of_sample=tuple(sorted(out_sample)),
        variant_runs=variant_runs,
    )


def _run_indexed(args: tuple[Dataset, ExperimentConfig, int]) -> RunRecord:
    return run_one(*args)


@dataclass(frozen=True)
class VariantSeries:
    """Per-run columns for one variant, in run order."""

    variant: str
    im: tuple[int, ...]
    nw: tuple[int, ...]
    attempts: tuple[int, ...]
    pd: tuple[float, ...]
    cpu: tuple[float, ...]


def population_stdev(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean((arr - arr.mean()) ** 2)))


@dataclass(frozen=True)
class SeriesAggregate:
    """sum / mean / stdev rows for one variant's columns.

    The mean of the count columns is the pooled ratio (total counts over total
    attempts); stdev rows are population standard deviations of the per-run
    values.  stdev entries are None for a single run.
    """

    im_total: int
    nw_total: int
    attempts_total: int
    pd_sum: float
    cpu_sum: float
    im_mean: float
    nw_mean: float
    pd_mean: float
    cpu_mean: float
    im_stdev: float | None
    nw_stdev: float | None
    pd_stdev: float | None
    cpu_stdev: float | None


def aggregate_series(series: VariantSeries) -> SeriesAggregate:
    runs = len(series.im)
    if runs == 0:
        raise ArgumentError("cannot aggregate an empty series")
    att = sum(series.attempts)
    if att == 0:
        raise ArgumentError("cannot aggregate a series with zero attempts")
    im_ratios = [c / a for c, a in zip(series.im, series.attempts)]
    nw_ratios = [c / a for c, a in zip(series.nw, series.attempts)]
    multi = runs > 1
    return SeriesAggregate(
        im_total=sum(series.im),
        nw_total=sum(series.nw),
        attempts_total=att,
        pd_sum=float(sum(series.pd)),
        cpu_sum=float(sum(series.cpu)),
        im_mean=sum(series.im) / att,
        nw_mean=sum(series.nw) / att,
        pd_mean=float(np.mean(series.pd)),
        cpu_mean=float(np.mean(series.cpu)),
        im_stdev=population_stdev(im_ratios) if multi else None,
        nw_stdev=population_stdev(nw_ratios) if multi else None,
        pd_stdev=population_stdev(series.pd) if multi else None,
        cpu_stdev=population_stdev(series.cpu) if multi else None,
    )


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    runs: tuple[RunRecord, ...]

    def series(self, variant: str) -> VariantSeries:
        vrs = [r.variant_runs[variant] for r in self.runs]
        return VariantSeries(
            variant=variant,
            im=tuple(v.im for v in vrs),
            nw=tuple(v.nw for v in vrs),
            attempts=tuple(v.attempts for v in vrs),
            pd=tuple(v.pd_mean for v in vrs),
            cpu=tuple(v.cpu_seconds for v in vrs),
        )

    def aggregate(self, variant: str) -> SeriesAggregate:
        return aggregate_series(self.series(variant))


def run_experiment(ds: Dataset, cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Execute ``cfg.repeats`` independent runs; all randomness derives from
    (master_seed, run_index), so results are reproducible and may be computed
    in parallel."""
    if jobs < 1:
        raise ArgumentError("jobs must be at least 1")
    indices = list(range(cfg.repeats))
    if jobs == 1 or cfg.repeats == 1:
        runs = [run_one(ds, cfg, k) for k in indices]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.repeats)) as pool:
            runs = list(pool.map(_run_indexed, [(ds, cfg, k) for k in indices]))
    return ExperimentResult(config=cfg, runs=tuple(runs))
