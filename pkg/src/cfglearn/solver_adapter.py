"""Performance-data sources and artifact persistence.

Three sources feed the pipeline: CSV files of recorded solver runs, a
deterministic synthetic oracle for desk-scale validation, and an external
command runner.  Repeated runs of one (instance, configuration) pair are
reduced to the second-best gap, which damps solver performance variability.

Datasets and models persist as versioned JSON; floats survive the round trip
exactly because the encoder emits full-precision reprs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
import shlex
import subprocess
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config_space import (
    Configuration,
    LinearInequality,
    Parameter,
    ParameterSchema,
    decode_settings,
)
from .errors import (
    ArgumentError,
    DataError,
    DimensionError,
    ExternalError,
    ParseError,
    PersistenceError,
)
from .logreg import (
    FeatureScaling,
    LinearModel,
    MultiOutputModel,
    TrainConfig,
    sigmoid,
)
from .perf_map import RawPerformance
from .pipeline import Dataset

DATASET_FORMAT_VERSION = 1
MODEL_FORMAT_VERSION = 1

DEFAULT_GAP_PATTERN = r"gap\s*[=:]\s*([0-9.eE+-]+|inf)"


def second_best(gaps: Sequence[float]) -> float:
    """Second-smallest gap (ascending sort, stable ties); the value itself
    for a single run."""
    if not gaps:
        raise DataError("no gap values to reduce")
    ordered = sorted(gaps)
    return ordered[1] if len(ordered) >= 2 else ordered[0]


def _parse_gap_token(token: str, path: str, line_no: int) -> float:
    token = token.strip()
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{path}:{line_no}: bad gap value {token!r}") from None
    if math.isnan(value) or value < 0:
        raise ParseError(f"{path}:{line_no}: gap must be >= 0 or inf, got {token!r}")
    return value


def load_performance_csv(path: str | Path) -> RawPerformance:
    """Read instance_id,config_id,seed,gap rows and reduce seeds per pair to
    the second-best gap.  The literal token ``inf`` marks an unusable run."""
    path = Path(path)
    per_pair: dict[tuple[str, str], list[float]] = {}
    order: list[tuple[str, str]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != [
            "instance_id",
            "config_id",
            "seed",
            "gap",
        ]:
            raise ParseError(f"{path}: expected header instance_id,config_id,seed,gap")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{line_no}: expected 4 columns, got {len(row)}")
            iid, cid, _seed, gap = (c.strip() for c in row)
            if not iid or not cid:
                raise ParseError(f"{path}:{line_no}: empty instance or config id")
            key = (iid, cid)
            if key not in per_pair:
                per_pair[key] = []
                order.append(key)
            per_pair[key].append(_parse_gap_token(gap, str(path), line_no))
    if not per_pair:
        raise DataError(f"{path}: no performance rows")
    values = tuple(second_best(per_pair[key]) for key in order)
    return RawPerformance(tuple(order), values)


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Ground-truth oracle: gap = 1 - sigmoid(hidden score) plus noise, with
    occasional infinities.  A pure function of (seed, features, config)."""

    hidden_weights: np.ndarray
    hidden_bias: float
    noise_std: float = 0.0
    inf_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        w = np.asarray(self.hidden_weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ArgumentError("hidden_weights must be a finite vector")
        object.__setattr__(self, "hidden_weights", w)
        if self.noise_std < 0:
            raise ArgumentError("noise_std must be non-negative")
        if not 0 <= self.inf_probability < 1:
            raise ArgumentError("inf_probability must lie in [0, 1)")
        if self.seed < 0:
            raise ArgumentError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {
            "hidden_weights": [float(x) for x in self.hidden_weights],
            "hidden_bias": float(self.hidden_bias),
            "noise_std": float(self.noise_std),
            "inf_probability": float(self.inf_probability),
            "seed": int(self.seed),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "SyntheticSpec":
        return SyntheticSpec(
            hidden_weights=np.asarray(d["hidden_weights"], dtype=float),
            hidden_bias=float(d["hidden_bias"]),
            noise_std=float(d.get("noise_std", 0.0)),
            inf_probability=float(d.get("inf_probability", 0.0)),
            seed=int(d.get("seed", 0)),
        )


def _pair_rng(spec: SyntheticSpec, f: np.ndarray, c: Configuration) -> np.random.Generator:
    digest = hashlib.sha256()
    digest.update(np.asarray(f, dtype="<f8").tobytes())
    digest.update(bytes(c.bits))
    words = np.frombuffer(digest.digest()[:16], dtype="<u4")
    entropy = (spec.seed,) + tuple(int(w) for w in words)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def synthetic_performance(spec: SyntheticSpec, f: Sequence[float], c: Configuration) -> float:
    """Deterministic synthetic gap for one (features, configuration) pair."""
    f = np.asarray(f, dtype=float)
    x = np.concatenate([f, np.asarray(c.bits, dtype=float)])
    if x.shape[0] != spec.hidden_weights.shape[0]:
        raise DimensionError(
            f"(features, config) gives {x.shape[0]} inputs, oracle expects "
            f"{spec.hidden_weights.shape[0]}"
        )
    rng = _pair_rng(spec, f, c)
    gap = 1.0 - sigmoid(float(x @ spec.hidden_weights + spec.hidden_bias))
    if spec.noise_std > 0:
        gap += float(rng.normal(0.0, spec.noise_std))
    else:
        rng.normal(0.0, 1.0)  # keep the stream layout independent of noise_std
    gap = max(gap, 0.0)
    if float(rng.uniform()) < spec.inf_probability:
        return math.inf
    return gap


@dataclass(frozen=True)
class CommandSpec:
    """How to invoke an external solver and read a gap from its output."""

    template: str
    time_limit_seconds: float
    seeds_per_pair: int = 3
    gap_pattern: str = DEFAULT_GAP_PATTERN
    log_dir: str | None = None
    # Grace on top of the solver's own limit before the subprocess is killed.
    timeout_grace_seconds: float = 5.0

    def __post_init__(self) -> None:
        for placeholder in ("{instance}", "{seed}", "{timelimit}"):
            if placeholder not in self.template:
                raise ArgumentError(f"command template must contain {placeholder}")
        if self.time_limit_seconds <= 0:
            raise ArgumentError("time_limit_seconds must be positive")
        if self.seeds_per_pair < 1:
            raise ArgumentError("seeds_per_pair must be at least 1")
        if self.timeout_grace_seconds < 0:
            raise ArgumentError("timeout_grace_seconds must be non-negative")
        re.compile(self.gap_pattern)


def _substitute(
    spec: CommandSpec,
    instance_path: str,
    seed: int,
    settings: Mapping[str, str],
) -> str:
    def repl(match: re.Match) -> str:
        token = match.group(1)
        if token == "instance":
            return instance_path
        if token == "seed":
            return str(seed)
        if token == "timelimit":
            return str(spec.time_limit_seconds)
        name = token.split(":", 1)[1]
        if name not in settings:
            raise ArgumentError(f"template references unknown parameter {name!r}")
        return settings[name]

    return re.sub(r"\{(instance|seed|timelimit|param:[^{}]+)\}", repl, spec.template)


def _parse_gap_output(pattern: str, text: str) -> float:
    match = re.search(pattern, text)
    if not match:
        return math.inf
    try:
        value = float(match.group(1))
    except ValueError:
        return math.inf
    if math.isnan(value) or value < 0:
        return math.inf
    return value


def run_external(
    spec: CommandSpec,
    instance_path: str,
    config: Configuration,
    schema: ParameterSchema,
) -> float:
    """Run the command once per seed and reduce the parsed gaps to the
    second-best; timeouts and unparseable output count as infinity."""
    settings = decode_settings(schema, config)
    log_dir = None
    if spec.log_dir is not None:
        stem = Path(instance_path).stem or "instance"
        tag = "".join(str(b) for b in config.bits)
        log_dir = Path(spec.log_dir) / f"{stem}__{tag}"
        log_dir.mkdir(parents=True, exist_ok=True)
    gaps: list[float] = []
    for seed in range(spec.seeds_per_pair):
        cmd = _substitute(spec, instance_path, seed, settings)
        argv = shlex.split(cmd)
        if not argv:
            raise ArgumentError("command template expands to an empty command")
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=spec.time_limit_seconds + _TIMEOUT_GRACE_SECONDS,
            )
            output = proc.stdout + "\n" + proc.stderr
            gap = _parse_gap_output(spec.gap_pattern, output)
        except subprocess.TimeoutExpired as exc:
            output = f"timeout after {exc.timeout}s\n"
            gap = math.inf
        except (FileNotFoundError, PermissionError, OSError) as exc:
            raise ExternalError(f"cannot run {argv[0]!r}: {exc}") from exc
        if log_dir is not None:
            (log_dir / f"seed{seed}.out").write_text(
                f"$ {cmd}\n{output}\nparsed_gap={gap}\n"
            )
        gaps.append(gap)
    return second_best(gaps)


# ---------------------------------------------------------------------------
# Schema files


def schema_to_dict(schema: ParameterSchema) -> dict:
    return {
        "parameters": [
            {"name": p.name, "settings": list(p.settings)} for p in schema.parameters
        ]
    }


def schema_from_dict(d: Mapping) -> ParameterSchema:
    try:
        params = tuple(
            Parameter(entry["name"], tuple(entry["settings"]))
            for entry in d["parameters"]
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed schema document: {exc}") from exc
    return ParameterSchema(params)


def constraints_to_list(extra: Sequence[LinearInequality]) -> list[dict]:
    return [
        {
            "label": ineq.label,
            "terms": [
                {"param": t.param, "setting": t.setting, "coeff": str(t.coeff)}
                for t in ineq.terms
            ],
            "rhs": str(ineq.rhs),
        }
        for ineq in extra
    ]


def constraints_from_list(entries: Sequence[Mapping]) -> tuple[LinearInequality, ...]:
    out = []
    for entry in entries:
        try:
            out.append(
                LinearInequality.of(
                    entry.get("label", ""),
                    [(t["param"], t["setting"], t["coeff"]) for t in entry["terms"]],
                    entry["rhs"],
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed constraint entry: {exc}") from exc
    return tuple(out)


def load_schema_file(path: str | Path) -> tuple[ParameterSchema, tuple[LinearInequality, ...]]:
    """Read a schema document: parameters plus optional extra constraints.
    One-hot rows are implicit and never listed in the file."""
    doc = _read_json(path)
    schema = schema_from_dict(doc)
    extra = constraints_from_list(doc.get("constraints", []))
    return schema, extra


def load_features_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read instance_id,f_1,...,f_t rows; the header is mandatory and the
    feature count is inferred from it."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "instance_id" or len(header) < 2:
            raise ParseError(f"{path}: expected header instance_id,f_1,...,f_t")
        t = len(header) - 1
        out: dict[str, np.ndarray] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != t + 1:
                raise ParseError(
                    f"{path}:{line_no}: expected {t + 1} columns, got {len(row)}"
                )
            iid = row[0].strip()
            if not iid:
                raise ParseError(f"{path}:{line_no}: empty instance id")
            if iid in out:
                raise ParseError(f"{path}:{line_no}: duplicate instance id {iid!r}")
            try:
                vec = np.array([float(c) for c in row[1:]], dtype=float)
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"{path}:{line_no}: features must be finite")
            out[iid] = vec
    if not out:
        raise DataError(f"{path}: no feature rows")
    return out


# ---------------------------------------------------------------------------
# Versioned JSON persistence


def _read_json(path: str | Path) -> dict:
    try:
        with Path(path).open() as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PersistenceError(f"{path}: expected a JSON object at top level")
    return doc


def _write_json(path: str | Path, doc: dict) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _check_version(doc: Mapping, expected: int, kind: str, path) -> None:
    version = doc.get("format_version")
    if version != expected:
        raise PersistenceError(
            f"{path}: {kind} format version {version!r}, expected {expected}"
        )


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """A trained model plus the metadata needed to apply it elsewhere."""

    variant: str
    model: LinearModel | MultiOutputModel
    scaling: FeatureScaling
    train_config: TrainConfig

    def __post_init__(self) -> None:
        if self.variant not in ("pao", "pai"):
            raise ArgumentError("variant must be pao or pai")
        if self.variant == "pao" and not isinstance(self.model, LinearModel):
            raise ArgumentError("pao bundles carry a single-output model")
        if self.variant == "pai" and not isinstance(self.model, MultiOutputModel):
            raise ArgumentError("pai bundles carry a multi-output model")

    @property
    def input_dim(self) -> int:
        return self.model.input_dim

    @property
    def output_dim(self) -> int:
        return 1 if isinstance(self.model, LinearModel) else self.model.output_dim


def save_model(path: str | Path, bundle: ModelBundle) -> None:
    if isinstance(bundle.model, LinearModel):
        weights = [[float(x) for x in bundle.model.w]]
        biases = [float(bundle.model.b)]
    else:
        weights = [[float(x) for x in m.w] for m in bundle.model.outputs]
        biases = [float(m.b) for m in bundle.model.outputs]
    scaling = bundle.scaling
    if scaling.is_identity:
        scaling_doc: dict = {"kind": "none", "feature_dim": int(scaling.center.shape[0])}
    else:
        scaling_doc = {
            "kind": "standardize",
            "center": [float(x) for x in scaling.center],
            "scale": [float(x) for x in scaling.scale],
        }
    cfg = bundle.train_config
    _write_json(
        path,
        {
            "format_version": MODEL_FORMAT_VERSION,
            "variant": bundle.variant,
            "input_dim": bundle.input_dim,
            "output_dim": bundle.output_dim,
            "weights": weights,
            "biases": biases,
            "train_config": {
                "learning_rate": cfg.learning_rate,
                "epochs": cfg.epochs,
                "batch_size": cfg.batch_size,
                "seed": cfg.seed,
                "weight_init_scale": cfg.weight_init_scale,
                "l2_penalty": cfg.l2_penalty,
            },
            "feature_scaling": scaling_doc,
        },
    )


def load_model(path: str | Path) -> ModelBundle:
    doc = _read_json(path)
    _check_version(doc, MODEL_FORMAT_VERSION, "model", path)
    try:
        variant = doc["variant"]
        weights = doc["weights"]
        biases = doc["biases"]
        input_dim = int(doc["input_dim"])
        output_dim = int(doc["output_dim"])
        scaling_doc = doc["feature_scaling"]
        cfg = TrainConfig(**doc["train_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed model file: {exc}") from exc
    if len(weights) != output_dim or len(biases) != output_dim:
        raise PersistenceError(f"{path}: weight rows do not match output_dim")
    if any(len(row) != input_dim for row in weights):
        raise PersistenceError(f"{path}: weight columns do not match input_dim")
    models = [LinearModel(np.asarray(w, dtype=float), float(b)) for w, b in zip(weights, biases)]
    model: LinearModel | MultiOutputModel
    if variant == "pao":
        if output_dim != 1:
            raise PersistenceError(f"{path}: pao models must have one output")
        model = models[0]
    else:
        model = MultiOutputModel(tuple(models))
    if scaling_doc.get("kind") == "standardize":
        scaling = FeatureScaling(
            np.asarray(scaling_doc["center"], dtype=float),
            np.asarray(scaling_doc["scale"], dtype=float),
        )
    elif scaling_doc.get("kind") == "none":
        default_t = input_dim - (1 if variant == "pai" else 0)
        scaling = FeatureScaling.identity(int(scaling_doc.get("feature_dim", default_t)))
    else:
        raise PersistenceError(f"{path}: unknown feature_scaling kind")
    return ModelBundle(variant=variant, model=model, scaling=scaling, train_config=cfg)


def save_dataset(path: str | Path, ds: Dataset) -> None:
    from .config_space import decode_configuration

    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "clip_margin": ds.clip_margin,
        "schema": schema_to_dict(ds.schema),
        "constraints": constraints_to_list(ds.extra_constraints),
        "config_ids": list(ds.config_ids),
        "config_settings": [
            list(decode_configuration(ds.schema, c)) for c in ds.configs
        ],
        "features": [[iid, [float(x) for x in vec]] for iid, vec in ds.features.items()],
        "scores": [
            [iid, cid, float(ds.scores[(iid, cid)])]
            for iid in ds.features
            for cid in ds.config_ids
        ],
        "default_config_id": ds.default_config_id,
        "provenance": ds.provenance,
    }
    _write_json(path, doc)


def load_dataset(path: str | Path) -> Dataset:
    from .config_space import build_constraints, encode_configuration

    doc = _read_json(path)
    _check_version(doc, DATASET_FORMAT_VERSION, "dataset", path)
    try:
        schema = schema_from_dict(doc["schema"])
        extra = constraints_from_list(doc["constraints"])
        config_ids = tuple(doc["config_ids"])
        configs = tuple(
            encode_configuration(schema, settings)
            for settings in doc["config_settings"]
        )
        features = {
            iid: np.asarray(vec, dtype=float) for iid, vec in doc["features"]
        }
        scores = {(iid, cid): float(v) for iid, cid, v in doc["scores"]}
        ds = Dataset(
            schema=schema,
            extra_constraints=extra,
            constraints=build_constraints(schema, extra),
            features=features,
            config_ids=config_ids,
            configs=configs,
            scores=scores,
            clip_margin=float(doc["clip_margin"]),
            default_config_id=doc["default_config_id"],
            provenance=doc.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed dataset file: {exc}") from exc
    return ds
