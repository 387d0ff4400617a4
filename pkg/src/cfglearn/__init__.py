"""cfglearn: learn per-instance solver configurations from performance data
and select good, constraint-feasible ones by exact search."""

__version__ = "0.1.0"

from .config_space import (
    Configuration,
    ConstraintSystem,
    LinearInequality,
    LinearTerm,
    Parameter,
    ParameterSchema,
    build_constraints,
    decode_configuration,
    decode_settings,
    encode_configuration,
    enumerate_feasible,
    is_feasible,
)
from .errors import CfgLearnError
from .logreg import (
    FeatureScaling,
    LinearModel,
    MultiOutputModel,
    TrainConfig,
    TrainingSet,
    gradient,
    log_likelihood,
    log_likelihood_multi,
    output_seed,
    predict,
    sigmoid,
    train,
    train_multi,
)
from .perf_map import RawPerformance, ScaledPerformance, clip_infinities, rank_scale
from .pipeline import (
    Dataset,
    EvaluationRecord,
    ExperimentConfig,
    ExperimentResult,
    assemble_training,
    build_dataset,
    evaluate_instance,
    kmeans,
    run_experiment,
    split_instances,
    stratified_split,
)
from .search import (
    InfeasibilityCertificate,
    SearchProblem,
    SearchSolution,
    inversion_infeasibility,
    inversion_margin,
    solve,
    solve_pai,
    solve_pao_direct,
    solve_pao_likelihood,
    solve_pao_weighted,
)
from .solver_adapter import (
    CommandSpec,
    ModelBundle,
    SyntheticSpec,
    load_dataset,
    load_features_csv,
    load_model,
    load_performance_csv,
    load_schema_file,
    run_external,
    save_dataset,
    save_model,
    second_best,
    synthetic_performance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
