"""Exact configuration search over an enumerated feasible set.

Four formulations are supported.  For the direct one the predicted
performance itself is maximized.  The likelihood and weighted formulations
add a free performance variable r in [0, 1]; both objectives are affine in r
at fixed configuration, so the optimal r sits at an endpoint and is resolved
analytically.  The multi-output formulation scans r on a grid and polishes
each configuration's best grid point by golden-section search.

Because the feasible set is enumerated up front, every solution is exact over
the configurations (no heuristic search) and feasibility is guaranteed by
construction, plus re-checked against the constraint system when provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config_space import Configuration, ConstraintSystem, is_feasible
from .errors import ArgumentError, DimensionError, FeasibilityError
from .logreg import LinearModel, MultiOutputModel, sigmoid

FORMULATIONS = ("pao-direct", "pao-likelihood", "pao-weighted", "pai")

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class SearchProblem:
    """A trained model, the target instance's features, and the feasible set."""

    variant: str
    model: LinearModel | MultiOutputModel
    features: np.ndarray
    feasible: tuple[Configuration, ...]
    r_grid_points: int = 101
    constraints: ConstraintSystem | None = None
    literal_objective: bool = False

    def __post_init__(self) -> None:
        if self.variant not in FORMULATIONS:
            raise ArgumentError(f"unknown formulation {self.variant!r}")
        if not self.feasible:
            raise ArgumentError("feasible set must be non-empty")
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 1:
            raise DimensionError("features must be a vector")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "feasible", tuple(self.feasible))
        t = f.shape[0]
        s = len(self.feasible[0])
        if any(len(c) != s for c in self.feasible):
            raise DimensionError("feasible configurations have mixed lengths")
        if self.variant == "pai":
            if not isinstance(self.model, MultiOutputModel):
                raise ArgumentError("pai needs a multi-output model")
            if self.model.input_dim != t + 1:
                raise DimensionError(
                    f"model expects {self.model.input_dim} inputs, features give {t + 1}"
                )
            if self.model.output_dim != s:
                raise DimensionError(
                    f"model has {self.model.output_dim} outputs, configurations have {s} bits"
                )
            if self.r_grid_points < 2:
                raise ArgumentError("r_grid_points must be at least 2")
        else:
            if not isinstance(self.model, LinearModel):
                raise ArgumentError(f"{self.variant} needs a single-output model")
            if self.model.input_dim != t + s:
                raise DimensionError(
                    f"model expects {self.model.input_dim} inputs, (features, config) give {t + s}"
                )

    @property
    def num_bits(self) -> int:
        return len(self.feasible[0])


@dataclass(frozen=True, eq=False)
class SearchSolution:
    """Chosen configuration, its performance variable, and the objective."""

    config: Configuration
    r: float
    objective: float
    variant: str
    sigma: float | None = None


def _config_matrix(problem: SearchProblem) -> np.ndarray:
    return np.array([c.bits for c in problem.feasible], dtype=float)


def _pao_scores(problem: SearchProblem) -> np.ndarray:
    """z values w.(features, c) + b for every feasible configuration."""
    t = problem.features.shape[0]
    w = problem.model.w
    base = float(problem.features @ w[:t] + problem.model.b)
    return _config_matrix(problem) @ w[t:] + base


def _check_solution(problem: SearchProblem, config: Configuration) -> None:
    if problem.constraints is not None and not is_feasible(problem.constraints, config):
        raise FeasibilityError("solver selected a configuration violating A c <= d")


def _argbest(problem: SearchProblem, objective: np.ndarray) -> int:
    """Index of the max objective; exact ties go to the smallest bit vector."""
    best = float(objective.max())
    tied = [i for i in range(objective.shape[0]) if objective[i] == best]
    return min(tied, key=lambda i: problem.feasible[i].bits)


def solve_pao_direct(problem: SearchProblem) -> SearchSolution:
    """Maximize the predicted performance sigma(z) over the feasible set."""
    if problem.variant != "pao-direct":
        raise ArgumentError("problem variant is not pao-direct")
    sig = sigmoid(_pao_scores(problem))
    i = _argbest(problem, sig)
    config = problem.feasible[i]
    _check_solution(problem, config)
    value = float(sig[i])
    return SearchSolution(config, value, value, problem.variant, sigma=value)


def _likelihood_terms(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ln(sigma(z)) and ln(1 - sigma(z)) in underflow-safe form."""
    return -np.logaddexp(0.0, -z), -np.logaddexp(0.0, z)


def solve_pao_likelihood(problem: SearchProblem) -> SearchSolution:
    """Maximize r*ln(sigma) + (1-r)*ln(1-sigma) + r over configs and r.

    At fixed configuration the objective is affine in r with slope z + 1, so
    r* = 1 when z > -1 and r* = 0 when z < -1 (ties resolve to 1).  With
    ``literal_objective`` the (1-r) term uses (1 - ln(sigma)) instead, whose
    slope 2*ln(sigma) is always negative, forcing r* = 0.
    """
    if problem.variant != "pao-likelihood":
        raise ArgumentError("problem variant is not pao-likelihood")
    z = _pao_scores(problem)
    log_sig, log_one_minus = _likelihood_terms(z)
    if problem.literal_objective:
        obj_r0 = 1.0 - log_sig
        obj_r1 = log_sig + 1.0
    else:
        obj_r0 = log_one_minus
        obj_r1 = log_sig + 1.0
    take_r1 = obj_r1 >= obj_r0
    objective = np.where(take_r1, obj_r1, obj_r0)
    i = _argbest(problem, objective)
    config = problem.feasible[i]
    _check_solution(problem, config)
    r = 1.0 if take_r1[i] else 0.0
    sig = float(sigmoid(float(z[i])))
    return SearchSolution(config, r, float(objective[i]), problem.variant, sigma=sig)


def solve_pao_weighted(problem: SearchProblem) -> SearchSolution:
    """Maximize r*sigma + (1-r)*(1-sigma): affine in r, so the optimum is
    max(sigma, 1-sigma) with r* = 1 iff sigma >= 1/2."""
    if problem.variant != "pao-weighted":
        raise ArgumentError("problem variant is not pao-weighted")
    sig = sigmoid(_pao_scores(problem))
    objective = np.maximum(sig, 1.0 - sig)
    i = _argbest(problem, objective)
    config = problem.feasible[i]
    _check_solution(problem, config)
    s_i = float(sig[i])
    r = 1.0 if s_i >= 0.5 else 0.0
    return SearchSolution(config, r, float(objective[i]), problem.variant, sigma=s_i)


def _golden_max(fn, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Golden-section maximization of a unimodal-ish fn on [lo, hi]."""
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = fn(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = fn(x1)
    x = 0.5 * (a + b)
    return x, fn(x)


def solve_pai(problem: SearchProblem) -> SearchSolution:
    """Maximize sum_j [c_j*sigma_j(r) + (1-c_j)*(1-sigma_j(r))] over the
    feasible set and r in [0, 1].

    r is scanned on a uniform grid; each configuration's best grid point is
    then polished by golden-section search in the bracket spanned by its grid
    neighbours (tolerance 1e-6 in r), which keeps near-ties between
    configurations from being decided by grid placement.  Ties break to the
    smallest bit vector, then the smallest r.
    """
    if problem.variant != "pai":
        raise ArgumentError("problem variant is not pai")
    model: MultiOutputModel = problem.model
    t = problem.features.shape[0]
    wf = np.array([m.w[:t] for m in model.outputs], dtype=float)
    wr = np.array([m.w[t] for m in model.outputs], dtype=float)
    bias = np.array([m.b for m in model.outputs], dtype=float)
    base = wf @ problem.features + bias
    cmat = _config_matrix(problem)

    def objective_all(r: float) -> np.ndarray:
        sig = sigmoid(base + wr * r)
        return float(np.sum(1.0 - sig)) + cmat @ (2.0 * sig - 1.0)

    def objective_one(row: np.ndarray):
        def fn(r: float) -> float:
            sig = sigmoid(base + wr * r)
            return float(np.sum(1.0 - sig) + row @ (2.0 * sig - 1.0))

        return fn

    grid = np.linspace(0.0, 1.0, problem.r_grid_points)
    n = len(problem.feasible)
    best_obj = np.full(n, -np.inf)
    best_idx = np.zeros(n, dtype=int)
    for gi, r in enumerate(grid):
        vals = objective_all(float(r))
        better = vals > best_obj
        best_obj[better] = vals[better]
        best_idx[better] = gi

    spacing = 1.0 if problem.r_grid_points < 2 else float(grid[1] - grid[0])
    best_r = grid[best_idx].astype(float)
    for i in range(n):
        fn = objective_one(cmat[i])
        lo = max(0.0, best_r[i] - spacing)
        hi = min(1.0, best_r[i] + spacing)
        r_ref, f_ref = _golden_max(fn, lo, hi, 1e-6)
        if f_ref > best_obj[i]:
            best_obj[i] = f_ref
            best_r[i] = r_ref

    order = sorted(
        range(n),
        key=lambda i: (-best_obj[i], problem.feasible[i].bits, best_r[i]),
    )
    i = order[0]
    config = problem.feasible[i]
    _check_solution(problem, config)
    return SearchSolution(config, float(best_r[i]), float(best_obj[i]), problem.variant)


def solve(problem: SearchProblem) -> SearchSolution:
    """Dispatch on the problem's formulation."""
    return {
        "pao-direct": solve_pao_direct,
        "pao-likelihood": solve_pao_likelihood,
        "pao-weighted": solve_pao_weighted,
        "pai": solve_pai,
    }[problem.variant](problem)


@dataclass(frozen=True, eq=False)
class InfeasibilityCertificate:
    """Witness that no r makes every model output exactly 0 or 1."""

    feasible: bool
    margins: dict[float, float]
    min_margin: float
    note: str


def inversion_margin(model: MultiOutputModel, features: np.ndarray, r: float) -> float:
    """min over outputs of min(sigma_j(r), 1 - sigma_j(r)); strictly positive
    for every finite r because the logistic never reaches 0 or 1."""
    features = np.asarray(features, dtype=float)
    t = features.shape[0]
    if model.input_dim != t + 1:
        raise DimensionError("model inputs must be (features, r)")
    x = np.concatenate([features, [float(r)]])
    sig = np.array([sigmoid(float(x @ m.w + m.b)) for m in model.outputs])
    return float(np.minimum(sig, 1.0 - sig).min())


def inversion_infeasibility(
    model: MultiOutputModel,
    features: np.ndarray,
    probes: tuple[float, ...] = (0.0, 0.5, 1.0),
) -> InfeasibilityCertificate:
    """Certify that demanding exact binary outputs from the multi-output
    model admits no performance value r, even unrestricted to [0, 1]."""
    margins = {float(r): inversion_margin(model, features, r) for r in probes}
    return InfeasibilityCertificate(
        feasible=False,
        margins=margins,
        min_margin=min(margins.values()),
        note=(
            "every output stays strictly between 0 and 1 for all finite r, "
            "so equality with binary configuration bits is unattainable"
        ),
    )
