"""Logistic regression trained by mini-batch gradient ascent on the
Bernoulli log-likelihood, with fractional targets in [0, 1] allowed.

Multi-output models are s independent single-output regressions sharing the
input matrix; training them separately is exactly equivalent to training them
jointly because the joint objective separates per output.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DimensionError, DivergenceError

# Sigmoid outputs are clamped into the open interval so that strict
# positivity of min(sigma, 1 - sigma) survives float underflow at huge |z|.
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(z):
    """Numerically stable logistic function, strictly inside (0, 1)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    out = np.clip(out, _SIG_LO, _SIG_HI)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Weights and bias of a single logistic output."""

    w: np.ndarray
    b: float

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise DimensionError("w must be a vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ArgumentError("model parameters must be finite")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def input_dim(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class MultiOutputModel:
    """One LinearModel per output bit, all sharing the input dimension."""

    outputs: tuple[LinearModel, ...]

    def __post_init__(self) -> None:
        if not self.outputs:
            raise ArgumentError("at least one output model required")
        dims = {m.input_dim for m in self.outputs}
        if len(dims) != 1:
            raise DimensionError("output models disagree on input dimension")

    @property
    def input_dim(self) -> int:
        return self.outputs[0].input_dim

    @property
    def output_dim(self) -> int:
        return len(self.outputs)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Inputs X (n x m) and targets Y (n x k) with entries in [0, 1]."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.X, dtype=float)
        y = np.asarray(self.Y, dtype=float)
        if x.ndim != 2:
            raise DimensionError("X must be a 2-d matrix")
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if y.ndim != 2 or y.shape[0] != x.shape[0]:
            raise DimensionError("Y must have one row per X row")
        if x.shape[0] < 1:
            raise ArgumentError("training set must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ArgumentError("X entries must be finite")
        if np.any(y < 0) or np.any(y > 1) or not np.all(np.isfinite(y)):
            raise ArgumentError("Y entries must lie in [0, 1]")
        x = x.copy()
        y = y.copy()
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "Y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.Y.shape[1]

    def column(self, h: int) -> "TrainingSet":
        return TrainingSet(self.X, self.Y[:, h : h + 1])


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; every training run is fully determined by these."""

    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    weight_init_scale: float = 0.1
    l2_penalty: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ArgumentError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ArgumentError("epochs and batch_size must be positive")
        if self.seed < 0:
            raise ArgumentError("seed must be a non-negative integer")
        if self.weight_init_scale < 0 or self.l2_penalty < 0:
            raise ArgumentError("scales and penalties must be non-negative")


def _scores(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != model.input_dim:
        raise DimensionError(
            f"X has {X.shape[1]} columns, model expects {model.input_dim}"
        )
    return X @ model.w + model.b


def log_likelihood(model: LinearModel, X: np.ndarray, y: np.ndarray) -> float:
    """Sum over samples of y*ln(sigma(z)) + (1-y)*ln(1-sigma(z)).

    Computed as -(y*softplus(-z) + (1-y)*softplus(z)) so large |z| never
    produces a premature -inf.
    """
    z = _scores(model, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != z.shape[0]:
        raise DimensionError("y must have one entry per X row")
    return float(-np.sum(y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)))


def gradient(model: LinearModel, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact gradient of log_likelihood: (X^T (y - sigma(z)), sum(y - sigma(z)))."""
    z = _scores(model, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    resid = y - sigmoid(z)
    return np.asarray(X, dtype=float).T @ resid, float(resid.sum())


def predict(model: LinearModel, x: Sequence[float]) -> float:
    """Probability-like output sigma(w.x + b) for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise DimensionError(
            f"input has shape {x.shape}, model expects ({model.input_dim},)"
        )
    return float(sigmoid(float(x @ model.w + model.b)))


def output_seed(seed: int, output_index: int) -> int:
    """Deterministic per-output training seed for multi-output models."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(output_index,))
    return int(ss.generate_state(1)[0])


def _objective(w: np.ndarray, b: float, X, y, l2: float) -> float:
    model = LinearModel(w, b)
    pen = 0.5 * l2 * float(w @ w)
    return log_likelihood(model, X, y) - pen


def train(
    ts: TrainingSet,
    cfg: TrainConfig,
    validation: TrainingSet | None = None,
    patience: int | None = None,
) -> LinearModel:
    """Mini-batch gradient ascent on the log-likelihood of a k=1 training set.

    Deterministic given cfg.seed (initialization and per-epoch reshuffles come
    from one seeded stream).  The returned parameters are the best epoch-end
    state: by full-data objective normally, or by validation log-likelihood
    when ``validation`` and ``patience`` are given (stopping after ``patience``
    epochs without improvement).
    """
    if ts.k != 1:
        raise DimensionError("train expects a single-output training set")
    if patience is not None and patience < 1:
        raise ArgumentError("patience must be >= 1 when given")
    X, y = ts.X, ts.Y[:, 0]
    n, m = ts.n, ts.m
    rng = np.random.default_rng(cfg.seed)
    scale = cfg.weight_init_scale
    w = rng.uniform(-scale, scale, size=m)
    b = float(rng.uniform(-scale, scale))
    l2 = cfg.l2_penalty
    lr = cfg.learning_rate

    def select_score() -> float:
        if validation is not None and patience is not None:
            return log_likelihood(LinearModel(w, b), validation.X, validation.Y[:, 0])
        return _objective(w, b, X, y, l2)

    best_score = select_score()
    best_w, best_b = w.copy(), b
    stale = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            xb, yb = X[batch], y[batch]
            resid = yb - sigmoid(xb @ w + b)
            inv = 1.0 / batch.shape[0]
            w = w + lr * (xb.T @ resid * inv - (l2 / n) * w)
            b = b + lr * float(resid.sum()) * inv
        if not (np.all(np.isfinite(w)) and np.isfinite(b)):
            raise DivergenceError("non-finite parameters; reduce the learning rate")
        score = select_score()
        if not np.isfinite(score):
            raise DivergenceError("non-finite objective; reduce the learning rate")
        if score > best_score:
            best_score, best_w, best_b = score, w.copy(), b
            stale = 0
        else:
            stale += 1
            if patience is not None and validation is not None and stale >= patience:
                break
    return LinearModel(best_w, best_b)


def train_multi(
    ts: TrainingSet,
    cfg: TrainConfig,
    validation: TrainingSet | None = None,
    patience: int | None = None,
    output_seeds: Sequence[int] | None = None,
) -> MultiOutputModel:
    """Train one LinearModel per target column.

    Per-output seeds default to ``output_seed(cfg.seed, h)``; pass
    ``output_seeds`` to override (e.g. to make outputs share a seed).
    """
    if output_seeds is not None and len(output_seeds) != ts.k:
        raise ArgumentError("output_seeds must have one entry per output")
    models = []
    for h in range(ts.k):
        seed_h = output_seeds[h] if output_seeds is not None else output_seed(cfg.seed, h)
        val_h = validation.column(h) if validation is not None else None
        models.append(train(ts.column(h), replace(cfg, seed=seed_h), val_h, patience))
    return MultiOutputModel(tuple(models))


def log_likelihood_multi(model: MultiOutputModel, X: np.ndarray, Y: np.ndarray) -> float:
    """Joint log-likelihood: the per-output terms simply add up."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != model.output_dim:
        raise DimensionError("Y must have one column per model output")
    return sum(
        log_likelihood(m, X, Y[:, h]) for h, m in enumerate(model.outputs)
    )


@dataclass(frozen=True, eq=False)
class FeatureScaling:
    """Affine per-feature transform applied to the instance-feature part of
    model inputs; configuration bits and score inputs are never scaled."""

    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=float)
        s = np.asarray(self.scale, dtype=float)
        if c.shape != s.shape or c.ndim != 1:
            raise DimensionError("center and scale must be equal-length vectors")
        if np.any(s <= 0):
            raise ArgumentError("scale entries must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "scale", s)

    @staticmethod
    def identity(t: int) -> "FeatureScaling":
        return FeatureScaling(np.zeros(t), np.ones(t))

    @staticmethod
    def standardize(rows: np.ndarray) -> "FeatureScaling":
        rows = np.asarray(rows, dtype=float)
        center = rows.mean(axis=0)
        spread = rows.std(axis=0)
        spread[spread == 0] = 1.0
        return FeatureScaling(center, spread)

    def apply(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.center.shape[0]:
            raise DimensionError("feature width does not match the scaling")
        return (features - self.center) / self.scale

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.center == 0) and np.all(self.scale == 1))
