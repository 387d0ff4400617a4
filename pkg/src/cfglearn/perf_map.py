"""Turn raw solver performance (gaps, possibly infinite) into scores in [0, 1].

The pipeline is: replace every infinity by (largest finite value + clip_margin),
rank the clipped values ascending with average ties, min-max scale the ranks,
and invert so that 1 means best (smallest gap) and 0 means worst.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, DegenerateDataError

PairKey = tuple[str, str]


@dataclass(frozen=True)
class RawPerformance:
    """Raw gap values aligned with (instance_id, config_id) keys."""

    keys: tuple[PairKey, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.keys) != len(self.values):
            raise ArgumentError("keys and values must have equal length")
        for v in self.values:
            if math.isnan(v) or v < 0:
                raise ArgumentError(f"gap values must be >= 0 or inf, got {v}")


@dataclass(frozen=True)
class ScaledPerformance:
    """Scores in [0, 1], 1 = best, aligned with the input keys."""

    keys: tuple[PairKey, ...]
    scores: tuple[float, ...]
    clip_margin: float

    def as_dict(self) -> dict[PairKey, float]:
        return dict(zip(self.keys, self.scores))


Values = Union[RawPerformance, Sequence[float]]


def _unwrap(values: Values) -> tuple[tuple[PairKey, ...], np.ndarray]:
    if isinstance(values, RawPerformance):
        return values.keys, np.asarray(values.values, dtype=float)
    arr = np.asarray(list(values), dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ArgumentError("gap values must be >= 0 or inf")
    return (), arr


def clip_infinities(values: Values, clip_margin: float = 1.0) -> np.ndarray:
    """Replace every value above the largest finite one by that maximum plus
    ``clip_margin``; finite values pass through unchanged."""
    if clip_margin <= 0:
        raise ArgumentError("clip_margin must be positive")
    _, arr = _unwrap(values)
    finite = arr[np.isfinite(arr)]
    if finite.size == 0:
        raise DegenerateDataError("no finite performance value present")
    p_hat = float(finite.max())
    out = arr.copy()
    out[out > p_hat] = p_hat + clip_margin
    return out


def rank_scale(values: Values, clip_margin: float = 1.0) -> ScaledPerformance:
    """Clip, rank ascending with average ties, min-max scale, invert.

    All-equal input is the designated degenerate case and maps to 1.0
    everywhere: nothing in the data distinguishes any entry as worse.
    """
    keys, _ = _unwrap(values)
    clipped = clip_infinities(values, clip_margin)
    ranks = rankdata(clipped, method="average")
    lo, hi = ranks.min(), ranks.max()
    if hi == lo:
        scores = np.ones_like(ranks)
    else:
        scores = 1.0 - (ranks - lo) / (hi - lo)
    return ScaledPerformance(keys, tuple(float(s) for s in scores), float(clip_margin))
