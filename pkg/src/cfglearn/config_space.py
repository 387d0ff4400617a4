"""One-hot encoded configuration spaces and their linear feasibility constraints.

A solver configuration is a choice of one setting per categorical parameter,
encoded as a binary vector with exactly one bit set per parameter block.  The
set of valid configurations is cut out of the hypercube by a linear system
``A c <= d`` whose first rows always encode the one-hot structure itself.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DecodeError,
    DimensionError,
    EnumerationCapError,
    SchemaError,
)

DEFAULT_ENUMERATION_CAP = 10**6

# Feasibility filtering is chunked so huge spaces never materialize a full
# (rows x configs) product matrix at once.
_FILTER_CHUNK = 65536


@dataclass(frozen=True)
class Parameter:
    """A categorical solver parameter with at least two named settings."""

    name: str
    settings: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("parameter name must be non-empty")
        if len(self.settings) < 2:
            raise SchemaError(f"parameter {self.name!r} needs at least 2 settings")
        if len(set(self.settings)) != len(self.settings):
            raise SchemaError(f"parameter {self.name!r} has duplicate setting labels")

    @property
    def num_settings(self) -> int:
        return len(self.settings)


@dataclass(frozen=True)
class ParameterSchema:
    """An ordered collection of parameters defining the binary encoding."""

    parameters: tuple[Parameter, ...]

    def __post_init__(self) -> None:
        if not self.parameters:
            raise SchemaError("schema needs at least one parameter")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise SchemaError("parameter names must be unique")

    @property
    def dimension(self) -> int:
        """Total number of binary variables (sum of block widths)."""
        return sum(p.num_settings for p in self.parameters)

    @property
    def num_configurations(self) -> int:
        """Count of schema-valid configurations before extra constraints."""
        n = 1
        for p in self.parameters:
            n *= p.num_settings
        return n

    @property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        """Half-open [start, end) bit ranges, one per parameter."""
        out = []
        start = 0
        for p in self.parameters:
            out.append((start, start + p.num_settings))
            start += p.num_settings
        return tuple(out)

    def parameter_index(self, name: str) -> int:
        for i, p in enumerate(self.parameters):
            if p.name == name:
                return i
        raise SchemaError(f"unknown parameter {name!r}")

    def bit_index(self, param: str, setting: str | int) -> int:
        """Global bit position of a (parameter, setting) pair."""
        pi = self.parameter_index(param)
        p = self.parameters[pi]
        if isinstance(setting, int):
            if not 0 <= setting < p.num_settings:
                raise SchemaError(
                    f"parameter {param!r} has no setting index {setting}"
                )
            si = setting
        else:
            try:
                si = p.settings.index(setting)
            except ValueError:
                raise SchemaError(
                    f"parameter {param!r} has no setting {setting!r}"
                ) from None
        return self.blocks[pi][0] + si


@dataclass(frozen=True, order=True)
class Configuration:
    """A binary configuration vector; ordering is lexicographic on the bits."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ArgumentError("configuration bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class LinearTerm:
    """coeff * bit(param, setting), one summand of a constraint row."""

    param: str
    setting: str | int
    coeff: Fraction

    @staticmethod
    def of(param: str, setting: str | int, coeff) -> "LinearTerm":
        return LinearTerm(param, setting, _as_fraction(coeff))


@dataclass(frozen=True)
class LinearInequality:
    """sum(terms) <= rhs over named parameter settings."""

    label: str
    terms: tuple[LinearTerm, ...]
    rhs: Fraction

    @staticmethod
    def of(label: str, terms: Iterable[tuple[str, str | int, object]], rhs) -> "LinearInequality":
        return LinearInequality(
            label,
            tuple(LinearTerm.of(p, s, c) for p, s, c in terms),
            _as_fraction(rhs),
        )


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ArgumentError("boolean is not a valid coefficient")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # Go through the decimal literal so 0.1 means 1/10, not the binary float.
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise ArgumentError(f"cannot interpret {value!r} as a rational coefficient")


@dataclass(frozen=True)
class ConstraintSystem:
    """Rational system A c <= d with labelled rows; arithmetic is exact."""

    rows: tuple[tuple[Fraction, ...], ...]
    bounds: tuple[Fraction, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.rows) != len(self.bounds) or len(self.rows) != len(self.labels):
            raise DimensionError("rows, bounds and labels must have equal length")
        widths = {len(r) for r in self.rows}
        if len(widths) > 1:
            raise DimensionError("constraint rows have inconsistent widths")

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_cols(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def integer_arrays(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(A, d) as int64 arrays when every entry is integral, else None."""
        entries = [f for row in self.rows for f in row] + list(self.bounds)
        if any(f.denominator != 1 for f in entries):
            return None
        a = np.array([[int(f) for f in row] for row in self.rows], dtype=np.int64)
        d = np.array([int(f) for f in self.bounds], dtype=np.int64)
        return a, d


def encode_configuration(schema: ParameterSchema, settings: Sequence[int]) -> Configuration:
    """One-hot encode a tuple of per-parameter setting indices."""
    if len(settings) != len(schema.parameters):
        raise SchemaError(
            f"expected {len(schema.parameters)} setting indices, got {len(settings)}"
        )
    bits = [0] * schema.dimension
    for (start, _), p, s in zip(schema.blocks, schema.parameters, settings):
        if not 0 <= s < p.num_settings:
            raise SchemaError(
                f"setting index {s} out of range for parameter {p.name!r}"
            )
        bits[start + s] = 1
    return Configuration(tuple(bits))


def decode_configuration(schema: ParameterSchema, config: Configuration) -> tuple[int, ...]:
    """Invert the one-hot encoding; reject vectors that are not schema-valid."""
    if len(config) != schema.dimension:
        raise DecodeError(
            f"expected {schema.dimension} bits, got {len(config)}"
        )
    settings = []
    for (start, end), p in zip(schema.blocks, schema.parameters):
        block = config.bits[start:end]
        if sum(block) != 1:
            raise DecodeError(
                f"block for parameter {p.name!r} is not one-hot: {block}"
            )
        settings.append(block.index(1))
    return tuple(settings)


def decode_settings(schema: ParameterSchema, config: Configuration) -> dict[str, str]:
    """Map each parameter name to its chosen setting label."""
    idx = decode_configuration(schema, config)
    return {p.name: p.settings[s] for p, s in zip(schema.parameters, idx)}


def build_constraints(
    schema: ParameterSchema,
    extra: Sequence[LinearInequality] = (),
) -> ConstraintSystem:
    """Assemble A c <= d: one-hot rows for every parameter, then user rows.

    Each parameter contributes the pair ``sum(block) <= 1`` and
    ``-sum(block) <= -1``, which together force exactly one chosen setting.
    """
    s = schema.dimension
    zero = Fraction(0)
    one = Fraction(1)
    rows: list[tuple[Fraction, ...]] = []
    bounds: list[Fraction] = []
    labels: list[str] = []
    for (start, end), p in zip(schema.blocks, schema.parameters):
        up = [zero] * s
        for j in range(start, end):
            up[j] = one
        rows.append(tuple(up))
        bounds.append(one)
        labels.append(f"onehot+:{p.name}")
        rows.append(tuple(-f for f in up))
        bounds.append(-one)
        labels.append(f"onehot-:{p.name}")
    for ineq in extra:
        row = [zero] * s
        for term in ineq.terms:
            row[schema.bit_index(term.param, term.setting)] += term.coeff
        rows.append(tuple(row))
        bounds.append(ineq.rhs)
        labels.append(ineq.label)
    return ConstraintSystem(tuple(rows), tuple(bounds), tuple(labels))


def is_feasible(cs: ConstraintSystem, config: Configuration) -> bool:
    """Exact check of A c <= d; no floating tolerance is involved."""
    if len(config) != cs.num_cols:
        raise DimensionError(
            f"configuration has {len(config)} bits, system has {cs.num_cols} columns"
        )
    for row, bound in zip(cs.rows, cs.bounds):
        total = sum(f for f, b in zip(row, config.bits) if b)
        if total > bound:
            return False
    return True


def _onehot_matrix(schema: ParameterSchema, index_matrix: np.ndarray) -> np.ndarray:
    n = index_matrix.shape[0]
    bits = np.zeros((n, schema.dimension), dtype=np.int8)
    rows = np.arange(n)
    for p, (start, _) in enumerate(schema.blocks):
        bits[rows, start + index_matrix[:, p]] = 1
    return bits


def enumerate_feasible(
    schema: ParameterSchema,
    cs: ConstraintSystem,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[Configuration]:
    """All schema-valid configurations satisfying ``cs``, in lexicographic
    order of their setting-index tuples.  Deterministic."""
    if cs.num_cols != schema.dimension:
        raise DimensionError("constraint system does not match schema dimension")
    total = schema.num_configurations
    if total > cap:
        raise EnumerationCapError(
            f"{total} candidate configurations exceed the cap of {cap}"
        )
    shape = tuple(p.num_settings for p in schema.parameters)
    ints = cs.integer_arrays()
    out: list[Configuration] = []
    if ints is not None:
        a, d = ints
        for lo in range(0, total, _FILTER_CHUNK):
            hi = min(lo + _FILTER_CHUNK, total)
            idx = np.stack(
                np.unravel_index(np.arange(lo, hi), shape), axis=1
            ).astype(np.int64)
            bits = _onehot_matrix(schema, idx)
            ok = np.all(bits.astype(np.int64) @ a.T <= d, axis=1)
            for row in bits[ok]:
                out.append(Configuration(tuple(int(b) for b in row)))
    else:
        for settings in itertools.product(*(range(k) for k in shape)):
            c = encode_configuration(schema, settings)
            if is_feasible(cs, c):
                out.append(c)
    return out
