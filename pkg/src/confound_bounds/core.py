"""Shared domain types, validation and seeded randomness."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

X_MIXTURE = "x"
XA_MIXTURE = "xa"
MODELS = (X_MIXTURE, XA_MIXTURE)

# Named rng streams so folds, learners, bootstrap and simulation never share draws.
STREAM_FOLDS = 0
STREAM_LEARNER = 1
STREAM_BOOTSTRAP = 2
STREAM_SIMULATION = 3


class ConfoundBoundsError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ConfoundBoundsError, ValueError):
    pass


class NonBinaryTreatment(ValidationError):
    pass


class OutcomeOutOfRange(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class TooFewObservations(ValidationError):
    pass


class EstimationError(ConfoundBoundsError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample ``(X, A, Y)`` with the declared outcome range.

    ``y_min`` / ``y_max`` may be left as ``None``; :func:`validate_dataset`
    fills them with the observed extremes.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    y_min: Optional[float] = None
    y_max: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.outcome)

    @property
    def y_range(self) -> float:
        return float(self.y_max - self.y_min)


@dataclass(frozen=True)
class SensitivityConfig:
    eps_grid: tuple = tuple(np.linspace(0.0, 0.2, 21))
    delta_grid: tuple = (1.0,)
    model: str = X_MIXTURE
    folds: int = 5
    alpha: float = 0.05
    bootstrap_reps: int = 1000
    clip: float = 0.01
    seed: int = 0
    learner: str = "logistic-knn"
    eps0_points: int = 201
    eps0_max: float = 1.0

    def __post_init__(self):
        eps = np.asarray(self.eps_grid, dtype=float)
        delta = np.asarray(self.delta_grid, dtype=float)
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in eps))
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in delta))
        if eps.size == 0 or np.any(np.diff(eps) <= 0):
            raise ValidationError("eps_grid must be non-empty and strictly increasing")
        if eps[0] < 0 or eps[-1] > 1:
            raise ValidationError("eps_grid must lie in [0, 1]")
        if delta.size == 0 or np.any(np.diff(delta) <= 0):
            raise ValidationError("delta_grid must be non-empty and strictly increasing")
        if delta[0] < 0 or delta[-1] > 1:
            raise ValidationError("delta_grid must lie in [0, 1]")
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.model!r}")
        if int(self.folds) < 2:
            raise ValidationError("folds must be at least 2")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if int(self.bootstrap_reps) < 1:
            raise ValidationError("bootstrap_reps must be positive")
        if not 0 < self.clip < 0.5:
            raise ValidationError("clip must lie in (0, 0.5)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if int(self.eps0_points) < 2:
            raise ValidationError("eps0_points must be at least 2")
        if not eps[-1] <= self.eps0_max <= 1:
            raise ValidationError("eps0_max must lie between the top of eps_grid and 1")

    @property
    def eps(self) -> np.ndarray:
        return np.asarray(self.eps_grid)

    @property
    def deltas(self) -> np.ndarray:
        return np.asarray(self.delta_grid)

    def eps0_grid(self) -> np.ndarray:
        """Search grid for eps_0.

        ``eps0_points`` values over the range of ``eps_grid``, continued with as
        many again up to ``eps0_max`` so a crossing beyond the plotted range is
        still found.
        """
        lo, hi = self.eps_grid[0], self.eps_grid[-1]
        fine = np.linspace(lo, hi, int(self.eps0_points))
        if self.eps0_max <= hi:
            return fine
        return np.concatenate([fine, np.linspace(hi, self.eps0_max, int(self.eps0_points))[1:]])

    def replace(self, **changes) -> "SensitivityConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    labels: np.ndarray  # values in 1..B
    n_folds: int

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_folds + 1)[1:]


def make_rng(seed: int, stream: int = 0, *substreams: int) -> np.random.Generator:
    """Generator for ``(seed, stream, *substreams)``.

    Distinct spawn keys under one seed give statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), *map(int, substreams)))
    return np.random.Generator(np.random.PCG64(ss))


def _first_bad_row(mask: np.ndarray) -> int:
    rows = np.flatnonzero(mask.reshape(len(mask), -1).any(axis=1))
    return int(rows[0])


def validate_dataset(raw: Dataset, folds: int = 5) -> Dataset:
    """Check the invariants of a :class:`Dataset` and fill a missing outcome range.

    Returns ``raw`` itself when nothing needs filling.
    """
    x = np.asarray(raw.covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    a = np.asarray(raw.treatment, dtype=float)
    y = np.asarray(raw.outcome, dtype=float)
    n = len(y)
    if len(a) != n or len(x) != n:
        raise ValidationError(
            f"length mismatch: covariates {len(x)}, treatment {len(a)}, outcome {n}"
        )
    if n < 2 * folds:
        raise TooFewObservations(f"need at least {2 * folds} rows for {folds} folds, got {n}")
    for name, arr in (("covariates", x), ("treatment", a), ("outcome", y)):
        bad = ~np.isfinite(arr)
        if bad.any():
            raise NonFiniteEntry(f"non-finite {name} value at row {_first_bad_row(bad)}")
    bad = (a != 0) & (a != 1)
    if bad.any():
        row = _first_bad_row(bad)
        raise NonBinaryTreatment(f"treatment must be 0/1, got {a[row]!r} at row {row}")
    if a.min() == a.max():
        raise NonBinaryTreatment(
            f"treatment takes only the value {int(a[0])} (row 0 onward); both arms are required"
        )
    y_min = float(y.min()) if raw.y_min is None else float(raw.y_min)
    y_max = float(y.max()) if raw.y_max is None else float(raw.y_max)
    if not (np.isfinite(y_min) and np.isfinite(y_max)) or y_min >= y_max:
        raise OutcomeOutOfRange(f"need finite y_min < y_max, got [{y_min}, {y_max}]")
    bad = (y < y_min) | (y > y_max)
    if bad.any():
        row = _first_bad_row(bad)
        raise OutcomeOutOfRange(f"outcome {y[row]!r} at row {row} outside [{y_min}, {y_max}]")
    if raw.y_min is not None and raw.y_max is not None:
        return raw
    return dataclasses.replace(raw, y_min=y_min, y_max=y_max)


def make_folds(n: int, n_folds: int, rng: np.random.Generator) -> FoldPlan:
    """Balanced random partition of ``range(n)`` into folds labelled ``1..n_folds``."""
    if n_folds < 2:
        raise ValidationError("need at least two folds")
    if n < n_folds:
        raise TooFewObservations(f"cannot split {n} rows into {n_folds} folds")
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % n_folds + 1
    return FoldPlan(labels=labels, n_folds=n_folds)


def as_arrays(data: Dataset):
    """``(X, A, Y)`` as float arrays, ``X`` always two-dimensional."""
    x = np.asarray(data.covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x, np.asarray(data.treatment, dtype=float), np.asarray(data.outcome, dtype=float)
