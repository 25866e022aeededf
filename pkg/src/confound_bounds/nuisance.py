"""Cross-fitted nuisance estimation and per-fold quantiles of the estimated g."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    STREAM_FOLDS,
    STREAM_LEARNER,
    X_MIXTURE,
    ConfoundBoundsError,
    Dataset,
    FoldPlan,
    SensitivityConfig,
    ValidationError,
    as_arrays,
    make_folds,
    make_rng,
)
from .influence import EtaPoint, g_value


class DegenerateFold(ConfoundBoundsError):
    pass


class LearnerFailure(ConfoundBoundsError):
    pass


class EmptyTable(ConfoundBoundsError):
    pass


Predictor = Callable[[np.ndarray], np.ndarray]


class LogisticLearner:
    """Logistic regression fitted by iteratively reweighted least squares.

    Accepts fractional targets in [0, 1] (quasi-binomial fit), so it doubles as
    an outcome regression for bounded outcomes.
    """

    name = "logistic"

    def __init__(self, ridge: float = 1e-8, max_iter: int = 100, tol: float = 1e-9):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, x: np.ndarray, y: np.ndarray, rng=None) -> Predictor:
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0

        def design(z):
            return np.column_stack([np.ones(len(z)), (z - center) / scale])

        d = design(x)
        beta = np.zeros(d.shape[1])
        penalty = self.ridge * np.eye(d.shape[1])
        penalty[0, 0] = 0.0
        for _ in range(self.max_iter):
            eta = d @ beta
            p = 1.0 / (1.0 + np.exp(-eta))
            w = np.clip(p * (1 - p), 1e-10, None)
            hess = d.T @ (d * w[:, None]) + penalty
            grad = d.T @ (y - p) - penalty @ beta
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError as exc:
                raise LearnerFailure(f"logistic IRLS: singular Hessian ({exc})") from None
            beta = beta + step
            if not np.all(np.isfinite(beta)):
                raise LearnerFailure("logistic IRLS diverged (perfect separation?)")
            if np.max(np.abs(step)) < self.tol:
                break
        else:
            raise LearnerFailure(f"logistic IRLS did not converge in {self.max_iter} iterations")

        def predict(z):
            return 1.0 / (1.0 + np.exp(-(design(z) @ beta)))

        return predict


class KNNLearner:
    """k-nearest-neighbour mean on standardised covariates, ``k = ceil(n^(4/5) / 2)``."""

    name = "knn"

    def __init__(self, k: Optional[int] = None):
        self.k = k

    def fit(self, x: np.ndarray, y: np.ndarray, rng=None) -> Predictor:
        n = len(y)
        k = self.k or math.ceil(n ** 0.8 / 2)
        k = max(1, min(k, n))
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        tree = cKDTree((x - center) / scale)
        target = np.asarray(y, dtype=float)

        def predict(z):
            _, idx = tree.query((z - center) / scale, k=k)
            idx = np.asarray(idx).reshape(len(z), k)
            return target[idx].mean(axis=1)

        return predict


class ConstantLearner:
    name = "constant"

    def fit(self, x, y, rng=None) -> Predictor:
        value = float(np.mean(y))
        return lambda z: np.full(len(z), value)


class OracleLearner:
    """Ignores the data and returns a known function (used with simulated truths)."""

    name = "oracle"

    def __init__(self, fn: Predictor):
        self.fn = fn

    def fit(self, x, y, rng=None) -> Predictor:
        return self.fn


@dataclass
class LearnerSet:
    propensity: object
    mu0: object
    mu1: object


def resolve_learners(name: str) -> LearnerSet:
    """Built-in learner combinations. ``"a-b"`` uses ``a`` for the propensity and ``b`` for outcomes."""
    base = {"logistic": LogisticLearner, "knn": KNNLearner, "constant": ConstantLearner}
    parts = name.split("-")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or any(p not in base for p in parts):
        raise ValidationError(f"unknown learner {name!r}; choose from {sorted(LEARNER_NAMES)}")
    return LearnerSet(base[parts[0]](), base[parts[1]](), base[parts[1]]())


LEARNER_NAMES = ("logistic", "knn", "constant", "logistic-knn", "knn-logistic")


@dataclass(frozen=True, eq=False)
class TrainingEta:
    """A fold's nuisance model evaluated at its own training rows."""

    index: np.ndarray
    pi1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    a: np.ndarray


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    pi1_hat: np.ndarray
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    fold_plan: FoldPlan
    training: tuple  # TrainingEta per fold, position k-1
    y_min: float
    y_max: float
    clip: float
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.pi1_hat)

    def eta(self, a=None, y=None) -> EtaPoint:
        return EtaPoint(self.pi1_hat, self.mu0_hat, self.mu1_hat, a, y, self.y_min, self.y_max)

    def quantile_table(self, k: int, delta: float = 1.0, model: str = X_MIXTURE) -> np.ndarray:
        """Sorted training-fold values of the fold-``k`` estimate of g."""
        key = (k, float(delta), model)
        if key not in self._tables:
            tr = self.training[k - 1]
            point = EtaPoint(tr.pi1, tr.mu0, tr.mu1, tr.a, None, self.y_min, self.y_max)
            self._tables[key] = np.sort(np.asarray(g_value(point, delta, model), dtype=float))
        return self._tables[key]


def empirical_quantile(sorted_values: np.ndarray, tau):
    """Left-continuous inverse CDF ``inf{x : F(x) >= tau}``; ``tau = 0`` gives the minimum."""
    m = len(sorted_values)
    if m == 0:
        raise EmptyTable("quantile of an empty table")
    tau = np.asarray(tau, dtype=float)
    # the 1e-9 slack absorbs float error in tau * m at exact multiples of 1/m
    j = np.ceil(tau * m - 1e-9).astype(np.int64)
    j = np.clip(j, 1, m)
    return sorted_values[j - 1]


def predict_quantile(fit: NuisanceFit, k: int, tau, model: str = X_MIXTURE, delta: float = 1.0):
    if not 1 <= k <= len(fit.training):
        raise EmptyTable(f"no quantile table for fold {k}")
    return empirical_quantile(fit.quantile_table(k, delta, model), tau)


def fit_cross_fitted(
    data: Dataset,
    cfg: SensitivityConfig,
    rng: Optional[np.random.Generator] = None,
    learners: Optional[LearnerSet] = None,
    folds: Optional[FoldPlan] = None,
) -> NuisanceFit:
    """Out-of-fold nuisance predictions for every row, plus per-fold training evaluations.

    ``rng`` drives the fold split; learner randomness (if any) draws from a
    separate stream of ``cfg.seed``.
    """
    x, a, y = as_arrays(data)
    n = len(y)
    if learners is None:
        learners = resolve_learners(cfg.learner)
    if folds is None:
        folds = make_folds(n, cfg.folds, rng if rng is not None else make_rng(cfg.seed, STREAM_FOLDS))
    learner_rng = make_rng(cfg.seed, STREAM_LEARNER)
    t = cfg.clip
    y_min, y_max = float(data.y_min), float(data.y_max)
    unit_y = (y - y_min) / (y_max - y_min)

    pi1_hat = np.empty(n)
    mu_hat = {0: np.empty(n), 1: np.empty(n)}
    training = []
    for k in range(1, folds.n_folds + 1):
        test = folds.labels == k
        train = ~test
        a_tr = a[train]
        for arm in (0, 1):
            if not np.any(a_tr == arm):
                raise DegenerateFold(f"training set for fold {k} has no rows with treatment {arm}")
        x_tr = x[train]
        prop = learners.propensity.fit(x_tr, a_tr, learner_rng)
        pi1_hat[test] = prop(x[test])
        tr_pi1 = prop(x_tr)
        tr_mu = {}
        for arm, learner in ((0, learners.mu0), (1, learners.mu1)):
            sel = a_tr == arm
            model = learner.fit(x_tr[sel], unit_y[train][sel], learner_rng)
            mu_hat[arm][test] = y_min + (y_max - y_min) * model(x[test])
            tr_mu[arm] = y_min + (y_max - y_min) * model(x_tr)
        training.append(
            TrainingEta(
                index=np.flatnonzero(train),
                pi1=np.clip(tr_pi1, t, 1 - t),
                mu0=np.clip(tr_mu[0], y_min, y_max),
                mu1=np.clip(tr_mu[1], y_min, y_max),
                a=a_tr,
            )
        )
    for arr in (pi1_hat, mu_hat[0], mu_hat[1]):
        if not np.all(np.isfinite(arr)):
            raise LearnerFailure("learner produced non-finite predictions")
    return NuisanceFit(
        pi1_hat=np.clip(pi1_hat, t, 1 - t),
        mu0_hat=np.clip(mu_hat[0], y_min, y_max),
        mu1_hat=np.clip(mu_hat[1], y_min, y_max),
        fold_plan=folds,
        training=tuple(training),
        y_min=y_min,
        y_max=y_max,
        clip=t,
    )

