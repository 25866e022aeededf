"""Bound curves over the (eps, delta) grid: sample estimators, exact population values,
width and monotone rearrangement."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    X_MIXTURE,
    XA_MIXTURE,
    ConfoundBoundsError,
    Dataset,
    SensitivityConfig,
    ValidationError,
    as_arrays,
)
from .influence import EtaPoint, g_value, lu_terms, nu_if, tau_if, tau_parts  # noqa: F401
from .nuisance import NuisanceFit, empirical_quantile


class MisalignedFit(ConfoundBoundsError):
    pass


@dataclass(frozen=True, eq=False)
class BoundsCurve:
    """Estimated bounds; matrices are indexed ``[eps, delta]``."""

    eps: np.ndarray
    deltas: np.ndarray
    psi_l: np.ndarray
    psi_u: np.ndarray
    sigma_l: np.ndarray
    sigma_u: np.ndarray
    model: str = X_MIXTURE
    n: int = 0
    rearranged: bool = False

    def column(self, delta: float) -> int:
        hits = np.flatnonzero(np.isclose(self.deltas, delta, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"delta={delta} not in grid")
        return int(hits[0])

    def row(self, eps: float) -> int:
        hits = np.flatnonzero(np.isclose(self.eps, eps, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"eps={eps} not in grid")
        return int(hits[0])


def _column_means(m: np.ndarray) -> np.ndarray:
    # contiguous rows give each column the same pairwise summation as a 1-d mean
    return np.ascontiguousarray(m.T).mean(axis=1)


@dataclass(frozen=True, eq=False)
class TrimTerms:
    """Observation-level pieces of the estimators at one delta, columns over eps.

    ``kappa``/``lam`` are the lower/upper trimming indicators applied to the
    plug-in part, and ``q_l``/``q_u`` the fold-specific quantiles seen by each
    row. They feed the variance, bootstrap and robustness computations.
    """

    eps: np.ndarray
    delta: float
    phi_l: np.ndarray
    phi_u: np.ndarray
    kappa: np.ndarray
    lam: np.ndarray
    q_l: np.ndarray
    q_u: np.ndarray

    @property
    def psi_l(self) -> np.ndarray:
        return _column_means(self.phi_l)

    @property
    def psi_u(self) -> np.ndarray:
        return _column_means(self.phi_u)

    def centered_l(self) -> np.ndarray:
        return self.phi_l - self.kappa * self.q_l + self.eps * self.q_l - self.psi_l

    def centered_u(self) -> np.ndarray:
        return self.phi_u - self.lam * self.q_u + self.eps * self.q_u - self.psi_u

    def sigma_l(self) -> np.ndarray:
        return np.sqrt(np.mean(self.centered_l() ** 2, axis=0))

    def sigma_u(self) -> np.ndarray:
        return np.sqrt(np.mean(self.centered_u() ** 2, axis=0))


def trim_terms(data: Dataset, fit: NuisanceFit, eps, delta: float, model: str = X_MIXTURE) -> TrimTerms:
    """Cross-fitted ``phi_l``/``phi_u`` for every row and every ``eps``.

    Quantiles come from the training rows of each row's own fold model. At
    ``eps = 0`` no row is trimmed and at ``eps = 1`` every row is.
    """
    x, a, y = as_arrays(data)
    n = len(y)
    if fit.n != n:
        raise MisalignedFit(f"fit has {fit.n} rows, data has {n}")
    if model not in (X_MIXTURE, XA_MIXTURE):
        raise ValidationError(f"unknown model {model!r}")
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    point = fit.eta(a, y)
    nu = nu_if(point)
    plug, resid = tau_parts(point, delta)
    if model == X_MIXTURE:
        g_own = g_other = np.asarray(g_value(point, delta, X_MIXTURE), dtype=float)
    else:
        g_own = g_value(point, delta, XA_MIXTURE)
        g_other = g_value(replace(point, a=1 - a), delta, XA_MIXTURE)

    q_l = np.empty((n, eps.size))
    q_u = np.empty((n, eps.size))
    labels = fit.fold_plan.labels
    for k in range(1, fit.fold_plan.n_folds + 1):
        rows = labels == k
        table = fit.quantile_table(k, delta, model)
        q_l[rows] = empirical_quantile(table, eps)
        q_u[rows] = empirical_quantile(table, 1.0 - eps)

    low_own = g_own[:, None] <= q_l
    low_other = g_other[:, None] <= q_l
    up_own = g_own[:, None] > q_u
    up_other = g_other[:, None] > q_u
    for ind in (low_own, low_other, up_own, up_other):
        ind[:, eps == 0.0] = False
        ind[:, eps == 1.0] = True

    offset = eps * delta * (fit.y_max - fit.y_min)
    nu = nu[:, None]
    phi_l = nu + low_own * plug[:, None] + low_other * resid[:, None] - offset
    phi_u = nu + up_own * plug[:, None] + up_other * resid[:, None]
    return TrimTerms(
        eps=eps,
        delta=float(delta),
        phi_l=phi_l,
        phi_u=phi_u,
        kappa=low_own.astype(float),
        lam=up_own.astype(float),
        q_l=q_l,
        q_u=q_u,
    )


def estimate_bounds(data: Dataset, fit: NuisanceFit, cfg: SensitivityConfig, model: str | None = None) -> BoundsCurve:
    """Cross-fitted bound estimates and their standard deviations on ``cfg``'s grid."""
    model = model or cfg.model
    eps, deltas = cfg.eps, cfg.deltas
    shape = (eps.size, deltas.size)
    psi_l, psi_u, sig_l, sig_u = (np.empty(shape) for _ in range(4))
    for j, delta in enumerate(deltas):
        terms = trim_terms(data, fit, eps, delta, model)
        psi_l[:, j] = terms.psi_l
        psi_u[:, j] = terms.psi_u
        sig_l[:, j] = terms.sigma_l()
        sig_u[:, j] = terms.sigma_u()
    return BoundsCurve(eps, deltas, psi_l, psi_u, sig_l, sig_u, model=model, n=fit.n)


def rearrange(curve: BoundsCurve) -> BoundsCurve:
    """Monotone rearrangement: lower bound sorted nonincreasing in eps, upper nondecreasing."""
    order = np.argsort(curve.eps)
    if np.any(np.diff(curve.eps[order]) <= 0) or np.any(order != np.arange(order.size)):
        raise ValidationError("rearrangement needs a strictly increasing eps grid")
    psi_l = -np.sort(-curve.psi_l, axis=0)
    psi_u = np.sort(curve.psi_u, axis=0)
    return replace(curve, psi_l=psi_l, psi_u=psi_u, rearranged=True)


def bound_width(curve: BoundsCurve, eps: float, delta: float = 1.0) -> float:
    i, j = curve.row(eps), curve.column(delta)
    return float(curve.psi_u[i, j] - curve.psi_l[i, j])


# --- exact population bounds on a finite support -------------------------------------

@dataclass(frozen=True, eq=False)
class Population:
    """Finite-support covariate distribution with its exact nuisance functions."""

    probs: np.ndarray
    pi1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or not np.isclose(p.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValidationError("support probabilities must be nonnegative and sum to 1")

    @property
    def mu_diff(self) -> float:
        return float(np.dot(self.probs, np.asarray(self.mu1) - np.asarray(self.mu0)))

    def atoms(self, delta: float, model: str = X_MIXTURE):
        """``(probs, g)`` over x (X model) or over (a, x) pairs (XA model)."""
        probs = np.asarray(self.probs, dtype=float)
        point = EtaPoint(self.pi1, self.mu0, self.mu1, None, None, self.y_min, self.y_max)
        if model == X_MIXTURE:
            return probs, np.asarray(g_value(point, delta, X_MIXTURE), dtype=float)
        if model == XA_MIXTURE:
            pi1 = np.asarray(self.pi1, dtype=float)
            p = np.concatenate([probs * (1 - pi1), probs * pi1])
            a = np.concatenate([np.zeros(probs.size), np.ones(probs.size)])
            both = EtaPoint(
                np.tile(pi1, 2), np.tile(self.mu0, 2), np.tile(self.mu1, 2), a, None, self.y_min, self.y_max
            )
            return p, np.asarray(g_value(both, delta, XA_MIXTURE), dtype=float)
        raise ValidationError(f"unknown model {model!r}")


_MASS_TOL = 1e-12


def _sorted(probs, g):
    order = np.argsort(g, kind="stable")
    return np.asarray(probs)[order], np.asarray(g)[order]


def upper_tail_mass_mean(probs, g, eps: float) -> float:
    """``E[g 1{g > q_(1-eps)}]`` with the tie atom at the quantile split so exactly ``eps`` mass is kept."""
    if eps <= 0:
        return 0.0
    if eps >= 1:
        return float(np.dot(probs, g))
    p, gs = _sorted(probs, g)
    cdf = np.cumsum(p)
    j = min(int(np.searchsorted(cdf, 1.0 - eps - _MASS_TOL)), gs.size - 1)
    q = gs[j]
    above = gs > q
    kept = p[above].sum()
    return float(np.dot(p[above], gs[above]) + (eps - kept) * q)


def lower_tail_mass_mean(probs, g, eps: float) -> float:
    """``E[g 1{g <= q_eps}]`` with fractional mass at the quantile."""
    if eps <= 0:
        return 0.0
    if eps >= 1:
        return float(np.dot(probs, g))
    p, gs = _sorted(probs, g)
    cdf = np.cumsum(p)
    j = min(int(np.searchsorted(cdf, eps - _MASS_TOL)), gs.size - 1)
    q = gs[j]
    below = gs < q
    kept = p[below].sum()
    return float(np.dot(p[below], gs[below]) + (eps - kept) * q)


def plug_in_bounds(population: Population, eps: float, delta: float, model: str = X_MIXTURE):
    """Exact population ``(psi_l, psi_u)`` at one ``(eps, delta)``."""
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"eps must lie in [0, 1], got {eps}")
    p, g = population.atoms(delta, model)
    base = population.mu_diff
    offset = eps * delta * (population.y_max - population.y_min)
    return base + lower_tail_mass_mean(p, g, eps) - offset, base + upper_tail_mass_mean(p, g, eps)


def tail_mean_width(probs, g, eps: float, delta: float = 1.0, y_range: float = 1.0) -> float:
    """Bound length from conditional tail means,
    ``[E{g | g > q_(1-eps)} - E{g | g <= q_eps} + delta * y_range] * eps``.

    Uses indicator (not fractional) trimming, so it agrees with
    :func:`plug_in_bounds` only when ``eps`` sits on a cumulative-mass boundary.
    """
    if eps <= 0:
        return 0.0
    p, gs = _sorted(probs, g)
    if eps >= 1:
        upper = lower = np.dot(p, gs)
    else:
        cdf = np.cumsum(p)
        q_hi = gs[min(int(np.searchsorted(cdf, 1.0 - eps - _MASS_TOL)), gs.size - 1)]
        q_lo = gs[min(int(np.searchsorted(cdf, eps - _MASS_TOL)), gs.size - 1)]
        hi, lo = gs > q_hi, gs <= q_lo
        upper = np.dot(p[hi], gs[hi]) / p[hi].sum()
        lower = np.dot(p[lo], gs[lo]) / p[lo].sum()
    return float((upper - lower + delta * y_range) * eps)
