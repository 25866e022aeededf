"""Confidence bands for the bound curves and the robustness summary eps_0."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .bounds import BoundsCurve, trim_terms
from .core import ConfoundBoundsError, Dataset, SensitivityConfig
from .nuisance import NuisanceFit


class ZeroVariance(ConfoundBoundsError):
    pass


class NoRoot(ConfoundBoundsError):
    pass


class NoCrossing(ConfoundBoundsError):
    pass


class DegenerateDerivative(ConfoundBoundsError):
    pass


@dataclass(frozen=True, eq=False)
class BandSet:
    eps: np.ndarray
    delta: float
    alpha: float
    c_alpha: float
    d_alpha: float
    uniform_lower: np.ndarray
    uniform_upper: np.ndarray
    pointwise_lower: np.ndarray
    pointwise_upper: np.ndarray
    sup_lower: Optional[np.ndarray] = None  # bootstrap replicates of the sup statistics
    sup_upper: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EpsilonZero:
    estimate: float
    std_error: float
    ci: tuple
    moment_residual: float
    delta: float = 1.0
    model: str = "x"


def draw_multipliers(rng: np.random.Generator, reps: int, n: int):
    """Two independent ``reps x n`` Rademacher arrays (lower and upper processes)."""
    zeta = rng.integers(0, 2, size=(reps, n), dtype=np.int8) * 2 - 1
    xi = rng.integers(0, 2, size=(reps, n), dtype=np.int8) * 2 - 1
    return zeta.astype(np.int8), xi.astype(np.int8)


def _sup_statistic(multipliers: np.ndarray, scaled: np.ndarray, chunk: int = 256) -> np.ndarray:
    n = scaled.shape[0]
    out = np.empty(multipliers.shape[0])
    for start in range(0, multipliers.shape[0], chunk):
        block = multipliers[start:start + chunk].astype(float)
        out[start:start + chunk] = (block @ scaled).max(axis=1) / np.sqrt(n)
    return out


def multiplier_bootstrap_bands(
    data: Dataset,
    fit: NuisanceFit,
    curve: BoundsCurve,
    cfg: SensitivityConfig,
    rng: np.random.Generator,
    delta: float = 1.0,
    multipliers=None,
) -> BandSet:
    """Uniform bands ``[psi_l - c sigma_l / sqrt(n), psi_u + d sigma_u / sqrt(n)]``.

    ``c`` and ``d`` are the ``1 - alpha/2`` quantiles of the suprema over the eps
    grid of Rademacher-weighted, studentised influence terms. Pointwise
    Imbens-Manski intervals at the same ``alpha`` are filled in as well.
    ``multipliers`` overrides the random ``(zeta, xi)`` draws.
    """
    j = curve.column(delta)
    terms = trim_terms(data, fit, curve.eps, delta, curve.model)
    sig_l, sig_u = terms.sigma_l(), terms.sigma_u()
    bad = np.flatnonzero((sig_l <= 0) | (sig_u <= 0))
    if bad.size:
        raise ZeroVariance(f"zero estimated variance at eps={curve.eps[bad[0]]}")
    n = fit.n
    if multipliers is None:
        multipliers = draw_multipliers(rng, cfg.bootstrap_reps, n)
    zeta, xi = multipliers
    sup_l = _sup_statistic(np.asarray(zeta), terms.centered_l() / sig_l)
    sup_u = _sup_statistic(np.asarray(xi), -terms.centered_u() / sig_u)
    alpha = cfg.alpha
    c = float(np.quantile(sup_l, 1 - alpha / 2))
    d = float(np.quantile(sup_u, 1 - alpha / 2))
    psi_l, psi_u = curve.psi_l[:, j], curve.psi_u[:, j]
    root_n = np.sqrt(n)
    pw = np.array([imbens_manski_band(curve, e, alpha, n, delta) for e in curve.eps])
    return BandSet(
        eps=curve.eps,
        delta=float(delta),
        alpha=alpha,
        c_alpha=c,
        d_alpha=d,
        uniform_lower=psi_l - c * sig_l / root_n,
        uniform_upper=psi_u + d * sig_u / root_n,
        pointwise_lower=pw[:, 0],
        pointwise_upper=pw[:, 1],
        sup_lower=sup_l,
        sup_upper=sup_u,
    )


def imbens_manski_critical_value(width: float, alpha: float = 0.05, tol: float = 1e-10) -> float:
    """Solve ``Phi(C + width) - Phi(-C) = 1 - alpha`` for ``C`` by bisection.

    ``width`` is the standardised interval length ``sqrt(n) (psi_u - psi_l) / max(sigma)``;
    the root always lies between ``z_(1-alpha)`` and ``z_(1-alpha/2)``.
    """
    width = max(float(width), 0.0)
    norm = stats.norm

    def f(c):
        return norm.cdf(c + width) - norm.cdf(-c) - (1 - alpha)

    lo, hi = norm.ppf(1 - alpha), norm.ppf(1 - alpha / 2)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo > 0 or f_hi < 0:
        if abs(f_lo) < 1e-15:
            return float(lo)
        if abs(f_hi) < 1e-15:
            return float(hi)
        raise NoRoot(f"no Imbens-Manski root in [{lo}, {hi}] for width={width}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def imbens_manski_band(curve: BoundsCurve, eps: float, alpha: float, n: int, delta: float = 1.0):
    """Pointwise interval covering the parameter (not the whole identified set) at ``eps``."""
    i, j = curve.row(eps), curve.column(delta)
    lo, hi = curve.psi_l[i, j], curve.psi_u[i, j]
    s_l, s_u = curve.sigma_l[i, j], curve.sigma_u[i, j]
    if s_l <= 0 or s_u <= 0:
        raise ZeroVariance(f"zero estimated variance at eps={eps}")
    root_n = np.sqrt(n)
    c = imbens_manski_critical_value(root_n * (hi - lo) / max(s_l, s_u), alpha)
    return lo - c * s_l / root_n, hi + c * s_u / root_n


def find_crossing(grid, psi_l, psi_u, iters: int = 80) -> float:
    """First eps at which ``psi_l * psi_u`` reaches zero on monotone curves.

    Between the two bracketing grid points the curves are interpolated linearly
    and the product is bisected.
    """
    grid = np.asarray(grid, dtype=float)
    prod = np.asarray(psi_l) * np.asarray(psi_u)
    hits = np.flatnonzero(prod <= 0)
    if hits.size == 0:
        raise NoCrossing(f"bounds exclude zero on the whole range [{grid[0]}, {grid[-1]}]")
    j = int(hits[0])
    if j == 0:
        return float(grid[0])
    e0, e1 = grid[j - 1], grid[j]

    def product(e):
        w = (e - e0) / (e1 - e0)
        lo = (1 - w) * psi_l[j - 1] + w * psi_l[j]
        hi = (1 - w) * psi_u[j - 1] + w * psi_u[j]
        return lo * hi

    a, b = e0, e1
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if product(mid) > 0:
            a = mid
        else:
            b = mid
    return float(b)


def estimate_epsilon0(
    data: Dataset,
    fit: NuisanceFit,
    cfg: SensitivityConfig,
    delta: float = 1.0,
    model: Optional[str] = None,
    grid=None,
) -> EpsilonZero:
    """Smallest proportion of confounded units at which the bounds reach zero, with a Wald CI.

    The root is located on the rearranged curves over ``grid`` (default
    ``cfg.eps0_grid()``); the standard error is the sandwich form of the
    Z-estimator for the moment ``psi_l(eps) * psi_u(eps) = 0``. When both
    bounds are exactly zero at the root the moment has a double root, and
    ``std_error`` and ``ci`` are NaN.
    """
    model = model or cfg.model
    grid = cfg.eps0_grid() if grid is None else np.asarray(grid, dtype=float)
    terms = trim_terms(data, fit, grid, delta, model)
    psi_l = -np.sort(-terms.psi_l)
    psi_u = np.sort(terms.psi_u)
    est = find_crossing(grid, psi_l, psi_u)

    at = trim_terms(data, fit, [est], delta, model)
    lo, hi = float(at.psi_l[0]), float(at.psi_u[0])
    q_lo = float(at.q_l[:, 0].mean())
    q_hi = float(at.q_u[:, 0].mean())
    denom = hi * (q_lo - delta * (fit.y_max - fit.y_min)) + lo * q_hi
    if lo == 0.0 and hi == 0.0:
        # double root at a point-identified zero: no Wald interval exists
        return EpsilonZero(est, math.nan, (math.nan, math.nan), 0.0, float(delta), model)
    if abs(denom) < 1e-8:
        raise DegenerateDerivative(f"derivative of the moment map is {denom:.3g} at eps={est:.4g}")
    infl = hi * (at.phi_l[:, 0] - at.q_l[:, 0] * at.kappa[:, 0]) + lo * (
        at.phi_u[:, 0] - at.q_u[:, 0] * at.lam[:, 0]
    )
    se = float(np.sqrt(np.var(infl) / denom**2 / fit.n))
    z = stats.norm.ppf(1 - cfg.alpha / 2)
    ci = (max(0.0, est - z * se), min(1.0, est + z * se))
    return EpsilonZero(est, se, ci, lo * hi, float(delta), model)
