"""Simulation design with a binary unmeasured confounder, exact ground truth, and a
bias / RMSE / coverage harness."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import optimize, special, stats

from .bounds import Population, estimate_bounds, plug_in_bounds
from .core import (
    STREAM_BOOTSTRAP,
    STREAM_FOLDS,
    STREAM_SIMULATION,
    X_MIXTURE,
    ConfoundBoundsError,
    Dataset,
    SensitivityConfig,
    ValidationError,
    make_folds,
    make_rng,
)
from .inference import estimate_epsilon0, multiplier_bootstrap_bands
from .nuisance import LearnerSet, OracleLearner, fit_cross_fitted

CACHE_ENV = "CONFOUND_BOUNDS_CACHE"
TRUNC = 2.0


class ProbabilityOutOfRange(ValidationError):
    pass


class ReplicateFailure(ConfoundBoundsError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"replicate {index} failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class DgpConfig:
    r: float = 0.05
    n: int = 500
    seed: int = 0

    def __post_init__(self):
        # outcome probabilities span [0.15 - |r|/2, 0.75 + |r|/2]
        if abs(self.r) > 0.3:
            raise ProbabilityOutOfRange(f"r={self.r} pushes outcome probabilities outside [0, 1]")
        if self.n < 2:
            raise ValidationError("n must be at least 2")


def sample_truncnorm(rng: np.random.Generator, size=None, lb: float = -TRUNC, ub: float = TRUNC):
    """Standard normal truncated to ``[lb, ub]`` by inverting the CDF on a uniform draw."""
    u = rng.uniform(special.ndtr(lb), special.ndtr(ub), size)
    return np.clip(special.ndtri(u), lb, ub)


def true_pi1(x):
    """``P(A = 1 | X)``: the confounder and the selection indicator both average out."""
    return 0.5 * (special.ndtr(np.asarray(x)[..., 0]) + 0.5)


def _mean_u_given_arm(p, a):
    # P(U=1 | A=a, X) with p = Phi(x1); P(A=1 | X, U=1) = 0.5 + 0.25p, P(A=1 | X, U=0) = 0.75p
    treated_u1 = 0.5 + 0.25 * p
    treated_u0 = 0.75 * p
    if a == 1:
        return treated_u1 / (treated_u1 + treated_u0)
    return (1 - treated_u1) / ((1 - treated_u1) + (1 - treated_u0))


def true_mu(x, a: int, r: float = 0.05):
    """``E(Y | A = a, X)``."""
    x = np.asarray(x)
    p = special.ndtr(x[..., 0])
    base = 0.25 + 0.5 * special.ndtr(x[..., 0] + x[..., 1])
    return base + (a - 0.5) * r - 0.1 * _mean_u_given_arm(p, a)


def generate(dgp: DgpConfig, rng: np.random.Generator):
    """One sample of size ``dgp.n``; returns the dataset and the latent ``U, S, Y0, Y1``."""
    n = dgp.n
    x = sample_truncnorm(rng, (n, 2))
    u = rng.binomial(1, 0.5, n)
    phi1 = special.ndtr(x[:, 0])
    s = rng.binomial(1, phi1)
    a = rng.binomial(1, 0.5 * (phi1 + 0.5 * s + (1 - s) * u))
    base = 0.25 + 0.5 * special.ndtr(x[:, 0] + x[:, 1]) - 0.1 * u
    y1 = rng.binomial(1, base + 0.5 * dgp.r)
    y0 = rng.binomial(1, base - 0.5 * dgp.r)
    y = np.where(a == 1, y1, y0)
    data = Dataset(x, a.astype(float), y.astype(float), 0.0, 1.0)
    return data, {"U": u, "S": s, "Y0": y0, "Y1": y1}


def oracle_learners(r: float) -> LearnerSet:
    return LearnerSet(
        OracleLearner(true_pi1),
        OracleLearner(lambda z: true_mu(z, 0, r)),
        OracleLearner(lambda z: true_mu(z, 1, r)),
    )


def quadrature_population(r: float, nodes: int = 400) -> Population:
    """Tensor Gauss-Legendre discretisation of the covariate law with exact nuisances."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    x, w = TRUNC * t, TRUNC * w
    dens = w * stats.norm.pdf(x)
    dens /= dens.sum()
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    probs = np.outer(dens, dens).ravel()
    probs /= probs.sum()
    return Population(probs, true_pi1(pts), true_mu(pts, 0, r), true_mu(pts, 1, r))


@dataclass(frozen=True, eq=False)
class Truth:
    eps: np.ndarray
    psi_l: np.ndarray
    psi_u: np.ndarray
    eps0: float
    psi0: float


def _truth_path(r, delta, model, eps):
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    digest = hashlib.sha256(np.asarray(eps, dtype=float).tobytes()).hexdigest()[:16]
    return Path(root) / f"truth_r{r:g}_d{delta:g}_{model}_{digest}.json"


def oracle_truth(r: float, eps_grid, delta: float = 1.0, model: str = X_MIXTURE, nodes: int = 400) -> Truth:
    """Population bound curves and eps_0 for the simulation design.

    Cached as JSON under ``$CONFOUND_BOUNDS_CACHE`` when that variable is set.
    """
    eps = np.asarray(eps_grid, dtype=float)
    path = _truth_path(r, delta, model, eps)
    if path is not None and path.exists():
        raw = json.loads(path.read_text())
        return Truth(np.asarray(raw["eps"]), np.asarray(raw["psi_l"]), np.asarray(raw["psi_u"]),
                     raw["eps0"], raw["psi0"])
    pop = quadrature_population(r, nodes)
    curves = np.array([plug_in_bounds(pop, e, delta, model) for e in eps])

    def moment(e):
        lo, hi = plug_in_bounds(pop, e, delta, model)
        return lo * hi

    psi0 = pop.mu_diff
    eps0 = 0.0 if psi0 == 0 else float(optimize.brentq(moment, 0.0, 1.0, xtol=1e-12))
    truth = Truth(eps, curves[:, 0], curves[:, 1], eps0, psi0)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"eps": eps.tolist(), "psi_l": truth.psi_l.tolist(),
                                   "psi_u": truth.psi_u.tolist(), "eps0": eps0, "psi0": psi0}))
        os.replace(tmp, path)
    return truth


@dataclass(frozen=True)
class SimReport:
    n: int
    reps: int
    grid_size: int
    learner: str
    bias_l: float
    bias_u: float
    bias_eps0: float
    rmse_l: float  # sqrt(n) * integrated RMSE
    rmse_u: float
    rmse_eps0: float
    coverage_region: float
    coverage_eps0: float

    def table_row(self) -> dict:
        """Row in the layout of the published table (bias in percent, coverage in percent)."""
        return {
            "n": self.n,
            "reps": self.reps,
            "grid_size": self.grid_size,
            "learner": self.learner,
            "bias_pct_psi_l": 100 * self.bias_l,
            "bias_pct_psi_u": 100 * self.bias_u,
            "bias_pct_eps0": 100 * self.bias_eps0,
            "rootn_rmse_psi_l": self.rmse_l,
            "rootn_rmse_psi_u": self.rmse_u,
            "rootn_rmse_eps0": self.rmse_eps0,
            "coverage_pct_region": 100 * self.coverage_region,
            "coverage_pct_eps0": 100 * self.coverage_eps0,
        }


@dataclass(frozen=True, eq=False)
class Replicate:
    index: int
    psi_l: np.ndarray
    psi_u: np.ndarray
    region_covered: bool
    eps0: float
    eps0_covered: bool


def run_replicate(index: int, dgp: DgpConfig, cfg: SensitivityConfig, truth: Truth, learner: str) -> Replicate:
    data, _ = generate(dgp, make_rng(dgp.seed, STREAM_SIMULATION, index))
    learners = oracle_learners(dgp.r) if learner == "oracle" else None
    cfg = cfg.replace(learner=cfg.learner if learner == "oracle" else learner)
    folds = make_folds(dgp.n, cfg.folds, make_rng(dgp.seed, STREAM_FOLDS, index))
    fit = fit_cross_fitted(data, cfg, learners=learners, folds=folds)
    delta = cfg.delta_grid[0]
    curve = estimate_bounds(data, fit, cfg)
    bands = multiplier_bootstrap_bands(data, fit, curve, cfg, make_rng(dgp.seed, STREAM_BOOTSTRAP, index), delta)
    covered = bool(np.all(bands.uniform_lower <= truth.psi_l) and np.all(bands.uniform_upper >= truth.psi_u))
    e0 = estimate_epsilon0(data, fit, cfg, delta)
    return Replicate(
        index,
        curve.psi_l[:, 0].copy(),
        curve.psi_u[:, 0].copy(),
        covered,
        e0.estimate,
        bool(e0.ci[0] <= truth.eps0 <= e0.ci[1]),
    )


def _run_one(args):
    index, dgp, cfg, truth, learner = args
    try:
        return run_replicate(index, dgp, cfg, truth, learner)
    except ConfoundBoundsError as exc:
        raise ReplicateFailure(index, exc) from exc
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise ReplicateFailure(index, exc) from exc


def summarize(replicates, truth: Truth, n: int, learner: str) -> SimReport:
    reps = sorted(replicates, key=lambda r: r.index)
    err_l = np.array([r.psi_l for r in reps]) - truth.psi_l
    err_u = np.array([r.psi_u for r in reps]) - truth.psi_u
    err_e = np.array([r.eps0 for r in reps]) - truth.eps0
    root_n = np.sqrt(n)
    return SimReport(
        n=n,
        reps=len(reps),
        grid_size=len(truth.eps),
        learner=learner,
        bias_l=float(np.mean(np.abs(err_l.mean(axis=0)))),
        bias_u=float(np.mean(np.abs(err_u.mean(axis=0)))),
        bias_eps0=float(abs(err_e.mean())),
        rmse_l=float(root_n * np.mean(np.sqrt((err_l**2).mean(axis=0)))),
        rmse_u=float(root_n * np.mean(np.sqrt((err_u**2).mean(axis=0)))),
        rmse_eps0=float(root_n * np.sqrt((err_e**2).mean())),
        coverage_region=float(np.mean([r.region_covered for r in reps])),
        coverage_eps0=float(np.mean([r.eps0_covered for r in reps])),
    )


def run_study(
    dgp: DgpConfig,
    cfg: SensitivityConfig,
    reps: int,
    learner: Optional[str] = None,
    workers: int = 1,
    truth: Optional[Truth] = None,
):
    """Repeat generate / fit / estimate ``reps`` times; returns ``(SimReport, replicates)``.

    Replicate ``j`` draws from its own rng streams under ``dgp.seed``, so results
    do not depend on ``workers``. Any failing replicate aborts the study.
    """
    learner = learner or cfg.learner
    if truth is None:
        truth = oracle_truth(dgp.r, cfg.eps_grid, cfg.delta_grid[0], cfg.model)
    jobs = [(j, dgp, cfg, truth, learner) for j in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return summarize(results, truth, dgp.n, learner), results


def report_dict(report: SimReport) -> dict:
    return asdict(report)
