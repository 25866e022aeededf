"""Brute-force checks of the identification results on exactly computable finite instances.

The bounds are re-derived here from first principles: for a fixed mass ``eps``
of confounded units the bias term is linear in the per-atom confounded mass
``w``, and each atom's worst-case slope comes straight from the box on
``lambda_a - mu_a``. Optimising over ``0 <= w <= p, sum(w) = eps`` is a
fractional knapsack. Nothing in this module calls the estimators' trimming
code except :func:`oracle_suite`, which compares the two.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .bounds import Population, plug_in_bounds
from .core import X_MIXTURE, XA_MIXTURE, ValidationError


@dataclass(frozen=True, eq=False)
class FiniteInstance:
    probs: np.ndarray
    pi1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    y_min: float = 0.0
    y_max: float = 1.0

    def population(self) -> Population:
        return Population(self.probs, self.pi1, self.mu0, self.mu1, self.y_min, self.y_max)

    def to_json(self) -> str:
        return json.dumps({k: np.asarray(v).tolist() for k, v in asdict(self).items()})

    @classmethod
    def from_json(cls, text: str) -> "FiniteInstance":
        raw = json.loads(text)
        return cls(**{k: (np.asarray(v) if isinstance(v, list) else v) for k, v in raw.items()})


def lp_coefficients(inst: FiniteInstance, delta: float, model: str = X_MIXTURE):
    """Per-atom ``(mass, max slope, min slope)`` of the bias term in the confounded mass."""
    p = np.asarray(inst.probs, dtype=float)
    pi1 = np.asarray(inst.pi1, dtype=float)
    mu0 = np.asarray(inst.mu0, dtype=float)
    mu1 = np.asarray(inst.mu1, dtype=float)
    # box on lambda_a - mu_a
    lo0, hi0 = delta * (inst.y_min - mu0), delta * (inst.y_max - mu0)
    lo1, hi1 = delta * (inst.y_min - mu1), delta * (inst.y_max - mu1)
    if model == X_MIXTURE:
        # bias per confounded unit: pi0 (lambda_1 - mu_1) - pi1 (lambda_0 - mu_0)
        return p, (1 - pi1) * hi1 - pi1 * lo0, (1 - pi1) * lo1 - pi1 * hi0
    if model == XA_MIXTURE:
        # controls contribute (lambda_1 - mu_1), treated -(lambda_0 - mu_0)
        mass = np.concatenate([p * (1 - pi1), p * pi1])
        return mass, np.concatenate([hi1, -lo0]), np.concatenate([lo1, -hi0])
    raise ValidationError(f"unknown model {model!r}")


def greedy_knapsack(mass, value, eps: float, maximize: bool = True) -> float:
    """Optimal ``sum(w * value)`` over ``0 <= w <= mass``, ``sum(w) = eps``, filling best atoms first."""
    order = np.argsort(-value if maximize else value, kind="stable")
    left = eps
    total = 0.0
    for i in order:
        if left <= 0:
            break
        take = min(mass[i], left)
        total += take * value[i]
        left -= take
    return total


def vertex_knapsack(mass, value, eps: float, maximize: bool = True) -> float:
    """Same optimum by enumerating every vertex of the feasible polytope.

    A vertex has all atoms at 0 or full mass except at most one. Exponential in
    the support size; meant for supports of at most ~10 atoms.
    """
    m = len(mass)
    best = -math.inf if maximize else math.inf
    tol = 1e-12
    for full in itertools.product((0, 1), repeat=m):
        used = sum(mass[i] for i in range(m) if full[i])
        base = sum(mass[i] * value[i] for i in range(m) if full[i])
        candidates = []
        if abs(used - eps) <= tol:
            candidates.append(base)
        rest = eps - used
        for j in range(m):
            if not full[j] and -tol <= rest <= mass[j] + tol:
                candidates.append(base + rest * value[j])
        for c in candidates:
            best = max(best, c) if maximize else min(best, c)
    return best


def lp_sharp_bounds(inst: FiniteInstance, eps: float, delta: float, model: str = X_MIXTURE, solver=greedy_knapsack):
    """Sharp ``(psi_l, psi_u)`` from the knapsack over confounded mass."""
    mass, up, low = lp_coefficients(inst, delta, model)
    base = math.fsum(np.asarray(inst.probs) * (np.asarray(inst.mu1) - np.asarray(inst.mu0)))
    return base + solver(mass, low, eps, maximize=False), base + solver(mass, up, eps, maximize=True)


def check_nesting(inst: FiniteInstance, eps_grid, delta: float) -> float:
    """Largest amount by which the XA bounds fail to contain the X bounds (0 when nested)."""
    worst = 0.0
    for e in eps_grid:
        xl, xu = lp_sharp_bounds(inst, e, delta, X_MIXTURE)
        al, au = lp_sharp_bounds(inst, e, delta, XA_MIXTURE)
        worst = max(worst, al - xl, xu - au)
    return worst


@dataclass(frozen=True, eq=False)
class CounterfactualTable:
    """Joint law of ``(X, S, A, Y^0, Y^1)`` as weighted atoms."""

    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    probs: np.ndarray


def _cond_mean(values, probs, mask):
    mass = math.fsum(probs[mask])
    return math.fsum(values[mask] * probs[mask]) / mass if mass > 0 else math.nan


def check_mixture_identity(table: CounterfactualTable) -> float:
    """``|E(Y^1 - Y^0) - RHS|`` for the mixture decomposition of the ATE.

    The right-hand side uses only the observed ``Y``, ``S`` and the two
    unobservable regressions ``lambda_a(x) = E(Y^a | A = 1 - a, x, S = 0)``.
    """
    x, s, a, p = table.x, table.s, table.a, table.probs
    y = np.where(a == 1, table.y1, table.y0)
    ate = math.fsum(p * (table.y1 - table.y0))
    rhs = []
    for i in range(len(p)):
        same_x = x == x[i]
        if s[i] == 0:
            arm = 1 - a[i]  # lambda_{1-A}: counterfactual arm 1-A among units with treatment A
            ya = table.y1 if arm == 1 else table.y0
            lam = _cond_mean(ya, p, same_x & (s == 0) & (a == 1 - arm))
            rhs.append(p[i] * (y[i] - lam) * (2 * a[i] - 1))
        else:
            m1 = _cond_mean(y, p, same_x & (s == 1) & (a == 1))
            m0 = _cond_mean(y, p, same_x & (s == 1) & (a == 0))
            rhs.append(p[i] * (m1 - m0))
    return abs(ate - math.fsum(rhs))


# --- random instances -------------------------------------------------------------------

def random_instance(rng: np.random.Generator, size: int = 6, ties: bool = False) -> FiniteInstance:
    y_min = float(rng.uniform(-2, 1))
    y_max = y_min + float(rng.uniform(0.5, 3))
    probs = rng.dirichlet(np.ones(size))
    pi1 = rng.uniform(0.05, 0.95, size)
    mu0 = rng.uniform(y_min, y_max, size)
    mu1 = rng.uniform(y_min, y_max, size)
    if ties and size > 1:
        # copy one atom's nuisances onto another so g has a tied value
        i, j = rng.choice(size, 2, replace=False)
        pi1[j], mu0[j], mu1[j] = pi1[i], mu0[i], mu1[i]
    return FiniteInstance(probs, pi1, mu0, mu1, y_min, y_max)


def random_counterfactual_table(
    rng: np.random.Generator, n_x: int = 2, n_pairs: int = 2, s_values=(0, 1)
) -> CounterfactualTable:
    """Random table honouring ``A`` independent of ``(Y^0, Y^1)`` given ``X`` among ``S = 1``.

    Among ``S = 0`` the outcome pairs depend on ``A`` (arbitrary confounding).
    """
    rows = []
    xs_probs = rng.dirichlet(np.ones(n_x * len(s_values)))
    k = 0
    for x in range(n_x):
        for s in s_values:
            pxs = xs_probs[k]
            k += 1
            pa1 = rng.uniform(0.1, 0.9)
            shared = rng.uniform(-1, 2, size=(n_pairs, 2)), rng.dirichlet(np.ones(n_pairs))
            for a in (0, 1):
                if s == 1:
                    pairs, w = shared
                else:
                    pairs, w = rng.uniform(-1, 2, size=(n_pairs, 2)), rng.dirichlet(np.ones(n_pairs))
                pa = pa1 if a == 1 else 1 - pa1
                for (y0, y1), wi in zip(pairs, w):
                    rows.append((x, s, a, y0, y1, pxs * pa * wi))
    arr = np.array(rows, dtype=float)
    return CounterfactualTable(
        x=arr[:, 0].astype(int),
        s=arr[:, 1].astype(int),
        a=arr[:, 2].astype(int),
        y0=arr[:, 3],
        y1=arr[:, 4],
        probs=arr[:, 5],
    )


# --- batch verification -------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    count: int
    failing: str = ""  # serialised instance for replay


def oracle_suite(n_instances: int, seed: int, offset: float = 0.0, eps_points: int = 11) -> list:
    """Run every oracle check on ``n_instances`` random instances.

    ``offset`` is added to the plug-in bounds before comparison; a nonzero value
    exists only to exercise the failure path.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    eps_grid = np.linspace(0, 1, eps_points)
    checks = {
        "sharpness": CheckResult("sharpness", True, 0.0, 1e-10, 0),
        "vertex": CheckResult("vertex", True, 0.0, 1e-10, 0),
        "width": CheckResult("width", True, 0.0, 1e-12, 0),
        "mixture": CheckResult("mixture", True, 0.0, 1e-12, 0),
        "nesting": CheckResult("nesting", True, 0.0, 1e-12, 0),
    }

    def record(name, err, payload):
        c = checks[name]
        c.count += 1
        if err > c.worst:
            c.worst = err
        if err > c.tolerance and c.passed:
            c.passed = False
            c.failing = payload()

    for _ in range(n_instances):
        size = int(rng.integers(1, 13))
        inst = random_instance(rng, size, ties=bool(rng.integers(0, 2)))
        delta = float(rng.uniform(0, 1))
        pop = inst.population()
        payload = lambda inst=inst, delta=delta: json.dumps({"delta": delta, "instance": json.loads(inst.to_json())})
        err = 0.0
        for model in (X_MIXTURE, XA_MIXTURE):
            for e in eps_grid:
                pl, pu = plug_in_bounds(pop, e, delta, model)
                ll, lu = lp_sharp_bounds(inst, e, delta, model)
                err = max(err, abs(pl + offset - ll), abs(pu + offset - lu))
        record("sharpness", err, payload)

        small = random_instance(rng, int(rng.integers(1, 5)))
        err = 0.0
        for model in (X_MIXTURE, XA_MIXTURE):
            for e in eps_grid:
                g = lp_sharp_bounds(small, e, delta, model)
                v = lp_sharp_bounds(small, e, delta, model, solver=vertex_knapsack)
                err = max(err, abs(g[0] - v[0]), abs(g[1] - v[1]))
        record("vertex", err, lambda small=small, delta=delta: json.dumps(
            {"delta": delta, "instance": json.loads(small.to_json())}))

        unit = FiniteInstance(inst.probs, inst.pi1, (inst.mu0 - inst.y_min) / (inst.y_max - inst.y_min),
                              (inst.mu1 - inst.y_min) / (inst.y_max - inst.y_min))
        lo, hi = plug_in_bounds(unit.population(), 1.0, 1.0, X_MIXTURE)
        record("width", abs(hi + offset - lo - 1.0), lambda unit=unit: unit.to_json())

        table = random_counterfactual_table(rng)
        record("mixture", check_mixture_identity(table), lambda table=table: json.dumps(
            {k: np.asarray(v).tolist() for k, v in asdict(table).items()}))

        record("nesting", check_nesting(inst, eps_grid, delta), payload)
    return list(checks.values())
