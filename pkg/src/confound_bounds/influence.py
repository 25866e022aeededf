"""Per-observation building blocks: the L/U box, g, and the uncentered influence functions.

Everything here is vectorised: the fields of :class:`EtaPoint` may be scalars or
equal-length arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import X_MIXTURE, XA_MIXTURE, ValidationError


@dataclass(frozen=True, eq=False)
class EtaPoint:
    """Nuisance values ``pi(1|x), mu_0(x), mu_1(x)`` at one or many points.

    ``a`` and ``y`` are the observed treatment and outcome; they are only needed
    by the XA model's ``g`` and by the influence functions.
    """

    pi1: Any
    mu0: Any
    mu1: Any
    a: Any = None
    y: Any = None
    y_min: float = 0.0
    y_max: float = 1.0

    @property
    def pi0(self):
        return 1.0 - np.asarray(self.pi1, dtype=float)


def lu_terms(point: EtaPoint, delta: float):
    """``(L0, L1, U0, U1)`` with ``L_a = delta (y_min - mu_a)`` and ``U_a = delta (y_max - mu_a)``."""
    if not 0.0 <= delta <= 1.0:
        raise ValidationError(f"delta must lie in [0, 1], got {delta}")
    mu0 = np.asarray(point.mu0, dtype=float)
    mu1 = np.asarray(point.mu1, dtype=float)
    return (
        delta * (point.y_min - mu0),
        delta * (point.y_min - mu1),
        delta * (point.y_max - mu0),
        delta * (point.y_max - mu1),
    )


def g_value(point: EtaPoint, delta: float, model: str = X_MIXTURE):
    """Worst-case per-unit bias contribution; nonnegative because ``U1 >= 0 >= L0``."""
    L0, _, _, U1 = lu_terms(point, delta)
    if model == X_MIXTURE:
        return point.pi0 * U1 - np.asarray(point.pi1, dtype=float) * L0
    if model == XA_MIXTURE:
        if point.a is None:
            raise ValidationError("the XA model needs the treatment value")
        a = np.asarray(point.a, dtype=float)
        return (1.0 - a) * U1 - a * L0
    raise ValidationError(f"unknown model {model!r}")


def nu_if(point: EtaPoint):
    """Uncentered influence function of ``E{mu_1(X) - mu_0(X)}`` (the AIPW summand)."""
    a = np.asarray(point.a, dtype=float)
    pi1 = np.asarray(point.pi1, dtype=float)
    mu0 = np.asarray(point.mu0, dtype=float)
    mu1 = np.asarray(point.mu1, dtype=float)
    mu_a = a * mu1 + (1 - a) * mu0
    pi_a = a * pi1 + (1 - a) * (1 - pi1)
    return (2 * a - 1) * (np.asarray(point.y, dtype=float) - mu_a) / pi_a + mu1 - mu0


def tau_parts(point: EtaPoint, delta: float):
    """Split ``tau`` into its plug-in part and its weighted-residual correction.

    The plug-in part equals the XA model's ``g`` at the observed arm. The XA
    estimator needs the two parts separately because their trimming indicators
    are evaluated at different arms.
    """
    a = np.asarray(point.a, dtype=float)
    pi1 = np.asarray(point.pi1, dtype=float)
    mu0 = np.asarray(point.mu0, dtype=float)
    mu1 = np.asarray(point.mu1, dtype=float)
    mu_a = a * mu1 + (1 - a) * mu0
    odds = np.where(a == 1, (1 - pi1) / pi1, pi1 / (1 - pi1))
    resid = delta * (1 - 2 * a) * (np.asarray(point.y, dtype=float) - mu_a) * odds
    plug = delta * (a * (mu0 - point.y_min) + (1 - a) * (point.y_max - mu1))
    return plug, resid


def tau_if(point: EtaPoint, delta: float = 1.0):
    """Uncentered influence function of ``E{g(eta)}`` under the X model."""
    plug, resid = tau_parts(point, delta)
    return plug + resid
