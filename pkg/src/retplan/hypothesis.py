"""Retention-of-effect hypothesis and its linear contrast."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RangeError
from .families import FamilySpec


@dataclass(frozen=True)
class RetentionHypothesis:
    """``H0: h(theta_T) - h(theta_P) <= delta * (h(theta_R) - h(theta_P))``.

    Large values of the test statistic speak against ``H0``.
    """

    family: FamilySpec
    delta: float

    def __post_init__(self):
        if not math.isfinite(self.delta) or self.delta < 0:
            raise DomainError(f"retention margin must be a finite number >= 0, got {self.delta}")

    @property
    def coefficients(self) -> np.ndarray:
        """Weights of ``(h_T, h_R, h_P)`` in the contrast."""
        d = self.delta
        return np.array([1.0, -d, d - 1.0])

    @property
    def variance_coefficients(self) -> np.ndarray:
        d = self.delta
        return np.array([1.0, d * d, (1.0 - d) ** 2])


@dataclass(frozen=True)
class Contrast:
    eta: float

    @property
    def in_alternative(self) -> bool:
        return self.eta > 0


def contrast(hyp: RetentionHypothesis, theta_t, theta_r, theta_p) -> Contrast:
    """``eta = h(T) - delta h(R) + (delta - 1) h(P)``; the null holds iff ``eta <= 0``."""
    fam = hyp.family
    for label, th in (("T", theta_t), ("R", theta_r), ("P", theta_p)):
        fam.check_domain(th, f"theta_{label}")
    d = hyp.delta
    eta = float(fam.h(theta_t)) - d * float(fam.h(theta_r)) + (d - 1.0) * float(fam.h(theta_p))
    return Contrast(eta)


def boundary_substitute(hyp: RetentionHypothesis, theta_r, theta_p):
    """Test-group parameter that puts ``(T, R, P)`` exactly on the null boundary.

    Raises:
        RangeError: if ``delta h(R) + (1 - delta) h(P)`` falls outside the
            range of ``h`` (only possible for ``delta > 1``).
    """
    fam = hyp.family
    fam.check_domain(theta_r, "theta_R")
    fam.check_domain(theta_p, "theta_P")
    d = hyp.delta
    u = d * float(fam.h(theta_r)) + (1.0 - d) * float(fam.h(theta_p))
    lo, hi = fam.efficacy_range()
    if not lo < u < hi:
        raise RangeError(f"efficacy value {u:g} outside the range ({lo:g}, {hi:g}) of h")
    if fam.param_dim == 1:
        return float(fam.h_inv(u))
    # shared nuisance components are inherited from the reference group
    out = np.array(theta_r, dtype=float, copy=True)
    out[0] = fam.h_inv(u)
    return out
