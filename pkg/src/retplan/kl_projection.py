"""Weighted Kullback-Leibler projection onto the null hypothesis.

For allocation weights ``w`` and a true parameter triple ``zeta0`` in the
alternative, the restricted MLE converges to

    argmin_{zeta in H0} sum_k w_k K(theta0_k, theta_k),

and the restricted variance estimator converges to the variance evaluated at
that minimiser.  This module computes the minimiser numerically for any
registered family, and in closed form for Poisson endpoints with
``lambda0_T == lambda0_R``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import _boundary
from .errors import DomainError, NegativeDiscriminant, NumericalError, RangeError
from .families import FamilySpec, Normal, Poisson, ScalarFamily, get_family
from .hypothesis import RetentionHypothesis, contrast
from .ret_test import variance_sum

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Weights:
    """Allocation proportions ``n_k / n`` of the groups T, R, P."""

    w_T: float
    w_R: float
    w_P: float

    def __post_init__(self):
        w = self.as_array()
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0) or np.any(w >= 1.0):
            raise DomainError(f"allocation weights must lie in (0, 1), got {tuple(w)}")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"allocation weights must sum to 1, got {w.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_T, self.w_R, self.w_P], dtype=float)

    def __iter__(self):
        return iter((self.w_T, self.w_R, self.w_P))

    @classmethod
    def from_ratio(cls, a: float, b: float, c: float) -> Weights:
        """Normalise a ratio ``a:b:c``."""
        r = np.array([a, b, c], dtype=float)
        if np.any(r <= 0.0) or not np.all(np.isfinite(r)):
            raise DomainError(f"allocation ratio must be positive, got {a}:{b}:{c}")
        s = r / r.sum()
        # put the rounding residue on the largest weight so the sum is 1 to working precision
        i = int(np.argmax(s))
        s[i] = 1.0 - (s.sum() - s[i])
        return cls(*(float(x) for x in s))

    @classmethod
    def rule_of_thumb(cls, delta: float) -> Weights:
        """The ``1 : delta : |1 - delta|`` allocation."""
        return cls.from_ratio(1.0, delta, abs(1.0 - delta))

    @classmethod
    def parse(cls, text: str, delta: float | None = None) -> Weights:
        """Parse ``"wT,wR,wP"``, ``"a:b:c"`` or ``"1:D:1-D"``.

        ``D`` stands for the margin and needs ``delta``.
        """
        text = text.strip()
        if text.upper() == "1:D:1-D":
            if delta is None:
                raise DomainError("allocation 1:D:1-D needs the margin delta")
            return cls.rule_of_thumb(delta)
        sep = ":" if ":" in text else ","
        try:
            parts = [float(p) for p in text.split(sep)]
        except ValueError:
            raise DomainError(f"cannot parse allocation {text!r}") from None
        if len(parts) != 3:
            raise DomainError(f"allocation needs three components, got {text!r}")
        if sep == ":":
            return cls.from_ratio(*parts)
        return cls(*parts)


class Certificate(NamedTuple):
    """Outcome of :func:`convexity_certificate`; truthy when convex."""

    convex: bool
    reason: str

    def __bool__(self):
        return self.convex


@dataclass(frozen=True)
class KlProjection:
    """Minimiser of the weighted KL divergence over the null.

    Attributes:
        theta_h0: projected triple ordered (T, R, P).
        kl_value: weighted divergence at the minimiser.
        sigma_rml2: asymptotic variance of the contrast at ``theta_h0``.
        certified: True when the problem is certified convex, so the local
            minimiser found is the global one.
        method: "identity" (already in the null), "newton", "coordinate" or
            "closed-form".
    """

    theta_h0: tuple
    kl_value: float
    sigma_rml2: float
    certified: bool
    method: str

    @property
    def sigma_rml(self) -> float:
        return math.sqrt(self.sigma_rml2)


def _as_weights(w) -> Weights:
    return w if isinstance(w, Weights) else Weights(*w)


def weighted_kl(hyp: RetentionHypothesis, zeta0, zeta, w) -> float:
    """``sum_k w_k K(theta0_k, theta_k)``."""
    fam = hyp.family
    w = _as_weights(w)
    for label, a, b in zip("TRP", zeta0, zeta):
        fam.check_domain(a, f"theta0_{label}")
        fam.check_domain(b, f"theta_{label}")
    return float(math.fsum(wk * fam.kl(a, b) for wk, a, b in zip(w, zeta0, zeta)))


def _sample_points(family: ScalarFamily, count: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(0.02, 0.98, size=count)
    lo, hi = family.lower, family.upper
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + (hi - lo) * u
    if math.isfinite(lo):
        return lo + np.exp(np.log(1e-3) + u * (np.log(1e3) - np.log(1e-3)))
    return np.tan(np.pi * (u - 0.5))


@lru_cache(maxsize=64)
def _certificate(key: str, delta: float) -> Certificate:
    name, eff = key.split("/")
    family = get_family(name, eff)
    if isinstance(family, Normal):
        return Certificate(True, "quadratic in the means: closed-form projection")
    if not isinstance(family, ScalarFamily):
        return Certificate(False, "no second-order information for this family")
    if not family.lower < family.upper:
        return Certificate(False, "parameter space is not a convex interval")
    rng = np.random.Generator(np.random.Philox(20100))
    theta0 = _sample_points(family, 200, rng)
    theta = _sample_points(family, 200, rng)
    for a, b in zip(theta0, theta):
        if family.kl_derivs(float(a), float(b))[2] < 0.0:
            return Certificate(False, f"expected negative Hessian negative at theta0={a:.4g}, theta={b:.4g}")
    hyp = RetentionHypothesis(family, delta)
    pts = _sample_points(family, 60, rng).reshape(-1, 2, 2)
    from .hypothesis import boundary_substitute

    for (r1, p1), (r2, p2) in pts:
        rm, pm = 0.5 * (r1 + r2), 0.5 * (p1 + p2)
        try:
            t1 = boundary_substitute(hyp, r1, p1)
            t2 = boundary_substitute(hyp, r2, p2)
            tm = boundary_substitute(hyp, rm, pm)
        except (DomainError, RangeError):
            return Certificate(False, "boundary substitution leaves the parameter space")
        if abs(tm - 0.5 * (t1 + t2)) > 1e-10 * (1.0 + abs(tm)):
            return Certificate(False, "boundary substitution is not affine in the parameters")
    return Certificate(True, "convex divergence on a convex domain with affine boundary")


def convexity_certificate(family: FamilySpec, hyp: RetentionHypothesis | None = None) -> Certificate:
    """Check the sufficient conditions for a convex boundary problem.

    The conditions are a nonnegative expected negative Hessian of the
    log-density at sampled parameter pairs, a convex parameter space, and an
    affine boundary substitution (checked at sampled midpoints).

    Returns:
        A :class:`Certificate`; ``bool(cert)`` is the verdict and
        ``cert.reason`` explains it.
    """
    delta = 0.5 if hyp is None else float(hyp.delta)
    return _certificate(family.key, delta)


def _kl_term(family: ScalarFamily, theta0: float, weight: float):
    def term(theta):
        v, d1, d2 = family.kl_derivs(theta0, theta)
        return weight * v, weight * d1, weight * d2
    return term


def project_to_null(hyp: RetentionHypothesis, zeta0, w) -> KlProjection:
    """Project ``zeta0`` onto the null in weighted KL divergence.

    Args:
        hyp: hypothesis.
        zeta0: true parameters ordered (T, R, P).
        w: allocation weights.

    Returns:
        A :class:`KlProjection`.  When ``zeta0`` already satisfies the null it
        is returned with divergence zero.

    Raises:
        OptimizationFailure: the boundary search did not converge.
        RangeError: the boundary substitution left the range of ``h``.
    """
    fam = hyp.family
    w = _as_weights(w)
    wa = w.as_array()
    eta = contrast(hyp, *zeta0).eta
    cert = convexity_certificate(fam, hyp)
    if eta <= 0.0:
        zeta = tuple(zeta0)
        return KlProjection(zeta, 0.0, variance_sum(hyp, zeta, wa), bool(cert), "identity")
    if isinstance(fam, Normal):
        zeta = fam.kl_project(hyp.delta, zeta0, wa)
        method = "closed-form"
    elif isinstance(fam, ScalarFamily):
        terms = tuple(_kl_term(fam, float(t0), wk) for t0, wk in zip(zeta0, wa))
        problem = _boundary.BoundaryProblem(fam, hyp.delta, terms)
        if cert:
            opt = _boundary.minimize(problem, zeta0[1], zeta0[2])
        else:
            opt = _boundary.multistart(problem, zeta0[1], zeta0[2])
        zeta = (opt.theta_t, opt.theta_r, opt.theta_p)
        method = opt.method
    else:
        raise DomainError(f"no KL projection available for family {fam.name!r}")
    kl = weighted_kl(hyp, zeta0, zeta, w)
    return KlProjection(tuple(zeta), kl, variance_sum(hyp, zeta, wa), bool(cert), method)


class ClosedFormDisagreement(UserWarning):
    """The closed-form Poisson projection disagrees with the numeric minimiser."""


def _poisson_closed_form_unit(d: float, wT: float, wR: float, lT: float) -> tuple[float, float]:
    # lambda0_P == 1 and lambda0_T == lambda0_R == lT; the polynomial terms are summed with fsum
    fs = math.fsum
    lP = 1.0
    q = fs([(-1.0 + wR) * wR, d * d * (-1.0 + wT) * wT, d * (1.0 - wT + wR * (-1.0 + 2.0 * wT))])
    lin = fs([
        d * d * wT * fs([(-1.0 + wR + wT) * lP, -wR * lT]),
        wR * fs([(-1.0 + wR + wT) * lP, -wT * lT]),
        d * fs([(2.0 - 3.0 * wR + wR * wR - 3.0 * wT + 2.0 * wR * wT + wT * wT) * lP,
                (wR - wR * wR + wT - wT * wT) * lT]),
    ])
    radicand = fs([
        -4.0 * d * (-1.0 + wR + wT) * q * lP * fs([(-1.0 + wR + wT) * lP, -(wR + wT) * lT]),
        lin * lin,
    ])
    if radicand < 0.0:
        raise NegativeDiscriminant(f"radicand of the closed-form projection is {radicand:.6g}")
    s = math.sqrt(radicand)
    num_r = fs([
        d * d * (-1.0 + wT) * wT * lP,
        -d * (-1.0 + wT) * wT * (lP - lT),
        wR * wR * ((-1.0 + d) * lP + (2.0 - d) * lT),
        wR * ((-1.0 + d) * (-1.0 + wT + d * wT) * lP + (-d + wT + 2.0 * d * wT - d * d * wT) * lT),
        -s,
    ])
    den_r = 2.0 * (wR + d * (-1.0 + wT)) * (wR + d * wT)
    num_p = fs([
        wR * wR * lP,
        d * d * wT * ((-1.0 + wR + wT) * lP - wR * lT),
        wR * ((-1.0 + wT) * lP - wT * lT),
        d * ((2.0 + wR * wR - 3.0 * wT + wT * wT + wR * (-3.0 + 2.0 * wT)) * lP
             + (wR - wR * wR + wT - wT * wT) * lT),
        -s,
    ])
    den_p = 2.0 * q
    scale = max(abs(wR), abs(d * wT), 1e-300)
    if abs(den_r) < 1e-12 * scale * scale or abs(den_p) < 1e-12:
        raise NumericalError("closed-form projection is singular for these weights")
    return num_r / den_r, num_p / den_p


def poisson_projection_closed_form(delta: float, w, lam0_t: float, lam0_r: float, lam0_p: float,
                                   check: bool = True) -> tuple[float, float, float]:
    """Closed-form KL projection for Poisson endpoints with ``h(lambda) = -lambda``.

    Valid for the alternative ``lambda0_T == lambda0_R`` and ``0 < delta < 1``.
    The computation is carried out with ``lambda0_P`` scaled to 1 and the
    result is scaled back.

    Args:
        delta: retention margin.
        w: allocation weights.
        lam0_t, lam0_r, lam0_p: true means.
        check: compare against the numeric projection and warn with
            :class:`ClosedFormDisagreement` on a relative gap above 1e-6.

    Returns:
        ``(lambda_T, lambda_R, lambda_P)`` on the null boundary.

    Raises:
        DomainError: invalid means, margin or ``lambda0_T != lambda0_R``.
        NegativeDiscriminant: the radicand is negative.
    """
    w = _as_weights(w)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"closed-form projection needs 0 < delta < 1, got {delta}")
    for v in (lam0_t, lam0_r, lam0_p):
        if not (math.isfinite(v) and v > 0.0):
            raise DomainError(f"Poisson means must be positive, got {v}")
    if abs(lam0_t - lam0_r) > 1e-12 * max(lam0_t, lam0_r):
        raise DomainError("closed-form projection assumes lambda0_T == lambda0_R")
    zeta0 = (lam0_t, lam0_r, lam0_p)
    hyp = RetentionHypothesis(Poisson("negative"), delta)
    if contrast(hyp, *zeta0).eta <= 0.0:
        return zeta0
    lr, lp = _poisson_closed_form_unit(delta, w.w_T, w.w_R, lam0_t / lam0_p)
    lr, lp = lr * lam0_p, lp * lam0_p
    out = (delta * lr + (1.0 - delta) * lp, lr, lp)
    if check:
        ref = project_to_null(hyp, zeta0, w).theta_h0
        gap = max(abs(a - b) / abs(b) for a, b in zip(out, ref))
        if gap > 1e-6:
            warnings.warn(
                f"closed-form projection {out} differs from numeric {ref} "
                f"(relative gap {gap:.3g}; delta={delta}, w={tuple(w)}, lambda0={zeta0})",
                ClosedFormDisagreement, stacklevel=2)
    return out
