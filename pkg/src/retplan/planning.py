"""Allocation and sample-size planning.

With allocation weights ``w`` the contrast estimator has asymptotic variance

    sigma0^2 = sigma2_T / w_T + delta^2 sigma2_R / w_R + (1 - delta)^2 sigma2_P / w_P,

minimised by ``w`` proportional to ``(sigma_T, delta sigma_R, |1 - delta| sigma_P)``.
Total sample sizes follow from the normal approximation of the test
statistic; in restricted mode the null variance is the variance at the
weighted KL projection of the alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .errors import DegenerateAllocation, DomainError, HypothesisMismatch, RetError
from .families import ScalarFamily, efficacy_variance
from .hypothesis import RetentionHypothesis, contrast
from .kl_projection import Weights, project_to_null
from .ret_test import check_alpha, check_mode

#: ``1 + sqrt(5)/2``: below this variance ratio ``1:delta:1-delta`` beats 2:2:1.
THRESHOLD_221 = 1.0 + math.sqrt(5.0) / 2.0
#: ``1 + sqrt(3)``: below this variance ratio ``1:delta:1-delta`` beats 1:1:1.
THRESHOLD_BALANCED = 1.0 + math.sqrt(3.0)


@dataclass(frozen=True)
class Alternative:
    """True parameters assumed for planning; must lie strictly in the alternative."""

    hyp: RetentionHypothesis
    theta_t: object
    theta_r: object
    theta_p: object

    def __post_init__(self):
        eta = contrast(self.hyp, self.theta_t, self.theta_r, self.theta_p).eta
        if not eta > 0.0:
            raise DomainError(f"planning alternative must have eta0 > 0, got eta0 = {eta:.6g}")

    @property
    def zeta(self) -> tuple:
        return (self.theta_t, self.theta_r, self.theta_p)

    @property
    def eta0(self) -> float:
        return contrast(self.hyp, *self.zeta).eta

    @property
    def sigma2(self) -> np.ndarray:
        """Per-group variances ``sigma2_{0,k}`` of ``h(theta_hat_k)``."""
        fam = self.hyp.family
        if isinstance(fam, ScalarFamily):
            return np.array([fam.efficacy_variance_scalar(t) for t in self.zeta])
        return np.array([efficacy_variance(fam, t) for t in self.zeta])


@dataclass(frozen=True)
class PlanReport:
    """Result of a sample-size calculation.

    Attributes:
        eta0: contrast at the alternative.
        sigma0: asymptotic standard deviation under the alternative.
        sigma_rml: limit of the restricted standard deviation estimate;
            equals ``sigma0`` in unrestricted mode.
        weights: allocation used.
        n_real: unrounded total sample size.
        n: ``ceil(n_real)``, the required total.
        n_per_group: ``floor(w_k * n)`` per group (at least 1).
        n_total: sum of ``n_per_group``.
        variance_mode: "restricted" or "unrestricted".
        power_target: aspired power.
        alpha: significance level.
        theta_h0: KL projection of the alternative (restricted mode only).
        steps: planning steps carried out, in order.
    """

    eta0: float
    sigma0: float
    sigma_rml: float
    weights: Weights
    n_real: float
    n: int
    n_per_group: tuple
    n_total: int
    variance_mode: str
    power_target: float
    alpha: float
    theta_h0: Optional[tuple] = None
    steps: tuple = field(default=(), compare=False)

    @property
    def ratio(self) -> float:
        """``sigma_rml / sigma0``."""
        return self.sigma_rml / self.sigma0

    def as_dict(self) -> dict:
        return {
            "eta0": self.eta0,
            "sigma0": self.sigma0,
            "sigma_rml": self.sigma_rml,
            "sigma_rml_over_sigma0": self.ratio,
            "weights": [float(x) for x in self.weights],
            "n_real": self.n_real,
            "n": self.n,
            "n_per_group": list(self.n_per_group),
            "n_total": self.n_total,
            "variance_mode": self.variance_mode,
            "power_target": self.power_target,
            "alpha": self.alpha,
            "theta_h0": None if self.theta_h0 is None else [np.asarray(t, float).tolist() for t in self.theta_h0],
            "steps": list(self.steps),
        }


class RuleOfThumb(NamedTuple):
    """Comparison of ``1:delta:1-delta`` with 2:2:1 and balanced allocation.

    ``g_221`` and ``g_balanced`` are the variance excess of the competing
    allocation over ``1:delta:1-delta`` in units of ``sigma2_{0,T}``.
    """

    ratio: float
    beats_221: bool
    beats_balanced: bool
    g_221: float
    g_balanced: float


def _check_alt(hyp: RetentionHypothesis, alt: Alternative):
    if alt.hyp != hyp:
        raise HypothesisMismatch("alternative was built for a different hypothesis")


def optimal_allocation(hyp: RetentionHypothesis, alt: Alternative) -> Weights:
    """Allocation minimising ``sigma0^2``.

    Raises:
        DegenerateAllocation: for ``delta`` 0 or 1, where one group would get
            no patients.
    """
    _check_alt(hyp, alt)
    d = hyp.delta
    if d == 0.0:
        raise DegenerateAllocation("delta = 0 gives the reference group zero weight",
                                   "use a two-arm superiority comparison of T against P")
    if d == 1.0:
        raise DegenerateAllocation("delta = 1 gives the placebo group zero weight",
                                   "use a two-arm superiority comparison of T against R")
    s = np.sqrt(alt.sigma2)
    return Weights.from_ratio(s[0], d * s[1], abs(1.0 - d) * s[2])


def sigma0_squared(hyp: RetentionHypothesis, alt: Alternative, w) -> float:
    _check_alt(hyp, alt)
    w = w if isinstance(w, Weights) else Weights(*w)
    return float(np.sum(hyp.variance_coefficients * alt.sigma2 / w.as_array()))


def g_221(delta, r):
    """``sigma2_{2:2:1} - sigma2_{1:delta:1-delta}`` for ``sigma2_T = sigma2_R = 1``, ``sigma2_P = r``."""
    return (2.5 + 5.0 * r) * delta**2 + (-2.0 - 8.0 * r) * delta + (0.5 + 3.0 * r)


def g_balanced(delta, r):
    """``sigma2_{1:1:1} - sigma2_{1:delta:1-delta}`` in the same units as :func:`g_221`."""
    return (3.0 + 3.0 * r) * delta**2 - (2.0 + 4.0 * r) * delta + (1.0 + r)


def argmin_g_221(r):
    """Minimiser in ``delta`` of :func:`g_221` and its minimum value."""
    return (2.0 + 8.0 * r) / (5.0 + 10.0 * r), (1.0 + 8.0 * r - 4.0 * r * r) / (10.0 + 20.0 * r)


def argmin_g_balanced(r):
    return (2.0 + 4.0 * r) / (6.0 + 6.0 * r), -(r * r - 2.0 * r - 2.0) / (3.0 + 3.0 * r)


def rule_of_thumb_check(hyp: RetentionHypothesis, alt: Alternative) -> RuleOfThumb:
    """Decide whether ``1:delta:1-delta`` beats 2:2:1 and balanced allocation.

    Raises:
        HypothesisMismatch: if ``theta0_T != theta0_R`` or delta is outside [0, 1].
    """
    _check_alt(hyp, alt)
    d = hyp.delta
    if not 0.0 <= d <= 1.0:
        raise HypothesisMismatch(f"rule of thumb needs 0 <= delta <= 1, got {d}")
    if not np.allclose(np.asarray(alt.theta_t, float), np.asarray(alt.theta_r, float), rtol=1e-12, atol=0.0):
        raise HypothesisMismatch("rule of thumb needs theta0_T == theta0_R")
    s2 = alt.sigma2
    r = float(s2[2] / s2[0])
    return RuleOfThumb(r, r < THRESHOLD_221, r < THRESHOLD_BALANCED, float(g_221(d, r)), float(g_balanced(d, r)))


def _z(p: float) -> float:
    return float(norm.isf(p))


def _round_up(x: float) -> int:
    # guard against 996.0000000000001 style noise before taking the ceiling
    return int(math.ceil(x * (1.0 - 1e-13)))


def group_sizes(w: Weights, n: int) -> tuple:
    """``floor(w_k * n)`` for each group, at least 1."""
    return tuple(max(1, int(math.floor(wk * n + 1e-9))) for wk in w)


def _attributed(step: int, name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except RetError as exc:
        exc.gssp_step = step
        msg = exc.args[0] if exc.args else ""
        exc.args = (f"planning step {step} ({name}): {msg}",) + exc.args[1:]
        raise


def gssp(hyp: RetentionHypothesis, alt: Alternative, w=None, alpha: float = 0.05,
         power: float = 0.8, mode: str = "restricted") -> PlanReport:
    """Six-step sample-size planning.

    1. contrast ``eta0``; 2. ``sigma0^2``; 3. weighted KL divergence;
    4. its minimiser over the null; 5. ``sigma_RML^2``; 6. total sample size.
    Steps 2 to 4 apply only in restricted mode.

    Args:
        hyp: hypothesis.
        alt: alternative with ``eta0 > 0``.
        w: allocation; None uses :func:`optimal_allocation`.
        alpha: significance level.
        power: aspired power ``1 - beta``.
        mode: "restricted" or "unrestricted".

    Raises:
        RetError: any failure of a sub-step; the message names the step and
            the exception carries it as ``gssp_step``.
    """
    alpha = check_alpha(alpha)
    check_alpha(power, "power")
    check_mode(mode)
    _check_alt(hyp, alt)
    steps = []
    if w is None:
        w = _attributed(0, "allocation", optimal_allocation, hyp, alt)
        steps.append("optimal allocation")
    elif not isinstance(w, Weights):
        w = Weights(*w)
    eta0 = _attributed(1, "contrast", lambda: alt.eta0)
    steps.append("eta0")
    s0 = math.sqrt(_attributed(2, "sigma0", sigma0_squared, hyp, alt, w))
    steps.append("sigma0")
    za, zb = _z(alpha), _z(1.0 - power)
    theta_h0 = None
    if mode == "restricted":
        proj = _attributed(3, "KL projection", project_to_null, hyp, alt.zeta, w)
        steps += ["weighted KL", "KL minimiser"]
        theta_h0 = proj.theta_h0
        srml = proj.sigma_rml
        steps.append("sigma_RML")
        n_real = ((za * srml + zb * s0) / eta0) ** 2
    else:
        srml = s0
        n_real = (za + zb) ** 2 * (s0 / eta0) ** 2
    steps.append("sample size")
    n = _round_up(n_real)
    per = group_sizes(w, n)
    return PlanReport(eta0, s0, srml, w, float(n_real), n, per, int(sum(per)), mode,
                      float(power), alpha, theta_h0, tuple(steps))


def sample_size(hyp: RetentionHypothesis, alt: Alternative, w=None, alpha: float = 0.05,
                power: float = 0.8, mode: str = "restricted") -> PlanReport:
    """Required total sample size.

    Unrestricted: ``n = (z_{1-alpha} + z_{1-beta})^2 (sigma0 / eta0)^2``.
    Restricted: ``n = ((z_{1-alpha} sigma_RML + z_{1-beta} sigma0) / eta0)^2``.
    The total is rounded up; groups get ``floor(w_k n)``.
    """
    return gssp(hyp, alt, w, alpha, power, mode)


def power_approx(hyp: RetentionHypothesis, alt: Alternative, w, n: float, alpha: float = 0.05,
                 mode: str = "restricted") -> float:
    """Normal approximation ``1 - Phi(z_{1-alpha} sigma_RML / sigma0 - sqrt(n) eta0 / sigma0)``.

    In unrestricted mode ``sigma_RML`` is replaced by ``sigma0``.
    """
    alpha = check_alpha(alpha)
    check_mode(mode)
    if not n >= 3:
        raise DomainError(f"total sample size must be at least 3, got {n}")
    w = w if isinstance(w, Weights) else Weights(*w)
    s0 = math.sqrt(sigma0_squared(hyp, alt, w))
    ratio = project_to_null(hyp, alt.zeta, w).sigma_rml / s0 if mode == "restricted" else 1.0
    return float(norm.sf(_z(alpha) * ratio - math.sqrt(n) * alt.eta0 / s0))
