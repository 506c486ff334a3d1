"""Parametric endpoint families.

A family bundles everything the test and the planning code need to know
about one endpoint distribution: the log-density, the closed-form MLE from
sufficient statistics, Fisher information, the Kullback-Leibler divergence
and the efficacy map ``h`` on which the retention-of-effect contrast is
formed.

Scalar families (``param_dim == 1``) carry first and second derivatives of
their log-likelihood and of the KL divergence, which the boundary optimizer
in :mod:`retplan._boundary` consumes.  The homogeneous-variance normal family
has a shared nuisance parameter and supplies closed-form restricted fits
instead.

Families are looked up by name through :func:`get_family`; new families plug
in with :func:`register_family`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, gammaln, logit, xlogy

from .errors import DegenerateData, DomainError, InconsistentStat, SingularInformation

DEFAULT_CLIP = 1e-9


@dataclass(frozen=True)
class GroupStat:
    """Sufficient statistics of one treatment group.

    Attributes:
        n: number of patients.
        total: sum of the observations (successes for binary, event count for Poisson).
        total_sq: sum of squared observations; only needed by the normal family.
    """

    n: int
    total: float
    total_sq: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InconsistentStat(f"group size must be a positive integer, got {self.n}")

    @classmethod
    def from_observations(cls, x) -> GroupStat:
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            raise InconsistentStat("empty group")
        return cls(int(x.size), float(x.sum()), float(np.dot(x, x)))

    @property
    def mean(self) -> float:
        return self.total / self.n


@dataclass(frozen=True)
class Efficacy:
    """Strictly monotone efficacy map with inverse and two derivatives."""

    name: str
    h: Callable
    inv: Callable
    d1: Callable
    d2: Callable
    affine: bool


EFFICACIES = {
    "identity": Efficacy("identity", lambda u: u, lambda v: v,
                         lambda u: np.ones_like(np.asarray(u, float)),
                         lambda u: np.zeros_like(np.asarray(u, float)), True),
    "negative": Efficacy("negative", lambda u: -u, lambda v: -v,
                         lambda u: -np.ones_like(np.asarray(u, float)),
                         lambda u: np.zeros_like(np.asarray(u, float)), True),
    "log": Efficacy("log", np.log, np.exp, lambda u: 1.0 / u, lambda u: -1.0 / u**2, False),
    "logit": Efficacy("logit", logit, expit,
                      lambda u: 1.0 / (u * (1.0 - u)),
                      lambda u: (2.0 * u - 1.0) / (u * (1.0 - u)) ** 2, False),
}


class FamilySpec:
    """Base class of an endpoint family.

    Subclasses set ``name``, ``param_dim``, ``efficacy`` and implement the
    distribution-specific methods.  Parameters of scalar families are plain
    floats; multi-parameter families use 1-D arrays.
    """

    name: str = ""
    param_dim: int = 1
    efficacy: Efficacy
    #: Closed-form sufficient-statistic columns understood by the CSV reader.
    stat_fields: tuple[str, ...] = ("total",)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(efficacy={self.efficacy.name!r})"

    @property
    def key(self) -> str:
        return f"{self.name}/{self.efficacy.name}"

    def __eq__(self, other):
        return isinstance(other, FamilySpec) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    # -- efficacy ---------------------------------------------------------
    def h(self, theta):
        return self.efficacy.h(self._efficacy_arg(theta))

    def h_inv(self, value):
        return self.efficacy.inv(value)

    def efficacy_gradient(self, theta) -> np.ndarray:
        """Gradient of ``h`` with respect to the full parameter vector."""
        return np.atleast_1d(np.asarray(self.efficacy.d1(self._efficacy_arg(theta)), float))

    def efficacy_range(self) -> tuple[float, float]:
        raise NotImplementedError

    def _efficacy_arg(self, theta):
        return theta

    # -- distribution -----------------------------------------------------
    def in_domain(self, theta) -> bool:
        raise NotImplementedError

    def check_domain(self, theta, what: str = "parameter"):
        if not self.in_domain(theta):
            raise DomainError(f"{what} {theta!r} outside the {self.name} parameter space")
        return theta

    def log_density(self, theta, x):
        raise NotImplementedError

    def fisher_information(self, theta) -> np.ndarray:
        raise NotImplementedError

    def kl(self, theta0, theta) -> float:
        raise NotImplementedError

    def validate_stat(self, stat: GroupStat) -> GroupStat:
        return stat

    def sufficient_stat(self, observations) -> GroupStat:
        return self.validate_stat(GroupStat.from_observations(observations))

    def mle(self, stat: GroupStat, clip: float | None = None):
        raise NotImplementedError

    def draw_stats(self, theta, n: int, rng: np.random.Generator, size: int) -> list[GroupStat]:
        raise NotImplementedError


class ScalarFamily(FamilySpec):
    """One-parameter family on an interval ``(lower, upper)``."""

    lower: float = -math.inf
    upper: float = math.inf

    def in_domain(self, theta) -> bool:
        try:
            t = float(theta)
        except (TypeError, ValueError):
            return False
        return self.lower < t < self.upper

    def in_closure(self, theta) -> bool:
        t = float(theta)
        return self.lower <= t <= self.upper

    def clip(self, theta, eps: float = DEFAULT_CLIP):
        lo = self.lower + eps if math.isfinite(self.lower) else -math.inf
        hi = self.upper - eps if math.isfinite(self.upper) else math.inf
        return float(min(max(theta, lo), hi))

    def efficacy_range(self) -> tuple[float, float]:
        with np.errstate(divide="ignore"):
            a, b = float(self.efficacy.h(self.lower)), float(self.efficacy.h(self.upper))
        return (a, b) if a <= b else (b, a)

    def efficacy_variance_scalar(self, theta) -> float:
        """``h'(theta)**2 / I(theta)`` without matrix overhead."""
        return float(self.efficacy.d1(theta) ** 2 / self.info(theta))

    def info(self, theta) -> float:
        raise NotImplementedError

    def fisher_information(self, theta) -> np.ndarray:
        return np.array([[self.info(theta)]])

    def kl_derivs(self, theta0, theta) -> tuple[float, float, float]:
        """KL divergence and its first two derivatives in ``theta``."""
        raise NotImplementedError

    def loglik(self, theta, stat: GroupStat) -> float:
        """Group log-likelihood from sufficient statistics, up to a constant free of ``theta``."""
        return self.loglik_derivs(theta, stat)[0]

    def loglik_derivs(self, theta, stat: GroupStat) -> tuple[float, float, float]:
        raise NotImplementedError

    def mle(self, stat: GroupStat, clip: float | None = None):
        stat = self.validate_stat(stat)
        est = stat.mean
        if not self.in_domain(est):
            if clip is None:
                raise DegenerateData(
                    f"{self.name} MLE {est:g} lies on the boundary of the parameter space",
                    estimate=est,
                )
            est = self.clip(est, clip)
        return float(est)


class Binary(ScalarFamily):
    name = "binary"
    lower, upper = 0.0, 1.0

    def __init__(self, efficacy: str = "identity"):
        if efficacy not in ("identity", "logit"):
            raise DomainError(f"binary family supports identity or logit efficacy, not {efficacy!r}")
        self.efficacy = EFFICACIES[efficacy]

    def info(self, theta) -> float:
        if theta <= 0.0 or theta >= 1.0:
            raise SingularInformation(f"binary Fisher information singular at {theta}")
        return 1.0 / (theta * (1.0 - theta))

    def log_density(self, theta, x):
        return xlogy(x, theta) + xlogy(1.0 - np.asarray(x, float), 1.0 - theta)

    def kl(self, theta0, theta) -> float:
        if not (self.in_closure(theta0) and self.in_domain(theta)):
            raise DomainError(f"binary KL undefined at ({theta0}, {theta})")
        return float(xlogy(theta0, theta0 / theta) + xlogy(1.0 - theta0, (1.0 - theta0) / (1.0 - theta)))

    def kl_derivs(self, theta0, theta):
        q = 1.0 - theta
        return (self.kl(theta0, theta),
                -theta0 / theta + (1.0 - theta0) / q,
                theta0 / theta**2 + (1.0 - theta0) / q**2)

    def validate_stat(self, stat):
        x = stat.total
        if x != int(x) or not 0 <= x <= stat.n:
            raise InconsistentStat(f"binary success count {x} inconsistent with n={stat.n}")
        if stat.total_sq is not None and stat.total_sq != x:
            raise InconsistentStat("binary observations must be 0 or 1")
        return stat

    def loglik_derivs(self, theta, stat):
        x, y = stat.total, stat.n - stat.total
        q = 1.0 - theta
        return (float(xlogy(x, theta) + xlogy(y, q)), x / theta - y / q, -x / theta**2 - y / q**2)

    def draw_stats(self, theta, n, rng, size):
        return [GroupStat(n, float(v)) for v in rng.binomial(n, theta, size=size)]


class Poisson(ScalarFamily):
    name = "poisson"
    lower, upper = 0.0, math.inf

    def __init__(self, efficacy: str = "negative"):
        if efficacy not in ("negative", "identity"):
            raise DomainError(f"poisson family supports negative or identity efficacy, not {efficacy!r}")
        self.efficacy = EFFICACIES[efficacy]

    def info(self, theta) -> float:
        if theta <= 0.0:
            raise SingularInformation(f"poisson Fisher information singular at {theta}")
        return 1.0 / theta

    def log_density(self, theta, x):
        x = np.asarray(x, float)
        return xlogy(x, theta) - theta - gammaln(x + 1.0)

    def kl(self, theta0, theta) -> float:
        if not (self.in_closure(theta0) and self.in_domain(theta)) or math.isinf(theta0):
            raise DomainError(f"poisson KL undefined at ({theta0}, {theta})")
        return float(theta - theta0 + xlogy(theta0, theta0) - xlogy(theta0, theta))

    def kl_derivs(self, theta0, theta):
        return self.kl(theta0, theta), 1.0 - theta0 / theta, theta0 / theta**2

    def validate_stat(self, stat):
        if stat.total < 0 or stat.total != int(stat.total):
            raise InconsistentStat(f"poisson event total must be a nonnegative integer, got {stat.total}")
        return stat

    def loglik_derivs(self, theta, stat):
        s, n = stat.total, stat.n
        return float(xlogy(s, theta) - n * theta), s / theta - n, -s / theta**2

    def draw_stats(self, theta, n, rng, size):
        return [GroupStat(n, float(v)) for v in rng.poisson(n * theta, size=size)]


class Exponential(ScalarFamily):
    """Exponential endpoint parametrised by its mean."""

    name = "exponential"
    lower, upper = 0.0, math.inf

    def __init__(self, efficacy: str = "log"):
        if efficacy != "log":
            raise DomainError(f"exponential family supports log efficacy only, not {efficacy!r}")
        self.efficacy = EFFICACIES[efficacy]

    def info(self, theta) -> float:
        if theta <= 0.0:
            raise SingularInformation(f"exponential Fisher information singular at {theta}")
        return 1.0 / theta**2

    def log_density(self, theta, x):
        return -np.log(theta) - np.asarray(x, float) / theta

    def kl(self, theta0, theta) -> float:
        if not (self.in_domain(theta0) and self.in_domain(theta)):
            raise DomainError(f"exponential KL undefined at ({theta0}, {theta})")
        r = theta0 / theta
        return float(r - 1.0 - math.log(r))

    def kl_derivs(self, theta0, theta):
        return (self.kl(theta0, theta), 1.0 / theta - theta0 / theta**2,
                -1.0 / theta**2 + 2.0 * theta0 / theta**3)

    def validate_stat(self, stat):
        if stat.total <= 0:
            raise InconsistentStat("exponential observations must be positive")
        return stat

    def loglik_derivs(self, theta, stat):
        s, n = stat.total, stat.n
        return -n * math.log(theta) - s / theta, -n / theta + s / theta**2, n / theta**2 - 2.0 * s / theta**3

    def draw_stats(self, theta, n, rng, size):
        return [GroupStat(n, float(v)) for v in rng.gamma(n, theta, size=size)]


class Normal(FamilySpec):
    """Normal endpoint with group means and one common variance.

    The parameter of a group is the array ``(mu, tau2)``; ``tau2`` is shared
    by all three groups and estimated by pooling.  Restricted fits and KL
    projections are closed-form (weighted least squares on the means), so
    the generic boundary optimizer is never used for this family.
    """

    name = "normal"
    param_dim = 2
    stat_fields = ("total", "total_sq")

    def __init__(self, efficacy: str = "identity"):
        if efficacy != "identity":
            raise DomainError(f"normal family supports identity efficacy only, not {efficacy!r}")
        self.efficacy = EFFICACIES[efficacy]

    def _efficacy_arg(self, theta):
        return np.asarray(theta, float)[0]

    def h_inv(self, value):
        # only the mean is determined by the efficacy value; tau2 is carried separately
        return value

    def efficacy_gradient(self, theta):
        return np.array([1.0, 0.0])

    def efficacy_range(self):
        return (-math.inf, math.inf)

    def in_domain(self, theta) -> bool:
        t = np.asarray(theta, float)
        return t.shape == (2,) and bool(np.all(np.isfinite(t))) and t[1] > 0.0

    def log_density(self, theta, x):
        mu, tau2 = theta
        return -0.5 * np.log(2.0 * np.pi * tau2) - (np.asarray(x, float) - mu) ** 2 / (2.0 * tau2)

    def fisher_information(self, theta):
        tau2 = float(theta[1])
        if tau2 <= 0.0:
            raise SingularInformation("normal Fisher information singular at tau2 <= 0")
        return np.diag([1.0 / tau2, 1.0 / (2.0 * tau2**2)])

    def kl(self, theta0, theta) -> float:
        self.check_domain(theta0)
        self.check_domain(theta)
        (m0, v0), (m, v) = theta0, theta
        r = v0 / v
        return float(0.5 * (r - 1.0 - math.log(r)) + (m0 - m) ** 2 / (2.0 * v))

    def validate_stat(self, stat):
        if stat.total_sq is None:
            raise InconsistentStat("normal family needs the sum of squares")
        if stat.total_sq < stat.total**2 / stat.n * (1.0 - 1e-12):
            raise InconsistentStat("sum of squares smaller than (sum)^2/n")
        return stat

    @staticmethod
    def within_ss(stat: GroupStat) -> float:
        return max(stat.total_sq - stat.total**2 / stat.n, 0.0)

    def mle(self, stat, clip=None):
        stat = self.validate_stat(stat)
        tau2 = self.within_ss(stat) / stat.n
        if tau2 <= 0.0:
            if clip is None:
                raise DegenerateData("normal group has zero within-group variance", estimate=0.0)
            tau2 = clip
        return np.array([stat.mean, tau2])

    def joint_mle(self, stats, clip=None):
        """Group means with the pooled variance MLE."""
        stats = [self.validate_stat(s) for s in stats]
        n = sum(s.n for s in stats)
        tau2 = sum(self.within_ss(s) for s in stats) / n
        if tau2 <= 0.0:
            if clip is None:
                raise DegenerateData("pooled variance is zero", estimate=0.0)
            tau2 = clip
        return tuple(np.array([s.mean, tau2]) for s in stats)

    @staticmethod
    def _project_means(means, weights, coef):
        means, weights, coef = (np.asarray(a, float) for a in (means, weights, coef))
        excess = coef @ means
        return means - excess * (coef / weights) / np.sum(coef**2 / weights)

    def restricted_joint_mle(self, delta, stats):
        """Joint MLE on the boundary of the null with a common variance."""
        stats = [self.validate_stat(s) for s in stats]
        coef = np.array([1.0, -delta, delta - 1.0])
        n_k = np.array([s.n for s in stats], float)
        xbar = np.array([s.mean for s in stats])
        mu = self._project_means(xbar, n_k, coef)
        ss = sum(self.within_ss(s) for s in stats) + float(np.sum(n_k * (xbar - mu) ** 2))
        tau2 = ss / n_k.sum()
        if tau2 <= 0.0:
            raise DegenerateData("restricted pooled variance is zero", estimate=0.0)
        return tuple(np.array([m, tau2]) for m in mu)

    def kl_project(self, delta, zeta0, weights):
        """Minimiser of the weighted KL divergence over the null boundary."""
        tau0 = {float(t[1]) for t in zeta0}
        if len(tau0) != 1:
            raise DomainError("normal family requires a common variance in all groups")
        coef = np.array([1.0, -delta, delta - 1.0])
        mu0 = np.array([t[0] for t in zeta0], float)
        w = np.asarray(weights, float)
        mu = self._project_means(mu0, w, coef)
        tau2 = tau0.pop() + float(np.sum(w * (mu0 - mu) ** 2))
        return tuple(np.array([m, tau2]) for m in mu)

    def draw_stats(self, theta, n, rng, size):
        mu, tau2 = theta
        sums = rng.normal(n * mu, math.sqrt(n * tau2), size=size)
        within = tau2 * rng.chisquare(n - 1, size=size) if n > 1 else np.zeros(size)
        return [GroupStat(n, float(s), float(w + s * s / n)) for s, w in zip(sums, within)]


_REGISTRY: dict[str, tuple[Callable[..., FamilySpec], str]] = {}


def register_family(name: str, factory: Callable[..., FamilySpec], default_efficacy: str) -> None:
    """Make a family available to :func:`get_family` and the CLI."""
    _REGISTRY[name] = (factory, default_efficacy)


def get_family(name: str, efficacy: str | None = None) -> FamilySpec:
    try:
        factory, default = _REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; known: {', '.join(sorted(_REGISTRY))}") from None
    return factory(efficacy or default)


def family_names() -> list[str]:
    return sorted(_REGISTRY)


register_family("binary", Binary, "identity")
register_family("poisson", Poisson, "negative")
register_family("exponential", Exponential, "log")
register_family("normal", Normal, "identity")


def group_mle(family: FamilySpec, data: GroupStat, clip: float | None = None):
    """Unrestricted MLE of one group.

    Raises:
        DegenerateData: if the estimate lies on the boundary of the parameter
            space and ``clip`` is None.  With ``clip`` set, the estimate is
            moved ``clip`` inside the domain instead.
    """
    return family.mle(data, clip=clip)


def efficacy_variance(family: FamilySpec, theta) -> float:
    """Asymptotic variance of ``sqrt(n) * h(theta_hat)``, the delta-method sandwich."""
    family.check_domain(theta)
    info = np.atleast_2d(family.fisher_information(theta))
    grad = family.efficacy_gradient(theta)
    try:
        inv = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(f"Fisher information not invertible at {theta!r}") from exc
    return float(grad @ inv @ grad)


def kl_divergence(family: FamilySpec, theta0, theta) -> float:
    return family.kl(theta0, theta)
