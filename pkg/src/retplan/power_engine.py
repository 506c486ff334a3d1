"""Exact and Monte-Carlo power of the retention-of-effect test.

Exact power enumerates every outcome triple of the groups' sufficient
statistics and adds up the probability of those where the test rejects.
Outcomes with a boundary MLE (no successes, all successes, zero events) are
tested under the epsilon-clip policy and their total probability is reported
separately as ``degenerate_mass``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom, norm, poisson

from . import _kernels
from .errors import BudgetExceeded, DegenerateData, DomainError
from .families import DEFAULT_CLIP, Binary, Poisson
from .hypothesis import RetentionHypothesis
from .ret_test import GroupData, check_alpha, check_mode, run_test

DEFAULT_BUDGET = 500_000_000
MIN_REPS = 10_000
#: Upper-tail probability dropped from each Poisson support.
POISSON_TAIL = 1e-12


@dataclass(frozen=True)
class PowerQuery:
    """One power computation.

    Attributes:
        hyp: hypothesis under test.
        zeta: data-generating parameters ordered (T, R, P).
        sizes: group sizes ``(n_T, n_R, n_P)``.
        alpha: significance level.
        mode: variance mode of the test.
        method: "exact" or "monte_carlo".
        reps: Monte-Carlo replications, at least 10**4.
        seed: Monte-Carlo seed.
        budget: cap on the number of triples an exact enumeration may visit.
    """

    hyp: RetentionHypothesis
    zeta: tuple
    sizes: tuple
    alpha: float = 0.05
    mode: str = "restricted"
    method: str = "exact"
    reps: int = 100_000
    seed: int = 0
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        check_alpha(self.alpha)
        check_mode(self.mode)
        if len(self.sizes) != 3 or any(int(n) != n or n < 1 for n in self.sizes):
            raise DomainError(f"group sizes must be three positive integers, got {self.sizes}")
        if len(self.zeta) != 3:
            raise DomainError("zeta needs parameters for T, R and P")
        for label, th in zip("TRP", self.zeta):
            self.hyp.family.check_domain(th, f"theta_{label}")
        if self.method not in ("exact", "monte_carlo"):
            raise DomainError(f"method must be 'exact' or 'monte_carlo', got {self.method!r}")
        if self.method == "monte_carlo" and self.reps < MIN_REPS:
            raise DomainError(f"Monte-Carlo needs at least {MIN_REPS} replications, got {self.reps}")
        if self.budget < 1:
            raise DomainError("budget must be positive")

    @property
    def ns(self) -> tuple:
        return tuple(int(n) for n in self.sizes)


@dataclass(frozen=True)
class PowerEstimate:
    """Rejection probability with its uncertainty.

    Attributes:
        power: rejection probability.
        standard_error: binomial standard error; 0 for exact enumeration.
        rejections: rejecting triples (exact) or replications (Monte Carlo).
        total: triples visited or replications run.
        degenerate_mass: probability (estimated for Monte Carlo) of outcomes
            with at least one boundary MLE.
        truncated_mass: probability outside the enumerated support; bounds
            the enumeration error.
        method: "exact" or "monte_carlo".
    """

    power: float
    standard_error: float
    rejections: int
    total: int
    degenerate_mass: float
    truncated_mass: float
    method: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _kernel_spec(hyp: RetentionHypothesis):
    """(family code, efficacy sign) for the compiled path, or None."""
    fam = hyp.family
    if not 0.0 <= hyp.delta <= 1.0:
        return None
    if isinstance(fam, Binary) and fam.efficacy.name == "identity":
        return _kernels.BINARY, 1.0
    if isinstance(fam, Poisson):
        return _kernels.POISSON, (-1.0 if fam.efficacy.name == "negative" else 1.0)
    return None


def _supports(query: PowerQuery):
    fam = query.hyp.family
    out = []
    for n, th in zip(query.ns, query.zeta):
        if isinstance(fam, Binary):
            x = np.arange(n + 1)
            out.append((binom.pmf(x, n, th), 0, float(binom.pmf(0, n, th) + binom.pmf(n, n, th)), 0.0))
        else:
            mu = n * th
            hi = int(poisson.isf(POISSON_TAIL, mu)) + 1
            x = np.arange(0, hi + 1)
            pmf = poisson.pmf(x, mu)
            out.append((pmf, 0, float(pmf[0]), float(max(0.0, 1.0 - pmf.sum()))))
    return out


def enumeration_cost(query: PowerQuery) -> int:
    """Number of outcome triples an exact enumeration visits."""
    return int(np.prod([len(s[0]) for s in _supports(query)], dtype=object))


def _exact(query: PowerQuery, expect) -> PowerEstimate:
    spec = _kernel_spec(query.hyp)
    if spec is None or not isinstance(query.hyp.family, expect):
        raise DomainError(
            f"exact enumeration supports binary/identity and Poisson families with 0 <= delta <= 1, "
            f"not {query.hyp.family.key} with delta={query.hyp.delta}")
    sup = _supports(query)
    cost = int(np.prod([len(s[0]) for s in sup], dtype=object))
    if cost > query.budget:
        raise BudgetExceeded(cost, query.budget)
    _kernels.set_workers()
    (fT, oT, dT, tT), (fR, oR, dR, tR), (fP, oP, dP, tP) = sup
    nT, nR, nP = (float(n) for n in query.ns)
    z = float(norm.isf(query.alpha))
    mass, hits = _kernels.exact_rejection(spec[0], spec[1], float(query.hyp.delta), nT, nR, nP,
                                          fT, oT, fR, oR, fP, oP, z, query.mode == "restricted")
    degenerate = 1.0 - (1.0 - dT) * (1.0 - dR) * (1.0 - dP)
    truncated = 1.0 - (1.0 - tT) * (1.0 - tR) * (1.0 - tP)
    return PowerEstimate(float(min(max(mass, 0.0), 1.0)), 0.0, int(hits), cost, float(degenerate),
                         float(truncated), "exact")


def exact_power_binary(query: PowerQuery) -> PowerEstimate:
    """Exact rejection probability for binary endpoints by full enumeration.

    Raises:
        BudgetExceeded: when ``(n_T+1)(n_R+1)(n_P+1)`` exceeds the budget.
        DomainError: for other families or ``delta`` outside [0, 1].
    """
    return _exact(query, Binary)


def exact_power_poisson(query: PowerQuery) -> PowerEstimate:
    """Exact rejection probability for Poisson endpoints.

    Each group's event total is enumerated up to its ``1 - 1e-12`` quantile;
    the dropped probability is reported as ``truncated_mass``.
    """
    return _exact(query, Poisson)


def exact_power(query: PowerQuery) -> PowerEstimate:
    return _exact(query, (Binary, Poisson))


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def mc_power(query: PowerQuery) -> PowerEstimate:
    """Monte-Carlo rejection rate with a counter-based seeded generator.

    Binary/identity and Poisson use the compiled statistic; other families
    run :func:`retplan.ret_test.run_test` per replication.
    """
    if query.reps < MIN_REPS:
        raise DomainError(f"Monte-Carlo needs at least {MIN_REPS} replications, got {query.reps}")
    rng = _generator(query.seed)
    hyp, reps = query.hyp, int(query.reps)
    fam = hyp.family
    ns = query.ns
    spec = _kernel_spec(hyp)
    if spec is not None:
        if isinstance(fam, Binary):
            draws = [rng.binomial(n, th, size=reps).astype(float) for n, th in zip(ns, query.zeta)]
            degen = np.zeros(reps, bool)
            for x, n in zip(draws, ns):
                degen |= (x == 0) | (x == n)
        else:
            draws = [rng.poisson(n * th, size=reps).astype(float) for n, th in zip(ns, query.zeta)]
            degen = np.zeros(reps, bool)
            for x in draws:
                degen |= x == 0
        _kernels.set_workers()
        t = _kernels.batch_tstat(spec[0], spec[1], float(hyp.delta), draws[0], draws[1], draws[2],
                                 float(ns[0]), float(ns[1]), float(ns[2]), query.mode == "restricted")
        hits = int(np.count_nonzero(t > norm.isf(query.alpha)))
        deg = float(degen.mean())
    else:
        stats = [fam.draw_stats(th, n, rng, reps) for n, th in zip(ns, query.zeta)]
        hits, ndeg = 0, 0
        for sT, sR, sP in zip(*stats):
            data = GroupData(sT, sR, sP)
            try:
                rep = run_test(hyp, data, query.alpha, query.mode)
            except DegenerateData:
                ndeg += 1
                rep = run_test(hyp, data, query.alpha, query.mode, clip=DEFAULT_CLIP)
            hits += rep.reject
        deg = ndeg / reps
    p = hits / reps
    return PowerEstimate(p, math.sqrt(p * (1.0 - p) / reps), hits, reps, deg, 0.0, "monte_carlo")


def compute_power(query: PowerQuery) -> PowerEstimate:
    """Dispatch on ``query.method``."""
    if query.method == "exact":
        return exact_power(query)
    return mc_power(query)
