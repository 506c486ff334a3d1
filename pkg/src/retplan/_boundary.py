"""Minimisation over the boundary of the null hypothesis.

Both the restricted MLE and the KL projection minimise a separable objective

    F(r, p) = phi_T(g(r, p)) + phi_R(r) + phi_P(p),
    g(r, p) = h^-1(delta h(r) + (1 - delta) h(p)),

over the reference and placebo parameters of a scalar family.  Each
``phi_k`` is supplied as a callable returning value, first and second
derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from .errors import OptimizationFailure
from .families import DEFAULT_CLIP, ScalarFamily

Term = Callable[[float], tuple[float, float, float]]

GRAD_TOL = 1e-10
STEP_TOL = 1e-12
MAX_ITER = 200


@dataclass(frozen=True)
class BoundaryOptimum:
    theta_t: float
    theta_r: float
    theta_p: float
    value: float
    iterations: int
    method: str


class BoundaryProblem:
    """Objective, gradient and Hessian of ``F`` on a scalar family."""

    def __init__(self, family: ScalarFamily, delta: float, terms: tuple[Term, Term, Term],
                 eps: float = DEFAULT_CLIP):
        self.family = family
        self.delta = delta
        self.terms = terms
        self.eps = eps
        self.lo = family.lower + eps if math.isfinite(family.lower) else -math.inf
        self.hi = family.upper - eps if math.isfinite(family.upper) else math.inf

    def substitute(self, r: float, p: float) -> float:
        eff = self.family.efficacy
        d = self.delta
        u = d * eff.h(r) + (1.0 - d) * eff.h(p)
        with np.errstate(all="ignore"):
            t = float(eff.inv(u))
        return t

    def feasible(self, r: float, p: float) -> bool:
        if not (self.lo <= r <= self.hi and self.lo <= p <= self.hi):
            return False
        t = self.substitute(r, p)
        return math.isfinite(t) and self.family.in_domain(t)

    def value(self, r: float, p: float) -> float:
        if not self.feasible(r, p):
            return math.inf
        fT, fR, fP = self.terms
        return fT(self.substitute(r, p))[0] + fR(r)[0] + fP(p)[0]

    def evaluate(self, r: float, p: float):
        eff, d = self.family.efficacy, self.delta
        e = 1.0 - d
        t = self.substitute(r, p)
        fT, fR, fP = self.terms
        vT, gT, hT = fT(t)
        vR, gR, hR = fR(r)
        vP, gP, hP = fP(p)
        h1t, h2t = float(eff.d1(t)), float(eff.d2(t))
        h1r, h2r = float(eff.d1(r)), float(eff.d2(r))
        h1p, h2p = float(eff.d1(p)), float(eff.d2(p))
        inv1 = 1.0 / h1t
        inv2 = -h2t / h1t**3
        tr, tp = d * h1r * inv1, e * h1p * inv1
        trr = inv2 * (d * h1r) ** 2 + inv1 * d * h2r
        tpp = inv2 * (e * h1p) ** 2 + inv1 * e * h2p
        trp = inv2 * d * e * h1r * h1p
        grad = np.array([gT * tr + gR, gT * tp + gP])
        hess = np.array([[hT * tr * tr + gT * trr + hR, hT * tr * tp + gT * trp],
                         [hT * tr * tp + gT * trp, hT * tp * tp + gT * tpp + hP]])
        return vT + vR + vP, grad, hess

    def clip(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)


def _direction(grad: np.ndarray, hess: np.ndarray, free: np.ndarray) -> np.ndarray:
    step = np.zeros(2)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return step
    g = grad[idx]
    H = hess[np.ix_(idx, idx)]
    diag = np.abs(np.diag(H))
    try:
        np.linalg.cholesky(H)
        d = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        # indefinite or singular: diagonally scaled gradient step
        d = -g / np.where(diag > 0, diag, 1.0)
    step[idx] = d
    return step


def newton(problem: BoundaryProblem, r0: float, p0: float) -> BoundaryOptimum:
    """Damped projected Newton-Raphson.

    Converges when the projected gradient sup-norm drops below ``GRAD_TOL``
    and the Newton step is negligible relative to the iterate, or when a step
    moves less than ``STEP_TOL``.  The relative step test matters for large
    Poisson means, where a small gradient still leaves a visible error.

    Raises:
        OptimizationFailure: after ``MAX_ITER`` iterations, or when no
            feasible descent step exists.
    """
    r, p = problem.clip(r0), problem.clip(p0)
    if not problem.feasible(r, p):
        raise OptimizationFailure(f"infeasible start ({r0}, {p0})")
    f, g, H = problem.evaluate(r, p)
    for it in range(1, MAX_ITER + 1):
        x = np.array([r, p])
        at_lo = (x <= problem.lo) & (g > 0)
        at_hi = (x >= problem.hi) & (g < 0)
        free = ~(at_lo | at_hi)
        pg = np.where(free, g, 0.0)
        d = _direction(g, H, free)
        if np.max(np.abs(pg)) < GRAD_TOL and np.max(np.abs(d)) <= STEP_TOL * (1.0 + np.max(np.abs(x))):
            return BoundaryOptimum(problem.substitute(r, p), r, p, f, it - 1, "newton")
        s = 1.0
        if abs(float(pg @ d)) <= 1e-10 * max(1.0, abs(f)):
            # the decrease is below value rounding; polish with full steps judged by the gradient
            rn, pn = problem.clip(r + d[0]), problem.clip(p + d[1])
            if problem.feasible(rn, pn):
                gn = problem.evaluate(rn, pn)[1]
                gfree = np.where(free, gn, 0.0)
                if np.max(np.abs(gfree)) < np.max(np.abs(pg)):
                    r, p = rn, pn
                    f, g, H = problem.evaluate(r, p)
                    continue
            return BoundaryOptimum(problem.substitute(r, p), r, p, f, it, "newton")
        while True:
            rn, pn = problem.clip(r + s * d[0]), problem.clip(p + s * d[1])
            fn = problem.value(rn, pn)
            if fn <= f + 1e-13 * abs(f):
                break
            s *= 0.5
            if s < 1e-12:
                # no descent left at working precision: accept if the Newton decrement is negligible
                if abs(float(pg @ d)) <= 1e-12 * max(1.0, abs(f)):
                    return BoundaryOptimum(problem.substitute(r, p), r, p, f, it, "newton")
                raise OptimizationFailure(f"line search failed at ({r}, {p})")
        moved = abs(rn - r) + abs(pn - p)
        r, p = rn, pn
        f, g, H = problem.evaluate(r, p)
        if moved < STEP_TOL:
            return BoundaryOptimum(problem.substitute(r, p), r, p, f, it, "newton")
    raise OptimizationFailure(f"Newton-Raphson did not converge in {MAX_ITER} iterations")


def _interval(problem: BoundaryProblem, x: float) -> tuple[float, float]:
    lo, hi = problem.lo, problem.hi
    if not math.isfinite(lo):
        lo = x - 10.0 * (abs(x) + 1.0)
    if not math.isfinite(hi):
        hi = x + 10.0 * (abs(x) + 1.0)
    return lo, hi


def coordinate_search(problem: BoundaryProblem, r0: float, p0: float,
                      sweeps: int = 200, tol: float = 1e-12) -> BoundaryOptimum:
    """Cyclic one-dimensional bounded minimisation; slow but derivative free."""
    r, p = problem.clip(r0), problem.clip(p0)
    f = problem.value(r, p)
    for sweep in range(1, sweeps + 1):
        r_old, p_old = r, p
        lo, hi = _interval(problem, r)
        r = minimize_scalar(lambda v: problem.value(v, p), bounds=(lo, hi), method="bounded",
                            options={"xatol": tol}).x
        lo, hi = _interval(problem, p)
        p = minimize_scalar(lambda v: problem.value(r, v), bounds=(lo, hi), method="bounded",
                            options={"xatol": tol}).x
        f = problem.value(r, p)
        if abs(r - r_old) + abs(p - p_old) < 10 * tol:
            break
    if not math.isfinite(f):
        raise OptimizationFailure("coordinate search found no feasible point")
    return BoundaryOptimum(problem.substitute(r, p), r, p, f, sweep, "coordinate")


def minimize(problem: BoundaryProblem, r0: float, p0: float) -> BoundaryOptimum:
    """Newton-Raphson with coordinate-search fallback."""
    try:
        return newton(problem, r0, p0)
    except OptimizationFailure:
        rough = coordinate_search(problem, r0, p0)
        try:
            return newton(problem, rough.theta_r, rough.theta_p)
        except OptimizationFailure:
            return rough


def _to_unbounded(problem: BoundaryProblem, x: float) -> float:
    lo, hi = problem.family.lower, problem.family.upper
    if math.isfinite(lo) and math.isfinite(hi):
        z = (x - lo) / (hi - lo)
        return math.log(z / (1.0 - z))
    if math.isfinite(lo):
        return math.log(x - lo)
    return x


def _from_unbounded(problem: BoundaryProblem, y: float) -> float:
    lo, hi = problem.family.lower, problem.family.upper
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + (hi - lo) / (1.0 + math.exp(-y))
    if math.isfinite(lo):
        return lo + math.exp(y)
    return y


def multistart(problem: BoundaryProblem, r0: float, p0: float, starts: int = 8,
               spread: float = 1.5) -> BoundaryOptimum:
    """Best of :func:`minimize` runs from a fixed low-discrepancy grid around ``(r0, p0)``."""
    centre = np.array([_to_unbounded(problem, problem.clip(r0)), _to_unbounded(problem, problem.clip(p0))])
    grid = qmc.Sobol(d=2, scramble=False).random(starts)
    best = None
    for u in np.vstack([[0.5, 0.5], grid[1:]]):
        y = centre + spread * (2.0 * u - 1.0)
        r, p = _from_unbounded(problem, y[0]), _from_unbounded(problem, y[1])
        if not problem.feasible(problem.clip(r), problem.clip(p)):
            continue
        try:
            cand = minimize(problem, r, p)
        except OptimizationFailure:
            continue
        if best is None or cand.value < best.value:
            best = cand
    if best is None:
        raise OptimizationFailure("no start point converged")
    return best
