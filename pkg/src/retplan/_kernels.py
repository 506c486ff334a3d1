"""Compiled inner loops for exact and Monte-Carlo power.

Only the two families with affine boundary substitution are covered: binary
(family code 0) and Poisson (family code 1), each with an efficacy map
``h(theta) = sign * theta``.  The statistic mirrors
:func:`retplan.ret_test.run_test` with the epsilon-clip policy; the test
suite checks the two against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

# Try numba for the compiled path; fall back to plain Python if unavailable
try:
    import numba
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    prange = range

    def njit(func=None, **kwargs):
        """No-op decorator when numba is unavailable."""
        if func is not None:
            return func
        return lambda f: f

BINARY, POISSON = 0, 1
EPS = 1e-9
WORKERS_ENV = "RETPLAN_WORKERS"


def set_workers() -> int:
    """Apply the worker count from ``RETPLAN_WORKERS``; default all available."""
    if not HAS_NUMBA:
        return 1
    avail = numba.config.NUMBA_NUM_THREADS
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        k = int(raw) if raw else avail
    except ValueError:
        k = avail
    k = max(1, min(k, avail))
    numba.set_num_threads(k)
    return k


@njit(cache=True)
def _ll(fam, x, n, u):
    # log-likelihood up to a constant, its derivative and minus its second derivative
    if fam == BINARY:
        y = n - x
        v = 0.0
        if x > 0.0:
            v += x * math.log(u)
        if y > 0.0:
            v += y * math.log1p(-u)
        q = 1.0 - u
        return v, x / u - y / q, x / (u * u) + y / (q * q)
    v = -n * u
    if x > 0.0:
        v += x * math.log(u)
    return v, x / u - n, x / (u * u)


@njit(cache=True)
def _obj(fam, d, xT, nT, xR, nR, xP, nP, r, p):
    e = 1.0 - d
    t = d * r + e * p
    vT, aT, bT = _ll(fam, xT, nT, t)
    vR, aR, bR = _ll(fam, xR, nR, r)
    vP, aP, bP = _ll(fam, xP, nP, p)
    return -(vT + vR + vP), -(d * aT + aR), -(e * aT + aP), d * d * bT + bR, d * e * bT, e * e * bT + bP


@njit(cache=True)
def _rmle(fam, d, xT, nT, xR, nR, xP, nP, r, p, lo, hi):
    f, g1, g2, h11, h12, h22 = _obj(fam, d, xT, nT, xR, nR, xP, nP, r, p)
    for _ in range(200):
        fr = (r <= lo and g1 > 0.0) or (r >= hi and g1 < 0.0)
        fp = (p <= lo and g2 > 0.0) or (p >= hi and g2 < 0.0)
        G1 = 0.0 if fr else g1
        G2 = 0.0 if fp else g2
        if max(abs(G1), abs(G2)) < 1e-10:
            break
        if fr and fp:
            break
        if fr:
            d1 = 0.0
            d2 = -g2 / h22
        elif fp:
            d2 = 0.0
            d1 = -g1 / h11
        else:
            det = h11 * h22 - h12 * h12
            if det > 1e-12 * h11 * h22:
                d1 = -(h22 * g1 - h12 * g2) / det
                d2 = -(h11 * g2 - h12 * g1) / det
            else:
                d1 = -g1 / h11
                d2 = -g2 / h22
        s = 1.0
        while True:
            rn = min(max(r + s * d1, lo), hi)
            pn = min(max(p + s * d2, lo), hi)
            fn, a1, a2, b11, b12, b22 = _obj(fam, d, xT, nT, xR, nR, xP, nP, rn, pn)
            if fn <= f + 1e-13 * abs(f) or s < 1e-12:
                break
            s *= 0.5
        step = abs(rn - r) + abs(pn - p)
        r, p, f, g1, g2, h11, h12, h22 = rn, pn, fn, a1, a2, b11, b12, b22
        if step < 1e-12:
            break
    return r, p


@njit(cache=True)
def _var(fam, u):
    if fam == BINARY:
        return u * (1.0 - u)
    return u


@njit(cache=True)
def tstat(fam, sign, d, xT, nT, xR, nR, xP, nP, restricted):
    """Test statistic for one outcome triple; all arguments are floats except the codes."""
    lo = EPS
    hi = 1.0 - EPS if fam == BINARY else np.inf
    mT, mR, mP = xT / nT, xR / nR, xP / nP
    eta = sign * (mT - d * mR + (d - 1.0) * mP)
    cT = min(max(mT, lo), hi)
    cR = min(max(mR, lo), hi)
    cP = min(max(mP, lo), hi)
    e2 = (1.0 - d) * (1.0 - d)
    if restricted and eta > 0.0:
        r, p = _rmle(fam, d, xT, nT, xR, nR, xP, nP, cR, cP, lo, hi)
        t = d * r + (1.0 - d) * p
        v = _var(fam, t) / nT + d * d * _var(fam, r) / nR + e2 * _var(fam, p) / nP
    else:
        v = _var(fam, cT) / nT + d * d * _var(fam, cR) / nR + e2 * _var(fam, cP) / nP
    return eta / math.sqrt(v)


@njit(cache=True)
def _row(fam, sign, d, xR, nT, nR, nP, fT, oT, fP, oP, z, restricted):
    mass = 0.0
    hits = 0
    for j in range(fP.shape[0]):
        for i in range(fT.shape[0]):
            if tstat(fam, sign, d, float(i + oT), nT, xR, nR, float(j + oP), nP, restricted) > z:
                mass += fP[j] * fT[i]
                hits += 1
    return mass, hits


@njit(parallel=True, cache=True)
def exact_rejection(fam, sign, d, nT, nR, nP, fT, oT, fR, oR, fP, oP, z, restricted):
    """Probability mass and count of rejecting triples over the given supports.

    ``fK`` holds the pmf of group K's sufficient statistic on
    ``oK, oK + 1, ...``.  Per-row results land in arrays and are summed in
    order, so the result does not depend on the thread count.
    """
    m = fR.shape[0]
    acc = np.zeros(m)
    cnt = np.zeros(m, dtype=np.int64)
    for k in prange(m):
        s, c = _row(fam, sign, d, float(k + oR), nT, nR, nP, fT, oT, fP, oP, z, restricted)
        acc[k] = s * fR[k]
        cnt[k] = c
    return acc.sum(), cnt.sum()


@njit(parallel=True, cache=True)
def batch_tstat(fam, sign, d, xT, xR, xP, nT, nR, nP, restricted):
    """Statistics for arrays of outcome triples."""
    out = np.empty(xT.shape[0])
    for k in prange(xT.shape[0]):
        out[k] = tstat(fam, sign, d, xT[k], nT, xR[k], nR, xP[k], nP, restricted)
    return out
