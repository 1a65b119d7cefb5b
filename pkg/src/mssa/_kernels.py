"""JIT-compiled direct-method loops for mass-action networks.

Networks enter as dense arrays: reactant orders ``R`` (K x d), jumps ``Z``
(K x d) and per-reaction constants ``c`` that already include the
``N**(beta+gamma)`` scale.  Every event draws one exponential and one
uniform, in that order, so the pure-Python path recorder in :mod:`ssa`
consumes the stream identically.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _propensities(x, R, c, out):
    K, d = R.shape
    total = 0.0
    for k in range(K):
        comb = 1.0
        for i in range(d):
            r = R[k, i]
            if r > 0:
                if x[i] < r:
                    comb = 0.0
                    break
                for j in range(r):
                    comb *= float(x[i] - j)
        a = c[k] * comb
        out[k] = a
        total += a
    return total


@njit(cache=True)
def _pick(a, total, u):
    target = u * total
    acc = 0.0
    last = -1
    for k in range(a.shape[0]):
        if a[k] > 0.0:
            acc += a[k]
            last = k
            if acc > target:
                return k
    return last


@njit(cache=True)
def ssa_end_state(x0, R, Z, c, t_end, rng, max_events):
    """Advance one path to ``t_end``; return (state, events, truncated)."""
    K, d = R.shape
    x = x0.copy()
    a = np.empty(K)
    t = 0.0
    comp = 0.0
    n = 0
    while True:
        a0 = _propensities(x, R, c, a)
        if a0 <= 0.0:
            break
        tau = rng.exponential() / a0
        # Kahan-compensated clock
        y = tau - comp
        s = t + y
        comp = (s - t) - y
        if s > t_end:
            break
        t = s
        k = _pick(a, a0, rng.random())
        for i in range(d):
            x[i] += Z[k, i]
        n += 1
        if n >= max_events:
            return x, n, True
    return x, n, False


@njit(cache=True)
def ssa_batch(x0, R, Z, c, t_end, rngs, max_events):
    """End states for a list of per-path generators."""
    m = len(rngs)
    d = x0.shape[0]
    out = np.empty((m, d), dtype=np.int64)
    events = 0
    truncated = False
    for j in range(m):
        x, n, tr = ssa_end_state(x0, R, Z, c, t_end, rngs[j], max_events)
        out[j, :] = x
        events += n
        truncated = truncated or tr
    return out, events, truncated


@njit(cache=True)
def cfd_pair(x0, R, Z, c_lo, c_hi, t_end, rng, max_events):
    """Coupled (theta, theta+h) paths on 3K channels.

    Channel k carries the common rate min(a_lo, a_hi) and moves both copies;
    the two residual channels carry the excess of either copy alone.
    Returns (x_lo, x_hi, events, truncated).
    """
    K, d = R.shape
    xl = x0.copy()
    xh = x0.copy()
    al = np.empty(K)
    ah = np.empty(K)
    w = np.empty(3 * K)
    t = 0.0
    comp = 0.0
    n = 0
    while True:
        _propensities(xl, R, c_lo, al)
        _propensities(xh, R, c_hi, ah)
        total = 0.0
        for k in range(K):
            m = min(al[k], ah[k])
            w[k] = m
            w[K + k] = al[k] - m
            w[2 * K + k] = ah[k] - m
            total += al[k] if al[k] > ah[k] else ah[k]
        if total <= 0.0:
            break
        tau = rng.exponential() / total
        y = tau - comp
        s = t + y
        comp = (s - t) - y
        if s > t_end:
            break
        t = s
        ch = _pick(w, total, rng.random())
        k = ch % K
        if ch < K:
            for i in range(d):
                xl[i] += Z[k, i]
                xh[i] += Z[k, i]
        elif ch < 2 * K:
            for i in range(d):
                xl[i] += Z[k, i]
        else:
            for i in range(d):
                xh[i] += Z[k, i]
        n += 1
        if n >= max_events:
            return xl, xh, n, True
    return xl, xh, n, False


@njit(cache=True)
def cfd_batch(x0, R, Z, c_lo, c_hi, t_end, rngs, max_events):
    m = len(rngs)
    d = x0.shape[0]
    lo = np.empty((m, d), dtype=np.int64)
    hi = np.empty((m, d), dtype=np.int64)
    events = 0
    truncated = False
    for j in range(m):
        xl, xh, n, tr = cfd_pair(x0, R, Z, c_lo, c_hi, t_end, rngs[j], max_events)
        lo[j, :] = xl
        hi[j, :] = xh
        events += n
        truncated = truncated or tr
    return lo, hi, events, truncated
