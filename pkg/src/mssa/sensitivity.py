"""Coupled finite-difference sensitivities on full and reduced models."""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import NoSecondScale, TruncationError
from .network import ReactionNetwork
from .reduction import (
    RateTable,
    ReducedNetwork,
    ReductionChain,
    lift_output,
    reduce_network,
    solve_stationary,
)
from .rng import make_generator
from .ssa import DEFAULT_EVENT_CAP, RunningStats, kernel_arrays

log = logging.getLogger(__name__)

BLOCK = 1000
METHODS = ("cfd-full", "cfd-reduced", "steady-analytic", "steady-simulated")


@dataclass
class SensitivityEstimate:
    value: float
    halfwidth95: float
    h: float
    method: str
    samples: int
    wall_seconds: float
    seed: int
    converged: bool = True
    variance: float = 0.0
    events: int = 0
    N: float | None = None
    t: float | None = None
    theta: float | None = None
    truncated: bool = False

    @property
    def standard_error(self) -> float:
        return self.halfwidth95 / 1.96

    def contains(self, target, allowance=0.0) -> bool:
        return abs(self.value - target) <= self.halfwidth95 + allowance


def _default_gamma(network):
    try:
        return reduce_network(network).gamma2
    except NoSecondScale:
        return -max(network.betas)


def _adaptive(draw_block, target, max_samples, block):
    """Draw blocks until the 95% half-width is within ``target * |mean|``."""
    stats = RunningStats()
    events = 0
    truncated = False
    start = 0
    while start < max_samples:
        n = min(block, max_samples - start)
        diffs, ev, tr = draw_block(start, n)
        stats = stats.merge(RunningStats.of(diffs))
        events += ev
        truncated |= tr
        start += n
        if stats.count >= 2 and stats.halfwidth95 <= target * abs(stats.mean):
            return stats, events, truncated, True
    return stats, events, truncated, False


def cfd_estimate(
    model,
    f,
    theta: float,
    h: float,
    t: float,
    *,
    gamma=None,
    N=None,
    target_rel_halfwidth: float = 0.05,
    seed: int = 0,
    max_samples: int = 10**6,
    block: int = BLOCK,
    central: bool = False,
    max_events: int = DEFAULT_EVENT_CAP,
) -> SensitivityEstimate:
    """Coupled finite-difference estimate of ``d/dtheta E f(X(t))``.

    ``model`` is a :class:`ReactionNetwork` (simulated at time-scale ``gamma``
    with scale ``N``; defaults are the second time-scale and ``N0``) or a
    reduced model / reduction chain, in which case ``f`` is averaged through
    every stage and evaluated at both parameter values.

    Pair ``i`` uses stream ``(seed, i)``; stopping is checked after each
    block, so results do not depend on anything but the arguments.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    lo_theta, hi_theta, width = (theta - h, theta + h, 2 * h) if central else (theta, theta + h, h)
    if lo_theta <= 0:
        raise ValueError("perturbed parameter must stay positive")
    t0 = time.perf_counter()
    if isinstance(model, ReactionNetwork):
        gamma = _default_gamma(model) if gamma is None else Fraction(gamma)
        N = model.N0 if N is None else N
        x0, R, Z, c_lo = kernel_arrays(model, lo_theta, gamma, N)
        c_hi = model.rate_constants(hi_theta, gamma, N)

        def draw(start, n):
            gens = [make_generator(seed, i) for i in range(start, start + n)]
            lo, hi, ev, tr = _kernels.cfd_batch(x0, R, Z, c_lo, c_hi, float(t), gens, max_events)
            return (f.evaluate_many(hi) - f.evaluate_many(lo)) / width, int(ev), bool(tr)

        method = "cfd-full"
    else:
        chain = model if isinstance(model, ReductionChain) else ReductionChain([model])
        red = chain.final
        fl = lift_output(chain, f)
        table = RateTable(red)
        rcache: dict = {}
        fcache: dict = {}

        def rates(u, th):
            key = (u, th)
            a = rcache.get(key)
            if a is None:
                a = rcache[key] = tuple(float(v) for v in table(u, th))
            return a

        def fval(u, th):
            if f.is_constant():
                # averaging a constant is exact; skip the roundoff
                return f(())
            key = (u, th)
            if key not in fcache:
                fcache[key] = fl.value_and_derivative(u, th)[0]
            return fcache[key]

        def draw(start, n):
            out = np.empty(n)
            ev = 0
            for i in range(n):
                gen = make_generator(seed, start + i)
                ul, uh, k = _reduced_pair(red, rates, lo_theta, hi_theta, t, gen)
                out[i] = (fval(uh, hi_theta) - fval(ul, lo_theta)) / width
                ev += k
            return out, ev, False

        method = "cfd-reduced"
        gamma = red.gamma2
        N = None
    stats, events, truncated, ok = _adaptive(draw, target_rel_halfwidth, max_samples, block)
    if not ok:
        log.warning("%s: half-width target %.3g not met after %d samples", method,
                    target_rel_halfwidth, stats.count)
    return SensitivityEstimate(
        value=stats.mean,
        halfwidth95=stats.halfwidth95,
        h=h,
        method=method,
        samples=stats.count,
        wall_seconds=time.perf_counter() - t0,
        seed=seed,
        converged=ok,
        variance=stats.variance,
        events=events,
        N=N,
        t=t,
        theta=theta,
        truncated=truncated,
    )


def _reduced_pair(red: ReducedNetwork, rates, th_lo, th_hi, t_end, gen):
    """Coupled direct-method pair on the averaged model.

    Channel layout per natural reaction: common rate min(a_lo, a_hi), then the
    two residuals.
    """
    natural = red.natural
    K = len(natural)
    ul = uh = tuple(red.initial)
    t = 0.0
    n = 0
    while True:
        al = rates(ul, th_lo)
        ah = rates(uh, th_hi)
        w = []
        total = 0.0
        for k in range(K):
            m = min(al[k], ah[k])
            w.append(m)
            total += max(al[k], ah[k])
        w.extend(al[k] - w[k] for k in range(K))
        w.extend(ah[k] - w[k] for k in range(K))
        if total <= 0.0:
            break
        t += gen.exponential() / total
        if t > t_end:
            break
        target = gen.random() * total
        acc = 0.0
        ch = -1
        for i, wi in enumerate(w):
            if wi > 0.0:
                acc += wi
                ch = i
                if acc > target:
                    break
        k = ch % K
        j = natural[k]
        if ch < K:
            same = ul == uh
            ul = red.step(ul, j, th_lo)
            uh = ul if same else red.step(uh, j, th_hi)
        elif ch < 2 * K:
            ul = red.step(ul, j, th_lo)
        else:
            uh = red.step(uh, j, th_hi)
        n += 1
    return ul, uh, n


# ----------------------------------------------------------------------


@dataclass
class ComparisonRow:
    label: str
    estimate: SensitivityEstimate
    gap: float | None = None
    gap_se: float | None = None


def full_vs_reduced_report(network: ReactionNetwork, f, theta, h, t, N_list, target=0.05,
                           seed=0, max_samples=10**6, reduced=None):
    """Full-model CFD at each ``N`` (time-scale gamma2) next to one reduced estimate."""
    red = reduced if reduced is not None else reduce_network(network)
    ref = cfd_estimate(red, f, theta, h, t, target_rel_halfwidth=target, seed=seed,
                       max_samples=max_samples)
    rows = [ComparisonRow("reduced", ref)]
    for N in N_list:
        est = cfd_estimate(network, f, theta, h, t, gamma=red.gamma2, N=N,
                           target_rel_halfwidth=target, seed=seed, max_samples=max_samples)
        gap = abs(est.value - ref.value)
        rows.append(ComparisonRow(f"full N={N}", est, gap,
                                  math.hypot(est.standard_error, ref.standard_error)))
    return rows


# ----------------------------------------------------------------------
# steady state


def truncated_state_space(network: ReactionNetwork, theta, max_copy: int):
    """States reachable from x0 with every coordinate <= max_copy."""
    start = tuple(network.x0)
    if max(start, default=0) > max_copy:
        raise TruncationError("initial state exceeds the truncation bound")
    seen = {start}
    queue = deque([start])
    Z = network.jumps
    while queue:
        x = queue.popleft()
        for k in range(network.n_reactions):
            if network.rate(k, x, theta)[0] > 0:
                y = tuple(int(a) for a in np.asarray(x) + Z[k])
                if max(y) <= max_copy and y not in seen:
                    seen.add(y)
                    queue.append(y)
    return sorted(seen)


def steady_state_sensitivity(network: ReactionNetwork, f, theta, mode="analytic", *,
                             t_long=None, h=1e-2, target=0.05, seed=0, max_copy=40,
                             max_samples=10**6, boundary_tol=1e-8) -> SensitivityEstimate:
    """``d/dtheta sum_x f(x) pi_theta(x)`` for an ergodic single-scale network.

    ``analytic`` solves the stationary equations and their derivative on the
    space truncated at ``max_copy`` molecules per species, refusing results
    whose boundary states carry more than ``boundary_tol`` mass.
    ``simulated`` runs the coupled estimator at ``t_long`` with unit scales.
    """
    t0 = time.perf_counter()
    if mode == "simulated":
        if t_long is None:
            raise ValueError("simulated mode needs t_long")
        est = cfd_estimate(network, f, theta, h, t_long, gamma=0, N=1,
                           target_rel_halfwidth=target, seed=seed, max_samples=max_samples)
        return replace(est, method="steady-simulated")
    if mode != "analytic":
        raise ValueError(f"unknown mode {mode!r}")
    states = truncated_state_space(network, theta, max_copy)
    index = {s: i for i, s in enumerate(states)}
    m = len(states)
    Q = np.zeros((m, m))
    dQ = np.zeros((m, m))
    boundary = np.zeros(m, dtype=bool)
    Z = network.jumps
    for i, x in enumerate(states):
        for k in range(network.n_reactions):
            a, da = network.rate(k, x, theta)
            if a <= 0:
                continue
            j = index.get(tuple(int(c) for c in np.asarray(x) + Z[k]))
            if j is None:
                boundary[i] = True
                continue
            if j != i:
                Q[i, j] += a
                dQ[i, j] += da
    Q[np.diag_indices(m)] = -Q.sum(axis=1)
    dQ[np.diag_indices(m)] = -dQ.sum(axis=1)
    sd = solve_stationary(Q, dQ)
    mass = float(sd.pi[boundary].sum())
    if mass > boundary_tol:
        raise TruncationError(f"boundary mass {mass:.3g} exceeds {boundary_tol:g}; raise max_copy")
    fv = f.evaluate_many(np.array(states))
    value = float((fv - fv[0]) @ sd.dpi_dtheta)
    return SensitivityEstimate(value, 0.0, 0.0, "steady-analytic", 0,
                               time.perf_counter() - t0, seed, theta=theta)
