"""Exact simulation of the full multiscale process and Monte Carlo summaries."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .network import ReactionNetwork
from .rng import RngStream, make_generator

log = logging.getLogger(__name__)

DEFAULT_EVENT_CAP = 10**9
Z95 = 1.96


@dataclass
class Trajectory:
    jump_times: np.ndarray
    states: np.ndarray  # row 0 is the initial state at time 0
    end_time: float
    reaction_log: np.ndarray
    truncated: bool = False

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def n_events(self) -> int:
        return len(self.reaction_log)

    def state_at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.states[i]

    def holding_times(self) -> np.ndarray:
        edges = np.concatenate(([0.0], self.jump_times, [self.end_time]))
        return np.diff(edges)


@dataclass
class RunningStats:
    """Mergeable (count, mean, M2) accumulator."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "RunningStats":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mu = float(values.mean())
        return cls(int(values.size), mu, float(((values - mu) ** 2).sum()))

    def merge(self, other: "RunningStats") -> "RunningStats":
        n = self.count + other.count
        if n == 0:
            return RunningStats()
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def halfwidth95(self) -> float:
        if self.count < 2:
            return math.inf
        return Z95 * math.sqrt(self.variance / self.count)


@dataclass
class MonteCarloEstimate:
    mean: float
    halfwidth95: float
    samples: int
    variance: float
    seed: int
    wall_seconds: float
    truncated: bool = False
    events: int = 0

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.samples)

    @classmethod
    def from_stats(cls, stats: RunningStats, seed, wall, truncated=False, events=0):
        return cls(stats.mean, stats.halfwidth95, stats.count, stats.variance, seed, wall,
                   truncated, events)


@dataclass
class OccupationMeasure:
    weights: dict  # full state tuple -> residence time
    horizon: float
    projection: np.ndarray | None = None

    def total(self) -> float:
        return math.fsum(self.weights.values())

    def by_fiber(self) -> dict:
        """Group residence times by conserved coordinate ``M x``."""
        M = self.projection
        out: dict = {}
        for x, w in self.weights.items():
            v = tuple(int(a) for a in (M @ np.asarray(x))) if M is not None else ()
            out.setdefault(v, {})
            out[v][x] = out[v].get(x, 0.0) + w
        return out

    def fractions(self) -> dict:
        return {x: w / self.horizon for x, w in self.weights.items()}


# ----------------------------------------------------------------------


def kernel_arrays(network: ReactionNetwork, theta, gamma, N):
    R = np.ascontiguousarray(network.reactant_matrix)
    Z = np.ascontiguousarray(network.jumps)
    c = network.rate_constants(theta, gamma, N)
    x0 = np.asarray(network.x0, dtype=np.int64)
    return x0, R, Z, c


def _current_rates(x, R, c):
    a = np.empty(len(c))
    _kernels._propensities(x, R, c, a)
    return a


def simulate_path(
    network: ReactionNetwork,
    gamma,
    N,
    theta: float,
    t_end: float,
    rng: RngStream,
    max_events: int = DEFAULT_EVENT_CAP,
    x0=None,
) -> Trajectory:
    """Direct-method sample path of the process with intensities N^(beta+gamma) lam_k.

    The event loop matches :func:`mssa._kernels.ssa_end_state` draw for draw,
    so both produce the same final state for the same stream.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if theta <= 0:
        raise ValueError("theta must be positive")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    start, R, Z, c = kernel_arrays(network, theta, Fraction(gamma), N)
    x = start.copy() if x0 is None else np.asarray(x0, dtype=np.int64).copy()
    times, states, fired = [], [x.copy()], []
    t = 0.0
    comp = 0.0
    a = np.empty(len(c))
    truncated = False
    while True:
        a0 = _kernels._propensities(x, R, c, a)
        if a0 <= 0.0:
            break
        tau = gen.exponential() / a0
        y = tau - comp
        s = t + y
        comp = (s - t) - y
        if s > t_end:
            break
        t = s
        k = _kernels._pick(a, a0, gen.random())
        x = x + Z[k]
        times.append(t)
        states.append(x.copy())
        fired.append(k)
        if len(fired) >= max_events:
            truncated = True
            log.warning("event cap %d reached at t=%g; trajectory truncated", max_events, t)
            break
    return Trajectory(
        np.asarray(times, dtype=float),
        np.asarray(states, dtype=np.int64).reshape(-1, network.d),
        float(t if truncated else t_end),
        np.asarray(fired, dtype=np.int64),
        truncated,
    )


def _generators(seed, start, stop):
    return [make_generator(seed, i) for i in range(start, stop)]


def end_states(network, gamma, N, theta, t, samples, seed, start=0,
               max_events=DEFAULT_EVENT_CAP):
    """Final states of paths with stream ids ``start .. start+samples-1``."""
    x0, R, Z, c = kernel_arrays(network, theta, Fraction(gamma), N)
    gens = _generators(seed, start, start + samples)
    return _kernels.ssa_batch(x0, R, Z, c, float(t), gens, max_events)


def estimate_expectation(
    network: ReactionNetwork,
    gamma,
    N,
    theta: float,
    f,
    t: float,
    samples: int,
    seed: int,
    max_events: int = DEFAULT_EVENT_CAP,
    block: int = 10_000,
) -> MonteCarloEstimate:
    """Sample mean of ``f(X(t))`` over streams ``0..samples-1`` with a normal 95% CI."""
    if samples < 2:
        raise ValueError("need at least two samples")
    t0 = time.perf_counter()
    stats = RunningStats()
    events = 0
    truncated = False
    for lo in range(0, samples, block):
        n = min(block, samples - lo)
        xs, ev, tr = end_states(network, gamma, N, theta, t, n, seed, lo, max_events)
        stats = stats.merge(RunningStats.of(f.evaluate_many(xs)))
        events += int(ev)
        truncated |= bool(tr)
    if truncated:
        log.warning("some paths hit the event cap; estimate flagged as truncated")
    return MonteCarloEstimate.from_stats(stats, seed, time.perf_counter() - t0, truncated, events)


def empirical_occupation(traj: Trajectory, projection=None) -> OccupationMeasure:
    """Residence time of each visited state over ``[0, end_time]``."""
    weights: dict = {}
    for x, dt in zip(traj.states, traj.holding_times()):
        key = tuple(int(v) for v in x)
        weights[key] = weights.get(key, 0.0) + float(dt)
    M = None if projection is None else np.asarray(projection)
    return OccupationMeasure(weights, traj.end_time, M)
