"""Second time-scale reduction: conserved coordinates, fibers and averaging.

The conserved-coordinate map is an integer matrix ``M`` whose rows span the
nonnegative vectors orthogonal to every fast jump, so ``u = M x`` is left
unchanged by fast firings.  For each ``u`` the fast reactions move the state
inside a finite fiber; its stationary law averages the remaining propensities
and the output function.

Works on any "layer": a :class:`~mssa.network.ReactionNetwork` or a
:class:`ReducedNetwork` (which again exposes ``jumps``, ``betas``,
``rate``, ``is_state`` and ``initial``), which is how iterated reduction is
built.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce as _fold

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateScale,
    FiberNotFinite,
    NoRepresentative,
    NoSecondScale,
    NotErgodic,
    SingularSolve,
)
from .network import first_timescale
from .ssa import Trajectory

log = logging.getLogger(__name__)

FIBER_CAP = 10**6
DENSE_LIMIT = 10**4
RESIDUAL_TOL = 1e-12


# ----------------------------------------------------------------------
# extreme rays of {v >= 0 : A v = 0}


def _normalize(v):
    g = _fold(math.gcd, (abs(int(a)) for a in v), 0)
    return tuple(int(a) // g for a in v) if g > 1 else tuple(int(a) for a in v)


def _support(v):
    return frozenset(i for i, a in enumerate(v) if a)


def extreme_rays(A) -> list[tuple[int, ...]]:
    """Extreme rays of the pointed cone ``{v >= 0 : A v = 0}`` for integer ``A``.

    Double description: start from the orthant's unit vectors and intersect
    with one hyperplane at a time, combining each positive/negative pair.
    Extreme rays of such a cone are exactly its elements of minimal support,
    which is the redundancy filter applied after every step.
    """
    A = np.asarray(A, dtype=object)
    d = A.shape[1] if A.ndim == 2 else len(A)
    rays = [tuple(1 if i == j else 0 for i in range(d)) for j in range(d)]
    for a in (A if A.ndim == 2 else [A]):
        a = [int(x) for x in a]
        zero, pos, neg = [], [], []
        for r in rays:
            s = sum(ai * ri for ai, ri in zip(a, r))
            (zero if s == 0 else pos if s > 0 else neg).append((r, s))
        cand = [r for r, _ in zero]
        for p, sp_ in pos:
            for n, sn in neg:
                comb = tuple(sp_ * ni - sn * pi for pi, ni in zip(p, n))
                cand.append(_normalize(comb))
        uniq = {}
        for r in cand:
            if any(r):
                uniq.setdefault(_support(r), _normalize(r))
        supports = list(uniq)
        rays = [uniq[s] for s in supports if not any(o < s for o in supports)]
    return sorted(rays, reverse=True)


def _rank(rows) -> int:
    mat = [[Fraction(int(x)) for x in r] for r in rows]
    rank = 0
    ncols = len(mat[0]) if mat else 0
    for c in range(ncols):
        piv = next((i for i in range(rank, len(mat)) if mat[i][c] != 0), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        for i in range(len(mat)):
            if i != rank and mat[i][c] != 0:
                fac = mat[i][c] / mat[rank][c]
                mat[i] = [x - fac * y for x, y in zip(mat[i], mat[rank])]
        rank += 1
    return rank


@dataclass(frozen=True)
class ConservedBasis:
    rays: tuple[tuple[int, ...], ...]
    M: np.ndarray
    fast: frozenset  # indices of the fast (first-scale natural) reactions

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def project(self, x) -> tuple[int, ...]:
        return tuple(int(a) for a in self.M @ np.asarray(x, dtype=np.int64))


def conserved_basis(jumps, fast) -> ConservedBasis:
    jumps = np.asarray(jumps, dtype=np.int64)
    d = jumps.shape[1]
    A = jumps[sorted(fast)] if fast else np.zeros((0, d), dtype=np.int64)
    rays = extreme_rays(A) if len(A) else [tuple(1 if i == j else 0 for i in range(d)) for j in range(d)]
    rows = []
    for r in rays:
        if _rank(rows + [r]) > len(rows):
            rows.append(r)
    M = np.array(rows, dtype=np.int64).reshape(len(rows), d)
    return ConservedBasis(tuple(rays), M, frozenset(fast))


def second_timescale(layer):
    """Return ``(gamma2, Gamma2, basis)`` for a network or reduced layer."""
    gamma1, fast = first_timescale(layer)
    basis = conserved_basis(layer.jumps, fast)
    if not basis.rays:
        raise NoSecondScale("no nonzero nonnegative vector is conserved by the fast reactions")
    R = np.array(basis.rays, dtype=np.int64)
    moving = [k for k in range(layer.n_reactions) if np.any(R @ layer.jumps[k] != 0)]
    if not moving:
        raise NoSecondScale("no reaction changes the conserved coordinates")
    betas = layer.betas
    gamma2 = -max(betas[k] for k in moving)
    Gamma2 = frozenset(k for k, b in enumerate(betas) if b == -gamma2)
    if Gamma2 & fast:
        raise DegenerateScale("second-scale reactions overlap the fast set")
    assert gamma2 > gamma1
    return gamma2, Gamma2, basis


# ----------------------------------------------------------------------
# fibers


@dataclass
class FiberSpace:
    v: tuple[int, ...]
    states: np.ndarray  # (m, d) lexicographically sorted
    transitions: list  # (i, j, k)
    index: dict = field(repr=False, default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.states)

    def position(self, x) -> int:
        return self.index[tuple(int(a) for a in x)]


def find_representative(layer, M, v, fixed=None):
    """Some ``x`` with ``layer.is_state(x)`` and ``M x = v`` (depth-first box search).

    Coordinates not covered by any conserved row are pinned to zero.
    """
    M = np.asarray(M, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    d = M.shape[1]
    if np.any(v < 0):
        raise NoRepresentative(f"negative conserved coordinate {tuple(v)}")
    bounds = []
    for i in range(d):
        col = M[:, i]
        if np.any(col < 0):
            raise NoRepresentative("conserved map has negative entries")
        pos = col > 0
        bounds.append(int(min(v[pos] // col[pos])) if pos.any() else 0)
    x = np.zeros(d, dtype=np.int64)

    def rec(i, rem):
        if i == d:
            if not np.any(rem) and layer.is_state(tuple(int(a) for a in x)):
                return True
            return False
        col = M[:, i]
        hi = bounds[i]
        if col.any():
            pos = col > 0
            hi = min(hi, int(min(rem[pos] // col[pos])))
        for val in range(hi, -1, -1):
            x[i] = val
            if rec(i + 1, rem - val * col):
                return True
        x[i] = 0
        return False

    if not rec(0, v.copy()):
        raise NoRepresentative(f"no state maps to conserved coordinate {tuple(int(a) for a in v)}")
    return tuple(int(a) for a in x)


def enumerate_fiber(layer, basis: ConservedBasis, v, theta, representative=None,
                    cap: int = FIBER_CAP) -> FiberSpace:
    """Closure of a representative under forward and reverse fast reactions."""
    v = tuple(int(a) for a in v)
    M = basis.M
    if representative is None:
        representative = find_representative(layer, M, v)
    rep = tuple(int(a) for a in representative)
    if basis.project(rep) != v:
        raise NoRepresentative(f"representative {rep} does not map to {v}")
    fast = sorted(basis.fast)
    jumps = layer.jumps
    seen = {rep}
    queue = deque([rep])
    while queue:
        x = queue.popleft()
        xa = np.asarray(x, dtype=np.int64)
        for k in fast:
            if layer.rate(k, x, theta)[0] > 0:
                y = tuple(int(a) for a in xa + jumps[k])
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
            y = tuple(int(a) for a in xa - jumps[k])
            if y not in seen and min(y) >= 0 and layer.is_state(y) and layer.rate(k, y, theta)[0] > 0:
                seen.add(y)
                queue.append(y)
        if len(seen) > cap:
            raise FiberNotFinite(f"fiber of {v} exceeds {cap} states")
    states = sorted(seen)
    index = {s: i for i, s in enumerate(states)}
    transitions = []
    for i, x in enumerate(states):
        xa = np.asarray(x, dtype=np.int64)
        for k in fast:
            if layer.rate(k, x, theta)[0] > 0:
                j = index.get(tuple(int(a) for a in xa + jumps[k]))
                if j is not None and j != i:
                    transitions.append((i, j, k))
    m = len(states)
    if m > 1:
        rows = [i for i, _, _ in transitions]
        cols = [j for _, j, _ in transitions]
        g = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
        ncomp, _ = connected_components(g, directed=True, connection="strong")
        if ncomp != 1:
            raise NotErgodic(f"fast chain on fiber {v} has {ncomp} communicating classes")
    return FiberSpace(v, np.array(states, dtype=np.int64).reshape(m, -1), transitions, index)


def fiber_generator(fiber: FiberSpace, layer, theta, scale=1.0):
    """Dense rate matrix ``Q`` of the fast chain and its theta-derivative."""
    m = fiber.size
    Q = np.zeros((m, m))
    dQ = np.zeros((m, m))
    for i, j, k in fiber.transitions:
        a, da = layer.rate(k, tuple(fiber.states[i]), theta)
        Q[i, j] += a
        dQ[i, j] += da
    Q[np.diag_indices(m)] = -Q.sum(axis=1)
    dQ[np.diag_indices(m)] = -dQ.sum(axis=1)
    return scale * Q, scale * dQ


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    dpi_dtheta: np.ndarray
    residual: float = 0.0


def solve_stationary(Q, dQ=None) -> StationaryDistribution:
    """Solve ``pi Q = 0, sum(pi) = 1`` and ``dpi Q = -pi dQ, sum(dpi) = 0``.

    One balance row is replaced by the normalization row; the same LU factors
    serve both right-hand sides.
    """
    Q = np.asarray(Q, dtype=float)
    m = Q.shape[0]
    if m == 1:
        return StationaryDistribution(np.ones(1), np.zeros(1))
    b = np.zeros(m)
    b[-1] = 1.0
    if m <= DENSE_LIMIT:
        A = Q.T.copy()
        A[-1, :] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                lu = sla.lu_factor(A, check_finite=True)
            except (sla.LinAlgWarning, np.linalg.LinAlgError) as exc:
                raise SingularSolve(str(exc)) from exc
        diag = np.abs(np.diag(lu[0]))
        if diag.min() <= 1e-14 * diag.max():
            raise SingularSolve("balance equations are rank deficient beyond the known nullity")

        def solve(rhs):
            return sla.lu_solve(lu, rhs)
    else:
        A = sp.csc_matrix(Q.T)
        A = sp.lil_matrix(A)
        A[-1, :] = 1.0
        factor = spla.splu(sp.csc_matrix(A))

        def solve(rhs):
            return factor.solve(rhs)

    pi = solve(b)
    for _ in range(2):
        res = pi @ Q
        scale = max(np.abs(Q).max(), 1.0)
        if np.abs(res).max() <= RESIDUAL_TOL * scale:
            break
        # iterative refinement on the bordered system
        r = -(Q.T @ pi)
        r[-1] = 1.0 - pi.sum()
        pi = pi + solve(r)
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    if np.any(pi < -1e-12):
        raise SingularSolve("stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = float(np.abs(pi @ Q).max())
    if dQ is None:
        return StationaryDistribution(pi, np.zeros(m), residual)
    rhs = -(np.asarray(dQ).T @ pi)
    rhs[-1] = 0.0
    dpi = solve(rhs)
    dpi = dpi - dpi.sum() / m
    return StationaryDistribution(pi, dpi, residual)


def stationary_distribution(fiber: FiberSpace, layer, theta) -> StationaryDistribution:
    Q, dQ = fiber_generator(fiber, layer, theta)
    return solve_stationary(Q, dQ)


# ----------------------------------------------------------------------
# reduced model


class ReducedNetwork:
    """Averaged model on conserved coordinates ``u = M x``.

    Reactions of the parent layer outside the fast set are kept (natural ones
    drive :func:`simulate_reduced`; slower ones are needed by a further
    reduction step).  Local reaction ``j`` is parent reaction ``retained[j]``.
    """

    def __init__(self, parent, gamma1, gamma2, Gamma2, basis: ConservedBasis, name=None):
        self.parent = parent
        self.gamma1 = Fraction(gamma1)
        self.gamma2 = Fraction(gamma2)
        self.Gamma1 = basis.fast
        self.Gamma2 = frozenset(Gamma2)
        self.basis = basis
        self.retained = tuple(k for k in range(parent.n_reactions) if k not in basis.fast)
        self.jumps = np.array(
            [basis.M @ parent.jumps[k] for k in self.retained], dtype=np.int64
        ).reshape(len(self.retained), basis.dim)
        self.betas = tuple(parent.betas[k] for k in self.retained)
        self.labels = tuple(parent.labels[k] for k in self.retained)
        self.initial = basis.project(parent.initial)
        self.natural = tuple(j for j, k in enumerate(self.retained) if k in self.Gamma2)
        self._fibers: dict = {}
        self._stationary: dict = {}
        self._reps: dict = {self.initial: tuple(parent.initial)}
        self._feasible: dict = {}

    # layer protocol -------------------------------------------------
    @property
    def n_reactions(self) -> int:
        return len(self.retained)

    @property
    def d(self) -> int:
        return self.basis.dim

    @property
    def M(self) -> np.ndarray:
        return self.basis.M

    @property
    def reduced_jumps(self) -> np.ndarray:
        """``M zeta_k`` for the natural (second-scale) reactions."""
        return self.jumps[list(self.natural)]

    @property
    def u0(self):
        return self.initial

    def local_index(self, k) -> int:
        try:
            return self.retained.index(k)
        except ValueError:
            raise IndexError(f"parent reaction {k} is fast and was averaged out") from None

    def is_state(self, u) -> bool:
        u = tuple(int(a) for a in u)
        if u in self._reps:
            return True
        if u not in self._feasible:
            try:
                self._reps[u] = find_representative(self.parent, self.M, u)
                self._feasible[u] = True
            except NoRepresentative:
                self._feasible[u] = False
        return self._feasible[u]

    def fiber(self, u, theta=None) -> FiberSpace:
        u = tuple(int(a) for a in u)
        fib = self._fibers.get(u)
        if fib is None:
            theta = self.parent_theta if theta is None else theta
            rep = self._reps.get(u)
            fib = enumerate_fiber(self.parent, self.basis, u, theta, representative=rep)
            self._fibers[u] = fib
        return fib

    @property
    def parent_theta(self):
        root = self.parent
        while isinstance(root, ReducedNetwork):
            root = root.parent
        return root.theta_nominal

    def stationary(self, u, theta) -> StationaryDistribution:
        u = tuple(int(a) for a in u)
        key = (u, float(theta))
        sd = self._stationary.get(key)
        if sd is None:
            sd = stationary_distribution(self.fiber(u, theta), self.parent, theta)
            self._stationary[key] = sd
        return sd

    def average(self, g, u, theta):
        """Fiber average of ``g(x) -> (value, dvalue)`` and its theta-derivative."""
        fib = self.fiber(u, theta)
        sd = self.stationary(u, theta)
        val = 0.0
        dval = 0.0
        for x, p, dp in zip(fib.states, sd.pi, sd.dpi_dtheta):
            a, da = g(tuple(int(c) for c in x))
            val += a * p
            dval += da * p + a * dp
        return val, dval

    def rate(self, j, u, theta):
        k = self.retained[j]
        return self.average(lambda x: self.parent.rate(k, x, theta), u, theta)

    def step(self, u, j, theta):
        """Conserved coordinate after firing local reaction ``j`` from ``u``.

        Records a representative of the new fiber (a fiber state from which
        the parent reaction fires, displaced by its jump).
        """
        u = tuple(int(a) for a in u)
        new = tuple(int(a) for a in np.asarray(u) + self.jumps[j])
        if new not in self._reps:
            k = self.retained[j]
            fib = self.fiber(u, theta)
            for x in fib.states:
                if self.parent.rate(k, tuple(x), theta)[0] > 0:
                    self._reps[new] = tuple(int(a) for a in x + self.parent.jumps[k])
                    break
            else:
                raise NoRepresentative(f"reaction {self.labels[j]} cannot fire from {u}")
        return new

    def __repr__(self):
        return (f"ReducedNetwork(gamma2={self.gamma2}, Gamma2={sorted(self.Gamma2)}, "
                f"M={self.M.tolist()})")


def reduce_network(layer) -> ReducedNetwork:
    gamma2, Gamma2, basis = second_timescale(layer)
    gamma1, _ = first_timescale(layer)
    red = ReducedNetwork(layer, gamma1, gamma2, Gamma2, basis)
    if not np.any(red.reduced_jumps):
        raise NoSecondScale("second-scale reactions leave the conserved coordinates fixed")
    return red


@dataclass
class ReductionChain:
    stages: list
    stop_reason: str | None = None

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, i):
        return self.stages[i]

    def __iter__(self):
        return iter(self.stages)

    @property
    def final(self) -> ReducedNetwork:
        return self.stages[-1]


def reduce_iterated(network, steps: int) -> ReductionChain:
    """Apply the single-step reduction up to ``steps`` times.

    Each stage keeps every non-fast reaction with its averaged propensity, so
    the next stage recomputes its scales from the surviving exponents.
    Stops early (recording why) when no further scale separates.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    chain = ReductionChain([])
    layer = network
    for i in range(steps):
        try:
            red = reduce_network(layer)
        except NoSecondScale as exc:
            if not chain.stages:
                raise
            chain.stop_reason = f"stage {i + 1}: {exc}"
            break
        chain.stages.append(red)
        layer = red
    return chain


def reduced_propensity(reduced: ReducedNetwork, k, v, theta):
    """Averaged propensity of parent reaction ``k`` at conserved coordinate ``v``."""
    return reduced.rate(reduced.local_index(k), v, theta)


class AveragedOutput:
    """``f_theta(u)``: fiber average of an output on the parent layer."""

    def __init__(self, reduced: ReducedNetwork, f):
        self.reduced = reduced
        self.f = f

    def value_and_derivative(self, u, theta):
        f = self.f
        return self.reduced.average(lambda x: f.value_and_derivative(x, theta), u, theta)

    def __call__(self, u, theta):
        return self.value_and_derivative(u, theta)[0]


def averaged_function(reduced: ReducedNetwork, f, v, theta):
    return AveragedOutput(reduced, f).value_and_derivative(v, theta)


def lift_output(chain, f):
    """Average ``f`` through every stage of a reduction chain."""
    stages = chain.stages if isinstance(chain, ReductionChain) else [chain]
    for red in stages:
        f = AveragedOutput(red, f)
    return f


# ----------------------------------------------------------------------
# reduced simulation


class RateTable:
    """Memoized averaged rates of the natural reactions, keyed by (u, theta)."""

    def __init__(self, reduced: ReducedNetwork):
        self.reduced = reduced
        self._cache: dict = {}

    def __call__(self, u, theta) -> np.ndarray:
        key = (u, theta)
        a = self._cache.get(key)
        if a is None:
            red = self.reduced
            a = np.array([red.rate(j, u, theta)[0] for j in red.natural], dtype=float)
            self._cache[key] = a
        return a


def simulate_reduced(reduced: ReducedNetwork, theta, t_end, rng, rates: RateTable | None = None,
                     max_events: int = 10**9) -> Trajectory:
    """Direct-method path of the averaged model in conserved coordinates."""
    gen = rng.generator() if hasattr(rng, "generator") else rng
    rates = rates or RateTable(reduced)
    u = tuple(reduced.initial)
    times, states, fired = [], [u], []
    t = 0.0
    natural = reduced.natural
    while True:
        a = rates(u, theta)
        a0 = float(a.sum())
        if a0 <= 0.0:
            break
        tau = gen.exponential() / a0
        if t + tau > t_end:
            break
        t += tau
        i = _pick(a, a0, gen.random())
        u = reduced.step(u, natural[i], theta)
        times.append(t)
        states.append(u)
        fired.append(natural[i])
        if len(fired) >= max_events:
            break
    return Trajectory(np.asarray(times, dtype=float),
                      np.asarray(states, dtype=np.int64).reshape(-1, reduced.d),
                      float(t_end), np.asarray(fired, dtype=np.int64),
                      len(fired) >= max_events)


def _pick(a, total, u):
    target = u * total
    acc = 0.0
    last = -1
    for k, ak in enumerate(a):
        if ak > 0.0:
            acc += ak
            last = k
            if acc > target:
                return k
    return last


def reachable_states(reduced: ReducedNetwork, theta, cap: int = 10_000) -> list:
    """Conserved coordinates reachable from ``u0`` through natural reactions."""
    start = tuple(reduced.initial)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for j in reduced.natural:
            if reduced.rate(j, u, theta)[0] > 0:
                w = reduced.step(u, j, theta)
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        if len(seen) > cap:
            raise FiberNotFinite(f"more than {cap} reachable reduced states")
    return sorted(seen)
