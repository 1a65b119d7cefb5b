"""Weighted occupation times of the fast chain and the auxiliary W-process.

For a fiber with fast generator ``Q`` (scaled by ``N``) and exit weights
``Lam``, the vector ``beta_e(t) = E[1{Z(t)=e} exp(-int_0^t Lam(Z))]`` solves
``beta' = (N Q^T - diag(Lam)) beta``.  Everything else here is algebra on
``beta``: the slow-jump intensities ``rho_k``, the placement laws
``Theta_k``, the lifted output, and a simulator for the process that jumps
only at slow firings yet has the same one-dimensional laws as the full
process.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import StiffnessFailure
from .network import scale_factor
from .reduction import ReducedNetwork, fiber_generator, solve_stationary

log = logging.getLogger(__name__)

EXPM_LIMIT = 500
RTOL = 1e-10


@dataclass(frozen=True)
class BetaVector:
    t: float
    values: np.ndarray

    @property
    def survival(self) -> float:
        return float(self.values.sum())


class BetaPropagator:
    """Action of ``exp(t (N Q^T - D))`` on fiber indicators.

    Reversible fast chains are symmetrized with the stationary law and
    diagonalized once, which makes repeated evaluation cheap; otherwise each
    call runs a dense matrix exponential (or a stiff integrator for large
    fibers).
    """

    def __init__(self, Q, weight, N=1.0, allow_spectral=True):
        Q = np.asarray(Q, dtype=float)
        self.m = Q.shape[0]
        self.weight = np.asarray(weight, dtype=float)
        self.A = N * Q.T - np.diag(self.weight)
        self._spectral = None
        if allow_spectral and self.m > 1:
            self._spectral = self._try_spectral(N * Q)

    def _try_spectral(self, Q):
        try:
            pi = solve_stationary(Q).pi
        except Exception:  # pragma: no cover - only a speed path
            return None
        if pi.min() <= 0 or pi.max() / pi.min() > 1e10:
            return None
        flux = pi[:, None] * Q
        if np.abs(flux - flux.T).max() > 1e-12 * max(np.abs(flux).max(), 1.0):
            return None
        s = np.sqrt(pi)
        H = (s[:, None] * (Q - np.diag(self.weight))) / s[None, :]
        H = 0.5 * (H + H.T)
        lam, U = np.linalg.eigh(H)
        return lam, s[:, None] * U, U.T / s[None, :]

    def __call__(self, t, z) -> np.ndarray:
        if t == 0:
            out = np.zeros(self.m)
            out[z] = 1.0
            return out
        if self.m == 1:
            return np.array([np.exp(self.A[0, 0] * t)])
        if self._spectral is not None:
            lam, left, right = self._spectral
            out = left @ (np.exp(lam * t) * right[:, z])
            return np.clip(out, 0.0, 1.0)
        if self.m <= EXPM_LIMIT:
            return np.clip(sla.expm(self.A * t)[:, z], 0.0, 1.0)
        b0 = np.zeros(self.m)
        b0[z] = 1.0
        return self._integrate(b0, [t])[-1]

    def exact(self, t, z) -> np.ndarray:
        """Dense matrix exponential regardless of the fast path."""
        if self.m > EXPM_LIMIT:
            b0 = np.zeros(self.m)
            b0[z] = 1.0
            return self._integrate(b0, [t])[-1]
        return sla.expm(self.A * t)[:, z]

    def _integrate(self, b0, t_grid):
        A = self.A
        sol = solve_ivp(lambda _t, y: A @ y, (0.0, float(t_grid[-1])), b0, method="Radau",
                        t_eval=list(t_grid), rtol=RTOL, atol=1e-14, jac=A)
        if not sol.success:
            raise StiffnessFailure(sol.message)
        return sol.y.T

    def derivative(self, t, z) -> np.ndarray:
        return self.A @ self(t, z)


def beta_solve(Q, weight, N, z0: int, t_grid) -> list[BetaVector]:
    """beta(t) on ``t_grid`` for the chain started in state index ``z0``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] < 0 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be nondecreasing and start at t >= 0")
    prop = BetaPropagator(Q, weight, N, allow_spectral=False)
    if prop.m > EXPM_LIMIT:
        b0 = np.zeros(prop.m)
        b0[z0] = 1.0
        vals = prop._integrate(b0, t_grid)
        return [BetaVector(float(t), v) for t, v in zip(t_grid, vals)]
    return [BetaVector(float(t), prop.exact(t, z0)) for t in t_grid]


@dataclass(frozen=True)
class DecayRate:
    lambda_theta: float


def decay_rate(weight, pi) -> DecayRate:
    """Perturbed eigenvalue ``1^T D pi`` of the weighted fast chain."""
    return DecayRate(float(np.dot(weight, pi)))


# ----------------------------------------------------------------------
# fiber kernels


class FiberKernel:
    """Fast chain, exit weights and channel propensities on one fiber."""

    def __init__(self, reduced: ReducedNetwork, v, theta, N):
        layer = reduced.parent
        self.reduced = reduced
        self.v = tuple(int(a) for a in v)
        self.theta = theta
        self.N = N
        self.fiber = reduced.fiber(self.v, theta)
        self.states = self.fiber.states
        self.fast_scale = scale_factor(N, reduced.gamma2 - reduced.gamma1)
        Q, dQ = fiber_generator(self.fiber, layer, theta)
        self.Q = Q
        self.dQ = dQ
        self.channels = []
        lam = []
        for j, k in enumerate(reduced.retained):
            if not np.any(reduced.jumps[j]):
                raise ValueError(
                    f"{reduced.labels[j]} is slow but stays inside the fiber; "
                    "the occupation oracle needs every slow reaction to move the conserved coordinates"
                )
            s = scale_factor(N, layer.betas[k] + reduced.gamma2)
            lam.append([s * layer.rate(k, tuple(x), theta)[0] for x in self.states])
            self.channels.append(k)
        self.lam = np.array(lam, dtype=float).reshape(len(self.channels), self.fiber.size)
        self.weight = self.lam.sum(axis=0)
        self.propagator = BetaPropagator(Q, self.weight, self.fast_scale)

    def index(self, z) -> int:
        return self.fiber.position(z)

    def beta(self, t, z) -> np.ndarray:
        return self.propagator(t, self.index(z) if not isinstance(z, (int, np.integer)) else z)

    def survival(self, t, zi) -> float:
        return float(self.propagator(t, zi).sum())

    def stationary(self):
        return solve_stationary(self.Q, self.dQ)


class KernelCache:
    def __init__(self, reduced: ReducedNetwork):
        self.reduced = reduced
        self._store: dict = {}

    def get(self, v, theta, N) -> FiberKernel:
        key = (tuple(int(a) for a in v), float(theta), float(N))
        fk = self._store.get(key)
        if fk is None:
            fk = FiberKernel(self.reduced, v, theta, N)
            self._store[key] = fk
        return fk


@dataclass(frozen=True)
class JumpKernel:
    t: float
    rho: dict  # parent reaction index -> rho_k(t)
    theta: dict  # parent reaction index -> placement law over fiber states
    survival: float

    @property
    def rho0(self) -> float:
        return float(sum(self.rho.values()))


def _kernel_from_beta(fk: FiberKernel, beta, zi, t) -> JumpKernel:
    surv = float(beta.sum())
    rho, theta = {}, {}
    for c, k in enumerate(fk.channels):
        w = fk.lam[c] * beta
        tot = float(w.sum())
        rho[k] = tot / surv if surv > 0 else 0.0
        if tot > 0:
            law = w / tot
        else:
            law = np.zeros(fk.fiber.size)
            law[zi] = 1.0
        theta[k] = law
    return JumpKernel(float(t), rho, theta, surv)


def jump_kernel(network, reduced: ReducedNetwork, v, z, theta, N, t, cache: KernelCache | None = None) -> JumpKernel:
    """rho_k(t) and Theta_k(t) for the W-process in state ``(t, v, z)``.

    ``z`` is a full state in the fiber of ``v``.  Built directly from the beta
    sums, so each placement law sums to one by construction.
    """
    fk = cache.get(v, theta, N) if cache else FiberKernel(reduced, v, theta, N)
    zi = fk.index(z)
    return _kernel_from_beta(fk, fk.propagator(t, zi), zi, t)


def digamma_sample(theta_k, u: float) -> int:
    """Inverse-CDF pick over the lexicographic fiber: ``min{l : u <= sum_{n<=l} Theta_n}``."""
    cdf = np.cumsum(theta_k)
    i = int(np.searchsorted(cdf, u, side="left"))
    return min(i, len(cdf) - 1)


def coupling_table(theta_a, theta_b) -> np.ndarray:
    """Exact ``P(F_a(u) = e_i, F_b(u) = e_j)`` for a shared uniform ``u``."""
    A = np.concatenate(([0.0], np.cumsum(theta_a)))
    B = np.concatenate(([0.0], np.cumsum(theta_b)))
    A[-1] = B[-1] = 1.0
    lo = np.maximum(A[:-1, None], B[None, :-1])
    hi = np.minimum(A[1:, None], B[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def mismatch_probability(theta_a, theta_b) -> float:
    return float(1.0 - np.trace(coupling_table(theta_a, theta_b)))


@dataclass(frozen=True)
class WState:
    tau: float
    v: tuple
    z: tuple


def lifted_function(f, w: WState, network, reduced: ReducedNetwork, theta, N,
                    cache: KernelCache | None = None) -> float:
    """``sum_e f(e) beta_e(tau) / sum_e beta_e(tau)`` over the fiber of ``w.v``."""
    fk = cache.get(w.v, theta, N) if cache else FiberKernel(reduced, w.v, theta, N)
    beta = fk.propagator(w.tau, fk.index(w.z))
    vals = f.evaluate_many(fk.states) if hasattr(f, "evaluate_many") else np.array(
        [f(tuple(x)) for x in fk.states])
    return float(vals @ beta / beta.sum())


def _holding_time(fk: FiberKernel, zi, u, horizon, tol=1e-10):
    """First ``t`` with survival(t) <= u, or None if it lies beyond ``horizon``."""
    prop = fk.propagator
    if prop(horizon, zi).sum() > u:
        return None
    lo, hi = 0.0, horizon
    # bisection, then Newton on the monotone survival curve
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if prop(mid, zi).sum() > u:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-4 * max(hi, 1e-12):
            break
    t = 0.5 * (lo + hi)
    for _ in range(20):
        beta = prop(t, zi)
        g = beta.sum() - u
        dg = -float(fk.weight @ beta)
        if dg >= 0:
            break
        step = g / dg
        t_new = min(max(t - step, lo), hi)
        if abs(t_new - t) < tol:
            t = t_new
            break
        t = t_new
    return t


def simulate_W(network, reduced: ReducedNetwork, theta, N, t_end, rng,
               cache: KernelCache | None = None, max_jumps: int = 10**7):
    """Path of the W-process ``(tau, v, z)`` up to ``t_end``.

    Returns the list of ``(time, WState)`` at time 0, after each slow jump,
    and finally at ``t_end`` (where ``tau`` is the time since the last jump).
    """
    gen = rng.generator() if hasattr(rng, "generator") else rng
    cache = cache or KernelCache(reduced)
    layer = reduced.parent
    v = tuple(reduced.initial)
    z = tuple(int(a) for a in layer.initial)
    t = 0.0
    path = [(0.0, WState(0.0, v, z))]
    while len(path) <= max_jumps:
        fk = cache.get(v, theta, N)
        zi = fk.index(z)
        u = gen.random()
        hold = _holding_time(fk, zi, u, t_end - t)
        if hold is None:
            break
        beta = fk.propagator(hold, zi)
        kern = _kernel_from_beta(fk, beta, zi, hold)
        rates = np.array([kern.rho[k] for k in fk.channels])
        c = _pick(rates, rates.sum(), gen.random())
        k = fk.channels[c]
        e = fk.states[digamma_sample(kern.theta[k], gen.random())]
        j = reduced.local_index(k)
        v = tuple(int(a) for a in np.asarray(v) + reduced.jumps[j])
        z = tuple(int(a) for a in e + layer.jumps[k])
        reduced._reps.setdefault(v, z)
        t += hold
        path.append((t, WState(0.0, v, z)))
    else:
        log.warning("W-process hit the jump cap at t=%g", t)
    last_t, last = path[-1]
    path.append((float(t_end), WState(float(t_end) - last_t, last.v, last.z)))
    return path


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


def regularity_gap(fk: FiberKernel, z, T, n_grid: int = 400) -> float:
    """``max_{t in [1/sqrt(N), T]} || beta(t) - exp(-lambda t) pi ||_inf`` on a log-spaced grid."""
    zi = fk.index(z)
    sd = solve_stationary(fk.Q)
    lam = decay_rate(fk.weight, sd.pi).lambda_theta
    eps = 1.0 / np.sqrt(fk.fast_scale)
    ts = np.unique(np.concatenate((np.geomspace(eps, T, n_grid), np.linspace(eps, T, n_grid))))
    return max(float(np.abs(fk.propagator.exact(t, zi) - np.exp(-lam * t) * sd.pi).max()) for t in ts)
