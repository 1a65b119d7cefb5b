import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mssa.network import build_network, heat_shock
from mssa.reduction import reduce_network

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SLOW = os.environ.get("MSSA_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if SLOW:
        return
    skip = pytest.mark.skip(reason="paper-scale run; set MSSA_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def hs():
    return heat_shock()


@pytest.fixture(scope="session")
def hs_reduced(hs):
    return reduce_network(hs)


@pytest.fixture(scope="session")
def birth_death():
    # 0 -> A at rate theta, A -> 0 at rate x
    return build_network(["A"], [({}, {"A": 1}, 1.0, 1, 0), ({"A": 1}, {}, 1.0, 0, 0)], [0], 1, 2.0)


def binomial_pmf(n, p):
    from math import comb

    return np.array([comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)])


def mc_beta(Q, w, z0, t, n, seed):
    """Monte Carlo of E[1{Z(t)=e} exp(-int_0^t w(Z))] for a small chain."""
    rng = np.random.default_rng(seed)
    m = Q.shape[0]
    out_rate = -np.diag(Q)
    P = Q / out_rate[:, None]
    np.fill_diagonal(P, 0.0)
    cum = np.cumsum(P, axis=1)
    z = np.full(n, z0)
    clock = np.zeros(n)
    V = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        dt = rng.exponential(size=idx.size) / out_rate[z[idx]]
        ends = clock[idx] + dt >= t
        stay = np.where(ends, t - clock[idx], dt)
        V[idx] += w[z[idx]] * stay
        clock[idx] += stay
        alive[idx[ends]] = False
        mv = idx[~ends]
        u = rng.random(mv.size)
        z[mv] = (u[:, None] > cum[z[mv]]).sum(axis=1)
    weight = np.exp(-V)
    est = np.array([np.mean((z == e) * weight) for e in range(m)])
    se = np.array([np.std((z == e) * weight, ddof=1) for e in range(m)]) / math.sqrt(n)
    return est, se
