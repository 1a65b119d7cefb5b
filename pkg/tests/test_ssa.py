import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mssa.network import build_network, heat_shock
from mssa.output import coordinate, constant
from mssa.reduction import reduce_network
from mssa.rng import RngStream, make_generator
from mssa.ssa import (
    RunningStats,
    Trajectory,
    empirical_occupation,
    end_states,
    estimate_expectation,
    simulate_path,
)


@pytest.fixture(scope="module")
def birth():
    return build_network(["A"], [({}, {"A": 1}, 2.0, 0, 0)], [0])


def test_absorbing_state():
    net = build_network(["A", "B"], [({"A": 1}, {"B": 1}, 1.0, 0, 0)], [0, 0])
    tr = simulate_path(net, 0, 1, 1.0, 3.0, RngStream(1))
    assert tr.n_events == 0
    assert tr.end_time == 3.0
    np.testing.assert_array_equal(tr.states, [[0, 0]])


def test_rejects_bad_args(hs):
    with pytest.raises(ValueError):
        simulate_path(hs, 1, 1, 1.0, -1.0, RngStream(0))
    with pytest.raises(ValueError):
        simulate_path(hs, 1, 1, 0.0, 1.0, RngStream(0))
    with pytest.raises(ValueError):
        make_generator(-1, 0)


def test_first_events_match_hand_reference(hs):
    # competing exponentials replayed from the same tape
    gen = make_generator(11, 0)
    x = np.array([20, 0, 0])
    Z = hs.jumps
    t = 0.0
    ref = []
    for _ in range(3):
        a = np.array([1.0 * x[0], 2.0 * x[1], 5.0 * x[1]])
        t += gen.exponential() / a.sum()
        k = int(np.argmax(np.cumsum(a) > gen.random() * a.sum()))
        x = x + Z[k]
        ref.append((t, k))
    tr = simulate_path(hs, 1, 1, 1.0, 10.0, RngStream(11, 0))
    for (t_ref, k_ref), t_got, k_got in zip(ref, tr.jump_times, tr.reaction_log):
        assert k_got == k_ref
        assert t_got == pytest.approx(t_ref, rel=1e-14)


@given(st.integers(0, 2**32), st.integers(0, 1000))
def test_deterministic_and_matches_kernel(seed, sid):
    net = heat_shock(v0=6)
    a = simulate_path(net, 1, 5, 1.3, 0.7, RngStream(seed, sid))
    b = simulate_path(net, 1, 5, 1.3, 0.7, RngStream(seed, sid))
    np.testing.assert_array_equal(a.jump_times, b.jump_times)
    np.testing.assert_array_equal(a.states, b.states)
    xs, ev, _ = end_states(net, 1, 5, 1.3, 0.7, 1, seed, start=sid)
    np.testing.assert_array_equal(xs[0], a.final_state)
    assert ev == a.n_events


@given(st.integers(0, 10**6))
def test_path_invariants(seed):
    tr = simulate_path(heat_shock(), 1, 10, 1.0, 1.0, RngStream(seed))
    assert np.all(np.diff(tr.jump_times) > 0)
    assert tr.jump_times.size == 0 or tr.jump_times[-1] <= tr.end_time
    assert np.all(tr.states >= 0)
    assert np.all(tr.states.sum(axis=1) == 20)
    Z = heat_shock().jumps
    np.testing.assert_array_equal(np.diff(tr.states, axis=0), Z[tr.reaction_log])


def test_conserved_coordinate_moves_only_on_slow_firings(hs, hs_reduced):
    tr = simulate_path(hs, 1, 50, 1.0, 1.0, RngStream(5))
    u = tr.states @ hs_reduced.M.T
    moved = np.any(np.diff(u, axis=0) != 0, axis=1)
    slow = ~np.isin(tr.reaction_log, list(hs_reduced.Gamma1))
    np.testing.assert_array_equal(moved, slow)


def test_event_cap(hs):
    tr = simulate_path(hs, 1, 100, 1.0, 1.0, RngStream(0), max_events=10)
    assert tr.truncated and tr.n_events == 10


def test_poisson_birth(birth):
    xs, ev, _ = end_states(birth, 0, 1, 1.0, 1.0, 100_000, 3)
    counts = xs[:, 0]
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - 2.0) <= 3 * se
    est = estimate_expectation(birth, 0, 1, 1.0, coordinate(0, 1), 1.0, 100_000, 3)
    assert est.mean == counts.mean()
    assert est.halfwidth95 == pytest.approx(1.96 * math.sqrt(est.variance / est.samples))
    assert ev == counts.sum()


def test_constant_output(birth):
    est = estimate_expectation(birth, 0, 1, 1.0, constant(7, 1), 1.0, 100, 0)
    assert est.mean == 7.0 and est.variance == 0.0


def test_ci_coverage(birth):
    f = coordinate(0, 1)
    hits = 0
    for rep in range(200):
        est = estimate_expectation(birth, 0, 1, 1.0, f, 1.0, 200, 1000 + rep)
        hits += abs(est.mean - 2.0) <= est.halfwidth95
    assert 0.90 <= hits / 200 <= 0.99


def test_heat_shock_mean_large_N(hs):
    # reduced-model limit v0 (1 - e^{-5/3}); bias at N=1e3 is far below the SE
    est = estimate_expectation(hs, 1, 1000, 1.0, coordinate(2, 3), 1.0, 2000, 9)
    assert abs(est.mean - 20 * (1 - math.exp(-5 / 3))) <= 3 * est.standard_error


@pytest.mark.slow
def test_heat_shock_mean_paper_N(hs):
    est = estimate_expectation(hs, 1, 10_000, 1.0, coordinate(2, 3), 1.0, 10_000, 9)
    assert abs(est.mean - 20 * (1 - math.exp(-5 / 3))) <= 3 * est.standard_error


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30),
       st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_running_stats_merge(a, b):
    m = RunningStats.of(a).merge(RunningStats.of(b))
    both = np.array(a + b)
    assert m.count == both.size
    assert m.mean == pytest.approx(both.mean(), abs=1e-9)
    if both.size > 1:
        assert m.variance == pytest.approx(both.var(ddof=1), rel=1e-7, abs=1e-6)


def test_occupation_simple():
    tr = Trajectory(np.array([]), np.array([[2, 1]]), 3.0, np.array([], dtype=int))
    occ = empirical_occupation(tr)
    assert occ.weights == {(2, 1): 3.0}
    tr = Trajectory(np.array([0.5]), np.array([[1, 0], [0, 1]]), 1.0, np.array([0]))
    assert empirical_occupation(tr).weights == {(1, 0): 0.5, (0, 1): 0.5}


@given(st.integers(0, 10**6))
def test_occupation_sums_to_horizon(seed):
    tr = simulate_path(heat_shock(v0=5), 1, 20, 1.0, 2.0, RngStream(seed))
    occ = empirical_occupation(tr)
    assert occ.total() == pytest.approx(2.0, rel=1e-9)


def test_occupation_approaches_stationary_law():
    net = heat_shock()
    red = reduce_network(net)
    pooled = {}
    for sid in range(200):
        tr = simulate_path(net, 1, 100, 1.0, 5.0, RngStream(21, sid))
        for v, states in empirical_occupation(tr, red.M).by_fiber().items():
            acc = pooled.setdefault(v, {})
            for x, w in states.items():
                acc[x] = acc.get(x, 0.0) + w
    total, tv = 0.0, 0.0
    for v, states in pooled.items():
        if v[0] == 0:
            continue
        fib = red.fiber(v, 1.0)
        pi = red.stationary(v, 1.0).pi
        mass = sum(states.values())
        emp = np.zeros(fib.size)
        for x, w in states.items():
            emp[fib.position(x)] = w / mass
        tv += mass * 0.5 * np.abs(emp - pi).sum()
        total += mass
    assert tv / total <= 0.02
