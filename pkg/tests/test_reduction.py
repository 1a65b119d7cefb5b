from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import binomial_pmf
from mssa.errors import NoRepresentative, NoSecondScale, NotErgodic, SingularSolve
from mssa.network import build_network, heat_shock
from mssa.output import parse_output_expr
from mssa.reduction import (
    averaged_function,
    conserved_basis,
    enumerate_fiber,
    extreme_rays,
    lift_output,
    reachable_states,
    reduce_iterated,
    reduce_network,
    reduced_propensity,
    second_timescale,
    simulate_reduced,
    solve_stationary,
    stationary_distribution,
)
from mssa.rng import RngStream


def test_heat_shock_scales(hs):
    gamma2, Gamma2, basis = second_timescale(hs)
    assert gamma2 == 1
    assert Gamma2 == {2}
    assert set(basis.rays) == {(1, 1, 0), (0, 0, 1)}
    np.testing.assert_array_equal(basis.M, [[1, 1, 0], [0, 0, 1]])
    red = reduce_network(hs)
    np.testing.assert_array_equal(red.reduced_jumps, [[-1, 1]])
    assert red.u0 == (20, 0)
    assert red.gamma2 > red.gamma1


def test_two_decoupled_pairs():
    net = build_network(
        ["A", "B", "C", "D"],
        [({"A": 1}, {"B": 1}, 1, 0, 0), ({"B": 1}, {"A": 1}, 1, 0, 0),
         ({"C": 1}, {"D": 1}, 1, 0, 0), ({"D": 1}, {"C": 1}, 1, 0, 0),
         ({"B": 1}, {"C": 1}, 1, 0, -1)],
        [3, 0, 0, 0],
    )
    gamma2, Gamma2, basis = second_timescale(net)
    assert set(basis.rays) == {(1, 1, 0, 0), (0, 0, 1, 1)}
    assert gamma2 == 1 and Gamma2 == {4}


def test_single_scale_has_no_second_scale():
    net = build_network(["A", "B"], [({}, {"A": 1}, 1, 0, 0), ({"A": 1}, {"B": 1}, 1, 0, 0),
                                     ({"B": 1}, {"A": 1}, 1, 0, 0), ({"B": 1}, {}, 1, 0, 0)], [0, 0])
    with pytest.raises(NoSecondScale):
        second_timescale(net)


def test_extreme_rays_simple():
    assert extreme_rays([[1, -1, 0]]) == [(1, 1, 0), (0, 0, 1)]
    assert extreme_rays([[1, 1]]) == []
    assert sorted(extreme_rays([[1, -1, 0], [0, 1, -1]])) == [(1, 1, 1)]


@given(st.lists(st.lists(st.integers(-2, 2), min_size=4, max_size=4), min_size=1, max_size=3))
def test_ray_invariants(rows):
    basis = conserved_basis(np.array(rows), frozenset(range(len(rows))))
    A = np.array(rows)
    for r in basis.rays:
        assert min(r) >= 0 and any(r)
        np.testing.assert_array_equal(A @ np.array(r), 0)
    if basis.rays:
        np.testing.assert_array_equal(basis.M @ A.T, 0)
        assert np.linalg.matrix_rank(basis.M) == basis.dim == np.linalg.matrix_rank(np.array(basis.rays))


def test_fiber_examples(hs, hs_reduced):
    fib = hs_reduced.fiber((1, 0), 1.0)
    np.testing.assert_array_equal(fib.states, [[0, 1, 0], [1, 0, 0]])
    assert sorted(fib.transitions) == [(0, 1, 1), (1, 0, 0)]
    fib = hs_reduced.fiber((0, 5), 1.0)
    np.testing.assert_array_equal(fib.states, [[0, 0, 5]])
    assert fib.transitions == []
    assert hs_reduced.fiber((20, 0), 1.0).size == 21


def test_fiber_without_representative(hs, hs_reduced):
    with pytest.raises(NoRepresentative):
        enumerate_fiber(hs, hs_reduced.basis, (-1, 0), 1.0)


def test_irreversible_fast_chain_not_ergodic():
    net = build_network(["A", "B", "C"], [({"A": 1}, {"B": 1}, 1, 0, 0), ({"B": 1}, {"C": 1}, 1, 0, -1)],
                        [2, 0, 0])
    with pytest.raises(NotErgodic):
        reduce_network(net).fiber((2, 0), 1.0)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("v1", [1, 2, 3, 7, 30])
def test_binomial_stationary(hs, hs_reduced, theta, v1):
    fib = hs_reduced.fiber((v1, 0), theta)
    sd = stationary_distribution(fib, hs, theta)
    # lex order runs x2 = v1 .. 0
    want = binomial_pmf(v1, theta / (2 + theta))[::-1]
    np.testing.assert_allclose(sd.pi, want, atol=1e-10)
    eps = 1e-6
    num = (binomial_pmf(v1, (theta + eps) / (2 + theta + eps))
           - binomial_pmf(v1, (theta - eps) / (2 + theta - eps)))[::-1] / (2 * eps)
    np.testing.assert_allclose(sd.dpi_dtheta, num, atol=1e-8)
    assert abs(sd.dpi_dtheta.sum()) <= 1e-12


def test_single_state_fiber(hs, hs_reduced):
    sd = stationary_distribution(hs_reduced.fiber((0, 3), 1.0), hs, 1.0)
    assert sd.pi.tolist() == [1.0] and sd.dpi_dtheta.tolist() == [0.0]


def random_generator(m, seed):
    rng = np.random.default_rng(seed)
    Q = rng.uniform(0.1, 5.0, (m, m)) * (rng.random((m, m)) < 0.6)
    # ring keeps it irreducible
    for i in range(m):
        Q[i, (i + 1) % m] += rng.uniform(0.1, 1.0)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


@given(st.integers(2, 12), st.integers(0, 2**31))
def test_stationary_invariants(m, seed):
    Q = random_generator(m, seed)
    dQ = random_generator(m, seed + 1)
    sd = solve_stationary(Q, dQ)
    assert np.all(sd.pi >= 0)
    assert sd.pi.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.abs(sd.pi @ Q).max() <= 1e-12 * max(np.abs(Q).max(), 1.0)
    assert abs(sd.dpi_dtheta.sum()) <= 1e-12
    h = 1e-6
    fd = (solve_stationary(Q + h * dQ).pi - solve_stationary(Q - h * dQ).pi) / (2 * h)
    np.testing.assert_allclose(sd.dpi_dtheta, fd, atol=1e-6)


def test_reducible_generator_is_singular():
    Q = np.array([[-1.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0],
                  [0.0, 0.0, -1.0, 1.0], [0.0, 0.0, 1.0, -1.0]])
    with pytest.raises(SingularSolve):
        solve_stationary(Q)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("v1", [0, 1, 5, 20])
def test_averaged_closed_forms(hs, hs_reduced, theta, v1):
    lam, dlam = reduced_propensity(hs_reduced, 2, (v1, 0), theta)
    assert lam == pytest.approx(5 * v1 * theta / (2 + theta), abs=1e-10)
    assert dlam == pytest.approx(10 * v1 / (2 + theta) ** 2, abs=1e-10)
    f = parse_output_expr("x1", hs.names)
    val, dval = averaged_function(hs_reduced, f, (v1, 0), theta)
    assert val == pytest.approx(2 * v1 / (2 + theta), abs=1e-10)
    assert dval == pytest.approx(-2 * v1 / (2 + theta) ** 2, abs=1e-10)


def test_fast_reaction_has_no_averaged_rate(hs_reduced):
    with pytest.raises(IndexError):
        reduced_propensity(hs_reduced, 0, (3, 0), 1.0)


def test_reduced_simulation(hs_reduced):
    tr = simulate_reduced(hs_reduced, 1.0, 2.0, RngStream(3))
    assert np.all(tr.states.sum(axis=1) == 20)
    assert np.all(np.diff(tr.states[:, 1]) == 1)
    assert reachable_states(hs_reduced, 1.0) == [(20 - i, i) for i in range(20, -1, -1)]


def three_scale_network():
    # A <-> B fast, B <-> C one scale slower, C -> D slowest
    return build_network(
        ["A", "B", "C", "D"],
        [({"A": 1}, {"B": 1}, 1, 1, 0), ({"B": 1}, {"A": 1}, 2, 0, 0),
         ({"B": 1}, {"C": 1}, 1, 0, -1), ({"C": 1}, {"B": 1}, 1, 0, -1),
         ({"C": 1}, {"D": 1}, 1, 0, -2)],
        [4, 0, 0, 0],
    )


def test_iterated_reduction():
    net = three_scale_network()
    chain = reduce_iterated(net, 3)
    assert len(chain) == 2
    assert [s.gamma2 for s in chain] == [Fraction(1), Fraction(2)]
    assert chain.stop_reason
    last = chain.final
    np.testing.assert_array_equal(last.reduced_jumps, [[-1, 1]])
    assert last.u0 == (4, 0)
    # stage-2 fiber average of C given A+B+C = n under the stage-1 law
    f = parse_output_expr("x3", net.names)
    lifted = lift_output(chain, f)
    val, _ = lifted.value_and_derivative((4, 0), 1.0)
    fib = last.fiber((4, 0), 1.0)
    sd = last.stationary((4, 0), 1.0)
    np.testing.assert_allclose(sd.pi.sum(), 1.0)
    assert val == pytest.approx(float(fib.states[:, 1] @ sd.pi))


def test_iterated_heat_shock_stops(hs):
    chain = reduce_iterated(hs, 2)
    assert len(chain) == 1 and "stage 2" in chain.stop_reason
    with pytest.raises(NoSecondScale):
        reduce_iterated(build_network(["A"], [({}, {"A": 1}, 1, 0, 0), ({"A": 1}, {}, 1, 0, 0)], [0]), 1)
