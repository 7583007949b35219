from __future__ import annotations

import math

import numpy as np
import pytest

from gen import random_graph, rates_in_a, rates_in_a_max
from prisched.engine import RandomizedPriority, run
from prisched.graph import InterferenceGraph, enumerate_maximal_sets, maximal_set_matrix
from prisched.synth import (
    InfeasibleRates,
    NonConvergence,
    caratheodory_reduce,
    check_local_priority,
    decompose_approx,
    decompose_exact,
    efficiency_floor,
    in_a,
    in_a_max,
    in_a_min,
    in_a_p,
    local_priority_probability,
    region_membership,
    stable_priority,
)
from prisched.traffic import Bernoulli

STAR = InterferenceGraph.star(3)
CLIQUE2 = InterferenceGraph.complete(2)


def _assert_valid(dec, graph, exact=True):
    assert all(w >= 0 for w in dec.weights)
    assert math.fsum(dec.weights) == pytest.approx(1.0, abs=1e-12)
    maximal = set(enumerate_maximal_sets(graph))
    assert all(s in maximal for s in dec.sets)
    cov = np.zeros(graph.n)
    for s, w in zip(dec.sets, dec.weights):
        cov[list(s)] += w
    target = np.asarray(dec.target) * (1.0 if exact else dec.coverage_factor)
    assert np.all(cov >= target)
    if exact:
        assert len(dec.sets) <= graph.n + 1


def test_region_examples():
    assert in_a_min(STAR, [0.2] * 4)
    a = [0.4, 0.3, 0.3, 0.3]
    assert not in_a_min(STAR, a)
    assert in_a(STAR, a)
    assert not in_a_p(STAR, a, (4, 1, 2, 3))
    assert in_a_p(STAR, a, stable_priority(STAR, a).ranks)
    with pytest.raises(ValueError):
        region_membership(STAR, a, "A_p")
    with pytest.raises(ValueError):
        region_membership(STAR, a, "B")


def test_stable_priority_examples():
    res = stable_priority(STAR, [0.4, 0.3, 0.3, 0.3])
    assert res.ranks == (2, 4, 3, 1) and res.feasible
    assert max(res.loads) <= 0.7 + 1e-12
    assert stable_priority(InterferenceGraph.edgeless(4), [0.5] * 4).ranks == (4, 3, 2, 1)
    bad = stable_priority(CLIQUE2, [0.6, 0.6])
    assert not bad and bad.violated


def test_stable_priority_iff_peeling():
    rng = np.random.default_rng(17)
    for _ in range(200):
        g = random_graph(rng, 1, 10)
        a = rng.uniform(0, 0.6, g.n)
        assert bool(stable_priority(g, a)) == bool(in_a(g, a))


def test_region_nesting():
    rng = np.random.default_rng(23)
    for _ in range(60):
        g = random_graph(rng, 1, 10)
        a = rng.uniform(0, 0.5, g.n)
        if in_a_min(g, a):
            assert in_a(g, a)
        if in_a(g, a):
            assert in_a_max(g, a)


def test_local_priority_examples():
    dist = RandomizedPriority(((1, 2), (2, 1)), (0.5, 0.5))
    assert check_local_priority(CLIQUE2, [0.4, 0.4], dist)
    assert not check_local_priority(CLIQUE2, [0.5, 0.4], dist)
    with pytest.raises(ValueError):
        check_local_priority(STAR, [0.1] * 4, [((1, 2, 3, 4), 1.0)], subsets=[[1], [2], [3], [0]])


def test_local_priority_point_mass_matches_fixed_priority():
    rng = np.random.default_rng(31)
    for _ in range(100):
        g = random_graph(rng, 1, 8)
        a = rng.uniform(0, 0.6, g.n)
        ranks = tuple(int(r) for r in rng.permutation(g.n) + 1)
        lower = [[j for j in g.neighbors[i] if ranks[j] > ranks[i]] for i in range(g.n)]
        assert check_local_priority(g, a, [(ranks, 1.0)], lower) == bool(in_a_p(g, a, ranks))


def test_decomposition_distribution_satisfies_local_priority(g6):
    a = rates_in_a_max(g6, np.random.default_rng(2))
    dec = decompose_exact(g6, a)
    dist = dec.priority_distribution()
    assert check_local_priority(g6, a, dist)
    for i in range(6):
        covered = math.fsum(w for s, w in zip(dec.sets, dec.weights) if i in s)
        assert local_priority_probability(g6, dist, i, sorted(g6.neighbors[i])) == pytest.approx(covered)


def test_decompose_exact_examples(g6):
    dec = decompose_exact(CLIQUE2, [0.4, 0.4], 0.1)
    assert dict(zip(dec.sets, dec.weights)) == pytest.approx({(0,): 0.5, (1,): 0.5})
    dec = decompose_exact(InterferenceGraph.edgeless(3), [0.2, 0.5, 0.1], 0.1)
    assert dec.sets == ((0, 1, 2),) and dec.weights == (1.0,)
    sets = enumerate_maximal_sets(g6)
    chosen = [sets[0], sets[2], sets[4]]
    a = np.zeros(6)
    for s in chosen:
        a[list(s)] += 0.9 / 3
    dec = decompose_exact(g6, a, 0.02)
    _assert_valid(dec, g6)
    assert min(dec.residuals) >= 0


def test_decompose_exact_random_instances():
    rng = np.random.default_rng(41)
    for _ in range(25):
        g = random_graph(rng, 2, 10)
        a = rates_in_a_max(g, rng)
        dec = decompose_exact(g, a)
        _assert_valid(dec, g)
        assert dec.epsilon > 0


def test_infeasible_rates_carry_a_certificate(g6):
    with pytest.raises(InfeasibleRates) as info:
        decompose_exact(CLIQUE2, [0.6, 0.6], 0.01)
    y = info.value.weights
    assert np.all(maximal_set_matrix(CLIQUE2) @ y <= 1 + 1e-9)
    assert info.value.demand > 1
    with pytest.raises(InfeasibleRates):
        decompose_exact(g6, [0.5] * 6, 0.01)


def test_caratheodory_reduction_keeps_the_combination():
    rng = np.random.default_rng(3)
    # three disjoint triangles: 27 maximal sets on 9 links
    g = InterferenceGraph.from_edges(9, [(b + i, b + j) for b in (0, 3, 6) for i, j in ((0, 1), (0, 2), (1, 2))])
    mat = maximal_set_matrix(g)
    assert len(mat) > g.n + 1
    w = rng.dirichlet(np.ones(len(mat)))
    red = caratheodory_reduce(mat.T, w)
    assert np.count_nonzero(red) <= g.n + 1
    assert np.all(red >= 0)
    assert red.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(mat.T @ red, mat.T @ w, atol=1e-12)


def test_decompose_approx_example():
    dec = decompose_approx(CLIQUE2, [0.4, 0.4], 0.1, 0.05)
    assert min(dec.coverage) >= 0.475
    assert dec.oracle_calls > 0
    lo, hi = dec.budget
    assert lo <= 1.0 + 1e-12 and lo <= hi


def test_decompose_approx_within_tolerance_of_exact():
    rng = np.random.default_rng(43)
    for _ in range(20):
        g = random_graph(rng, 2, 10)
        a = rates_in_a_max(g, rng)
        exact = decompose_exact(g, a)
        approx = decompose_approx(g, a, exact.epsilon, 0.05)
        _assert_valid(approx, g, exact=False)
        assert np.all(np.asarray(approx.coverage) >= 0.95 * np.asarray(exact.target))


def test_decompose_approx_uses_the_given_oracle():
    calls = []

    def oracle(w):
        calls.append(w)
        return (0,) if w[0] >= w[1] else (1,)

    dec = decompose_approx(CLIQUE2, [0.3, 0.3], 0.05, 0.1, oracle=oracle)
    assert dec.oracle_calls == len(calls)


def test_decompose_approx_reports_nonconvergence():
    with pytest.raises(NonConvergence) as info:
        decompose_approx(InterferenceGraph.star(3), [0.5, 0.2, 0.3, 0.4], 0.01, 0.001, max_calls=3)
    assert info.value.best_coverage.shape == (4,)


def test_efficiency_floor_examples():
    for g in (InterferenceGraph.complete(5), InterferenceGraph.star(4)):
        floor = efficiency_floor(g)
        assert floor.value == 1.0 and floor.delta == 1
    floor = efficiency_floor(InterferenceGraph.star(4))
    assert sorted(floor.ranks) == [1, 2, 3, 4, 5]
    assert floor.ranks[floor.witness.order[0]] == 5


def test_floor_scaled_rates_stable_under_witness_priority():
    rng = np.random.default_rng(47)
    for _ in range(15):
        g = random_graph(rng, 2, 8, p=0.5)
        floor = efficiency_floor(g, "brute")
        for _ in range(10):
            a = rates_in_a_max(g, rng, shrink=1.0)
            scaled = a * floor.value * (1 - 1e-6)
            assert in_a(g, scaled)
            assert in_a_p(g, scaled, floor.ranks)


def test_rates_built_in_a_are_recognised():
    rng = np.random.default_rng(53)
    for _ in range(50):
        g = random_graph(rng, 1, 10)
        a, ranks = rates_in_a(g, rng)
        assert in_a_p(g, a, ranks)
        assert stable_priority(g, a)


def test_decomposition_priorities_keep_the_star_stable():
    a = [0.3, 0.3, 0.3, 0.3]
    dec = decompose_exact(STAR, a)
    dist = dec.priority_distribution()
    assert check_local_priority(STAR, a, dist)
    stats = run(STAR, dist, [Bernoulli(x) for x in a], 200_000, seed=9)
    assert np.all(np.abs(stats.rate_out - stats.rate_in) <= 0.01)
