from __future__ import annotations

import numpy as np
import pytest

from prisched.engine import (
    FixedPriority,
    LongestQueueFirst,
    MaxWeight,
    RandomizedPriority,
    SimState,
    Stepper,
    build_dominant_system,
    check_ranks,
    prioritized_maximal_schedule,
    run,
    set_first_ranks,
)
from prisched.graph import InterferenceGraph, is_independent
from prisched.traffic import ArrivalSource, Bernoulli, CorrelatedGroup, MarkovOnOff

CLIQUE2 = InterferenceGraph.complete(2)
COIN = RandomizedPriority(((1, 2), (2, 1)), (0.5, 0.5))


def test_schedule_examples(g6):
    assert prioritized_maximal_schedule(CLIQUE2, [1, 1], [1, 2]) == (0,)
    assert prioritized_maximal_schedule(g6, [1] * 6, [1, 2, 3, 4, 5, 6]) == (0, 1, 2)
    assert prioritized_maximal_schedule(g6, [0] * 6, [1, 2, 3, 4, 5, 6]) == ()


def test_single_step_trace():
    st = Stepper(CLIQUE2, FixedPriority((1, 2)), [Bernoulli(0), Bernoulli(0)], seed=0)
    state = SimState.empty(2, initial=(1, 1))
    nxt = st.step(state, arrivals=(0, 1))
    assert nxt.queues == (0, 2)
    assert nxt.cum_departures == (1, 0)
    assert nxt.schedule == (0,)


def test_lqf_serves_longest_queue():
    st = Stepper(CLIQUE2, LongestQueueFirst(), [Bernoulli(0), Bernoulli(0)], seed=0)
    assert st.step(SimState.empty(2, (5, 2)), (0, 0)).schedule == (0,)
    assert st.step(SimState.empty(2, (3, 3)), (0, 0)).schedule == (0,)


def test_maxweight_prefers_heaviest_set(g6):
    st = Stepper(g6, MaxWeight(), [Bernoulli(0)] * 6, seed=0)
    assert st.step(SimState.empty(6, (0, 0, 0, 5, 0, 4)), (0,) * 6).schedule == (3, 5)


@pytest.mark.slow
def test_coin_priorities_split_service_evenly():
    stats = run(CLIQUE2, COIN, [Bernoulli(0), Bernoulli(0)], 10**6, seed=1, initial=(10**6, 10**6))
    assert np.all(np.abs(stats.rate_out - 0.5) <= 0.01)


def test_zero_traffic_stays_empty(g6):
    stats = run(g6, LongestQueueFirst(), [Bernoulli(0)] * 6, 5000, seed=2, thresholds=(0,))
    assert not stats.max_q.any() and not stats.rate_out.any() and not stats.overflow.any()


@pytest.mark.slow
def test_coin_priorities_stabilise_rates_below_half():
    stats = run(CLIQUE2, COIN, [Bernoulli(0.4), Bernoulli(0.4)], 10**6, seed=3)
    assert np.all(np.abs(stats.rate_out - 0.4) <= 0.01)


SPECS = [FixedPriority((3, 1, 4, 6, 2, 5)), LongestQueueFirst(), MaxWeight(), set_first_ranks]


@pytest.mark.parametrize("which", range(4))
def test_schedules_are_maximal_and_counters_balance(g6, which):
    spec = SPECS[which]
    if spec is set_first_ranks:
        spec = RandomizedPriority((set_first_ranks((0, 1, 2), 6), set_first_ranks((3, 5), 6)), (0.6, 0.4))
    models = [Bernoulli(0.3), MarkovOnOff(0.3, 0.2, 1), Bernoulli(0.2), Bernoulli(0.25), Bernoulli(0.2), Bernoulli(0.3)]
    stats = run(g6, spec, models, 4000, seed=7, initial=(2, 0, 1, 0, 3, 0), record=True)
    arrivals = ArrivalSource(models, 7).draw(4000)
    prev = np.array([2, 0, 1, 0, 3, 0])
    for t in range(4000):
        sel = stats.schedules[t]
        members = [i for i in range(6) if sel >> i & 1]
        assert is_independent(g6, members)
        assert all(prev[i] > 0 for i in members)
        for i in range(6):
            if prev[i] > 0 and i not in members:
                assert any(j in members for j in g6.neighbors[i])
        dep = np.array([sel >> i & 1 for i in range(6)])
        assert np.array_equal(stats.queues[t], prev - dep + arrivals[t])
        prev = stats.queues[t]
    total_in = arrivals.sum(axis=0)
    departed = np.rint(stats.rate_out * 4000).astype(int)
    assert np.array_equal(stats.final_queues, np.array([2, 0, 1, 0, 3, 0]) + total_in - departed)


def test_stepper_and_run_share_sample_paths(g6):
    models = [Bernoulli(0.2)] * 6
    spec = RandomizedPriority(((1, 2, 3, 4, 5, 6), (6, 5, 4, 3, 2, 1)), (0.3, 0.7))
    stats = run(g6, spec, models, 300, seed=11, record=True)
    st = Stepper(g6, spec, models, seed=11)
    state = SimState.empty(6)
    for t in range(300):
        state = st.step(state)
        assert state.queues == tuple(stats.queues[t])
    assert state.cum_arrivals == tuple(int(x) for x in stats.rate_in * 300)


def test_runs_are_deterministic(g6):
    models = [Bernoulli(0.15)] * 6
    a = run(g6, LongestQueueFirst(), models, 20_000, seed=5, thresholds=(1, 3))
    b = run(g6, LongestQueueFirst(), models, 20_000, seed=5, thresholds=(1, 3))
    for field in ("rate_in", "rate_out", "mean_q", "max_q", "overflow", "final_queues"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_dominant_system_shapes(g6):
    lone = build_dominant_system(g6, 0, (1, 2, 3, 4, 5, 6), [Bernoulli(0.1)] * 6)
    assert lone.links == (0,) and lone.graph.n == 1
    worst = build_dominant_system(g6, 5, None, [Bernoulli(0.1)] * 6, worst_case=True)
    assert worst.links == (0, 1, 4, 5)
    assert worst.ranks == (1, 2, 3, 4)
    assert len(worst.graph.edges()) == 6


def test_dominance_needs_the_worst_case_structure():
    # path 0 - 1 - 2: link 0 blocks 1, which later blocks 2, while the
    # clique over {1, 2} serves 2 on the second slot
    path = InterferenceGraph.from_edges(3, [(0, 1), (1, 2)])
    models = [Bernoulli(0)] * 3
    orig = Stepper(path, FixedPriority((1, 2, 3)), models, seed=0)
    dom_sys = build_dominant_system(path, 2, (1, 2, 3), models)
    dom = Stepper(dom_sys.graph, FixedPriority(dom_sys.ranks), dom_sys.models, seed=0)
    s, d = SimState.empty(3, (1, 1, 0)), SimState.empty(2, (1, 0))
    s, d = orig.step(s, (0, 0, 1)), dom.step(d, (0, 1))
    s, d = orig.step(s, (0, 0, 0)), dom.step(d, (0, 0))
    assert s.queues[2] == 1 and d.queues[1] == 0


def test_synchronized_leaves_leave_the_center_stable():
    # identical leaf arrivals keep the leaves busy together, so the center
    # still gets the idle fraction; only staggered arrivals starve it
    star = InterferenceGraph.star(3)
    ranks = (4, 1, 2, 3)
    sync = CorrelatedGroup((0.34,) * 3, "synchronized", tag=1)
    stag = CorrelatedGroup((0.34,) * 3, "staggered", tag=1)
    calm = run(star, FixedPriority(ranks), [Bernoulli(0.1), *sync.members()], 100_000, seed=4)
    jam = run(star, FixedPriority(ranks), [Bernoulli(0.1), *stag.members()], 100_000, seed=4)
    assert calm.drift[0] < 0.01
    assert jam.drift[0] > 0.05


def test_rank_validation():
    with pytest.raises(ValueError):
        check_ranks((1, 1, 2), 3)
    with pytest.raises(ValueError):
        RandomizedPriority(((1, 2),), (0.5,))
    with pytest.raises(ValueError):
        run(CLIQUE2, FixedPriority((1, 2)), [Bernoulli(0)], 10, seed=0)
