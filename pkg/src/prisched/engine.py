"""Slotted-time simulation of prioritized maximal scheduling.

Each slot: resolve the priority order, walk the links from highest priority
(rank 1) down, schedule every link with a nonempty start-of-slot queue that
has no already-scheduled neighbour, depart one packet per scheduled link, then
append the slot's arrivals.  ``Q_i(n)`` is the end-of-slot queue.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from prisched.graph import InterferenceGraph, maximal_set_matrix
from prisched.traffic import ArrivalModel, ArrivalSource, scheduler_rng

CHUNK = 1 << 15


def check_ranks(ranks: Sequence[int], n: int) -> tuple[int, ...]:
    """Validate a priority vector: a permutation of ``1..n``, rank 1 served first."""
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != n or sorted(ranks) != list(range(1, n + 1)):
        raise ValueError(f"priority ranks must be a permutation of 1..{n}, got {ranks}")
    return ranks


def order_from_ranks(ranks: Sequence[int]) -> list[int]:
    return sorted(range(len(ranks)), key=ranks.__getitem__)


def ranks_from_order(order: Sequence[int]) -> tuple[int, ...]:
    ranks = [0] * len(order)
    for r, i in enumerate(order, start=1):
        ranks[i] = r
    return tuple(ranks)


def set_first_ranks(members: Sequence[int], n: int) -> tuple[int, ...]:
    """Ranks giving ``members`` the top priorities (by index), then the rest by index."""
    chosen = set(members)
    return ranks_from_order(sorted(chosen) + [i for i in range(n) if i not in chosen])


@dataclass(frozen=True)
class FixedPriority:
    ranks: tuple[int, ...]


@dataclass(frozen=True)
class RandomizedPriority:
    """I.i.d. per-slot priority vector drawn from a finite distribution."""

    ranks: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.ranks) != len(self.probs) or not self.ranks:
            raise ValueError("need one probability per priority vector")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > 1e-9:
            raise ValueError("priority probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class LongestQueueFirst:
    pass


@dataclass(frozen=True)
class MaxWeight:
    pass


PrioritySpec = FixedPriority | RandomizedPriority | LongestQueueFirst | MaxWeight


def prioritized_maximal_schedule(
    graph: InterferenceGraph, queues: Sequence[int], ranks: Sequence[int]
) -> tuple[int, ...]:
    """Greedy maximal schedule over nonempty links in priority order."""
    ranks = check_ranks(ranks, graph.n)
    sel = _greedy(order_from_ranks(ranks), queues, graph.masks)
    return tuple(i for i in range(graph.n) if sel >> i & 1)


def _greedy(order: Sequence[int], queues: Sequence[int], nbr: Sequence[int]) -> int:
    sel = 0
    for i in order:
        if queues[i] > 0 and not nbr[i] & sel:
            sel |= 1 << i
    return sel


class _OrderResolver:
    """Per-slot priority order for any priority spec."""

    def __init__(self, graph: InterferenceGraph, spec: PrioritySpec, rng: np.random.Generator) -> None:
        self.n = graph.n
        self.rng = rng
        self.kind = type(spec)
        if isinstance(spec, FixedPriority):
            self.fixed = order_from_ranks(check_ranks(spec.ranks, graph.n))
        elif isinstance(spec, RandomizedPriority):
            self.orders = [order_from_ranks(check_ranks(r, graph.n)) for r in spec.ranks]
            self.cum = np.cumsum(spec.probs)[:-1]
        elif isinstance(spec, MaxWeight):
            self.sets = maximal_set_matrix(graph)
        elif not isinstance(spec, LongestQueueFirst):
            raise TypeError(f"unsupported priority spec {spec!r}")

    def presample(self, k: int) -> list[list[int]] | None:
        if self.kind is RandomizedPriority:
            idx = np.searchsorted(self.cum, self.rng.random(k), side="right")
            return [self.orders[j] for j in idx.tolist()]
        return None

    def dynamic(self, q: Sequence[int]) -> list[int]:
        if self.kind is LongestQueueFirst:
            return sorted(range(self.n), key=lambda i: -q[i])
        k = int(np.argmax(self.sets @ np.asarray(q, dtype=float)))
        top = np.flatnonzero(self.sets[k]).tolist()
        return top + [i for i in range(self.n) if not self.sets[k, i]]


@dataclass(frozen=True)
class SimState:
    slot: int
    queues: tuple[int, ...]
    cum_arrivals: tuple[int, ...]
    cum_departures: tuple[int, ...]
    initial: tuple[int, ...]
    schedule: tuple[int, ...] = ()

    @classmethod
    def empty(cls, n: int, initial: Sequence[int] | None = None) -> SimState:
        q0 = tuple(initial) if initial is not None else (0,) * n
        return cls(0, q0, (0,) * n, (0,) * n, q0)


class Stepper:
    """Single-slot driver; holds the arrival source and scheduler randomness."""

    def __init__(
        self,
        graph: InterferenceGraph,
        spec: PrioritySpec,
        models: Sequence[ArrivalModel],
        seed: int,
        rep: int = 0,
        source: ArrivalSource | None = None,
    ) -> None:
        self.graph = graph
        self.source = source if source is not None else ArrivalSource(models, seed, rep)
        self.orders = _OrderResolver(graph, spec, scheduler_rng(seed, rep))

    def step(self, state: SimState, arrivals: Sequence[int] | None = None) -> SimState:
        if arrivals is None:
            arrivals = self.source.draw(1)[0].tolist()
        return step(state, self.graph, self.orders, arrivals)


def step(state: SimState, graph: InterferenceGraph, orders: _OrderResolver, arrivals: Sequence[int]) -> SimState:
    """Advance one slot: schedule on start-of-slot queues, depart, then add arrivals."""
    pre = orders.presample(1)
    order = pre[0] if pre is not None else orders.fixed if orders.kind is FixedPriority else orders.dynamic(state.queues)
    sel = _greedy(order, state.queues, graph.masks)
    dep = [sel >> i & 1 for i in range(graph.n)]
    return SimState(
        slot=state.slot + 1,
        queues=tuple(q - d + a for q, d, a in zip(state.queues, dep, arrivals)),
        cum_arrivals=tuple(c + a for c, a in zip(state.cum_arrivals, arrivals)),
        cum_departures=tuple(c + d for c, d in zip(state.cum_departures, dep)),
        initial=state.initial,
        schedule=tuple(i for i in range(graph.n) if dep[i]),
    )


@dataclass
class RunStats:
    """Per-link summary of one run; arrays are indexed by link."""

    slots: int
    rate_in: np.ndarray
    rate_out: np.ndarray
    mean_q: np.ndarray
    max_q: np.ndarray
    drift: np.ndarray
    thresholds: tuple[int, ...]
    overflow: np.ndarray  # shape (links, thresholds): fraction of post-burn-in slots with Q > B
    overflow_counts: np.ndarray
    measured_slots: int
    final_queues: np.ndarray
    queues: np.ndarray | None = None  # (slots, links) end-of-slot queues when recorded
    schedules: list[int] | None = field(default=None, repr=False)  # bitmask per slot when recorded


def run(
    graph: InterferenceGraph,
    spec: PrioritySpec,
    models: Sequence[ArrivalModel],
    slots: int,
    seed: int,
    thresholds: Sequence[int] = (),
    *,
    rep: int = 0,
    source: ArrivalSource | None = None,
    burn_in: float = 0.1,
    initial: Sequence[int] | None = None,
    record: bool = False,
) -> RunStats:
    """Simulate ``slots`` slots from ``initial`` queues (default empty)."""
    if slots < 1:
        raise ValueError("slots must be at least 1")
    n = graph.n
    if len(models) != n:
        raise ValueError(f"expected {n} arrival models, got {len(models)}")
    if source is None:
        source = ArrivalSource(models, seed, rep)
    orders = _OrderResolver(graph, spec, scheduler_rng(seed, rep))
    nbr = graph.masks
    fixed = orders.fixed if orders.kind is FixedPriority else None
    dynamic = orders.kind in (LongestQueueFirst, MaxWeight)
    thresholds = tuple(int(b) for b in thresholds)
    burn = int(burn_in * slots)

    q = list(initial) if initial is not None else [0] * n
    q0 = np.array(q, dtype=np.int64)
    cum_a = np.zeros(n, dtype=np.int64)
    sum_q = np.zeros(n)
    max_q = np.zeros(n, dtype=np.int64)
    ovf = np.zeros((n, len(thresholds)), dtype=np.int64)
    traj: list[np.ndarray] = []
    scheds: list[int] = []

    for start in range(0, slots, CHUNK):
        k = min(CHUNK, slots - start)
        arr = source.draw(k)
        cum_a += arr.sum(axis=0)
        pre = orders.presample(k)
        rows = []
        for t, a in enumerate(arr.tolist()):
            order = fixed if fixed is not None else orders.dynamic(q) if dynamic else pre[t]
            # decide on start-of-slot queues; rows keep earlier lists untouched
            sel = 0
            new = [x + y for x, y in zip(q, a)]
            for i in order:
                if q[i] and not nbr[i] & sel:
                    sel |= 1 << i
                    new[i] -= 1
            q = new
            rows.append(q)
            if record:
                scheds.append(sel)
        block = np.array(rows, dtype=np.int64).reshape(k, n)
        if record:
            traj.append(block)
        np.maximum(max_q, block.max(axis=0), out=max_q)
        cut = max(burn - start, 0)
        if cut < k:
            tail = block[cut:]
            sum_q += tail.sum(axis=0)
            for b, thr in enumerate(thresholds):
                ovf[:, b] += (tail > thr).sum(axis=0)

    final = np.array(q, dtype=np.int64)
    measured = slots - burn
    cum_d = q0 + cum_a - final
    return RunStats(
        slots=slots,
        rate_in=cum_a / slots,
        rate_out=cum_d / slots,
        mean_q=sum_q / measured,
        max_q=max_q,
        drift=final / slots,
        thresholds=thresholds,
        overflow=ovf / measured,
        overflow_counts=ovf,
        measured_slots=measured,
        final_queues=final,
        queues=np.concatenate(traj) if record else None,
        schedules=scheds if record else None,
    )


@dataclass(frozen=True)
class DominantSystem:
    """Clique over a tagged link and its competitors; the tagged link is served last.

    ``links`` maps each position of the reduced system to the original link
    index, so arrival streams can be shared with the original system.
    """

    graph: InterferenceGraph
    ranks: tuple[int, ...]
    models: tuple[ArrivalModel, ...]
    links: tuple[int, ...]

    @property
    def tagged(self) -> int:
        return len(self.links) - 1

    def source(self, seed: int, rep: int = 0) -> ArrivalSource:
        return ArrivalSource(self.models, seed, rep, keys=self.links)


def build_dominant_system(
    graph: InterferenceGraph,
    i: int,
    ranks: Sequence[int] | None,
    models: Sequence[ArrivalModel],
    worst_case: bool = False,
) -> DominantSystem:
    """Clique over ``i`` and its higher-priority neighbours (all neighbours if ``worst_case``).

    Competitors keep their relative order and ``i`` gets the lowest rank.
    """
    if not 0 <= i < graph.n:
        raise ValueError(f"link index {i} out of range")
    if worst_case:
        rivals = sorted(graph.neighbors[i])
        if ranks is not None:
            ranks = check_ranks(ranks, graph.n)
            rivals.sort(key=ranks.__getitem__)
    else:
        if ranks is None:
            raise ValueError("ranks are required unless worst_case is set")
        ranks = check_ranks(ranks, graph.n)
        rivals = sorted((j for j in graph.neighbors[i] if ranks[j] < ranks[i]), key=ranks.__getitem__)
    links = tuple(rivals) + (i,)
    k = len(links)
    return DominantSystem(
        graph=InterferenceGraph.complete(k),
        ranks=tuple(range(1, k + 1)),
        models=tuple(models[j] for j in links),
        links=links,
    )
