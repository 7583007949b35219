"""Interference graphs and exact combinatorial primitives.

Links are indexed ``0..n-1`` in the Python API.  Text formats and the CLI use
1-based link numbers; conversion happens only at those boundaries.

Sets of links are returned as sorted tuples so that tie-breaking and output
order are deterministic (lowest index first everywhere).
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

ENUMERATION_CAP = 24
BRUTE_DELTA_CAP = 8

IndependentSet = tuple[int, ...]


class SizeLimitError(ValueError):
    """Raised when an exact search would exceed its configured size cap."""


@dataclass(frozen=True)
class InterferenceGraph:
    """Undirected conflict graph over links ``0..n-1``."""

    n: int
    neighbors: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("an interference graph needs at least one link")
        if len(self.neighbors) != self.n:
            raise ValueError("neighbor table length does not match link count")
        for i, nb in enumerate(self.neighbors):
            if i in nb:
                raise ValueError(f"self-loop on link {i}")
            for j in nb:
                if not 0 <= j < self.n:
                    raise ValueError(f"neighbor {j} of link {i} out of range")
                if i not in self.neighbors[j]:
                    raise ValueError(f"adjacency not symmetric between {i} and {j}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> InterferenceGraph:
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for {n} links")
            if i == j:
                raise ValueError(f"self-loop on link {i}")
            nbrs[i].add(j)
            nbrs[j].add(i)
        return cls(n, tuple(frozenset(s) for s in nbrs))

    @classmethod
    def complete(cls, n: int) -> InterferenceGraph:
        return cls.from_edges(n, itertools.combinations(range(n), 2))

    @classmethod
    def edgeless(cls, n: int) -> InterferenceGraph:
        return cls.from_edges(n, ())

    @classmethod
    def star(cls, leaves: int) -> InterferenceGraph:
        """Star with center link 0 and leaves ``1..leaves``."""
        return cls.from_edges(leaves + 1, ((0, j) for j in range(1, leaves + 1)))

    @classmethod
    def random(cls, n: int, p: float, rng: np.random.Generator) -> InterferenceGraph:
        """Erdos-Renyi graph G(n, p)."""
        pairs = itertools.combinations(range(n), 2)
        return cls.from_edges(n, (e for e in pairs if rng.random() < p))

    def edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for i in range(self.n) for j in self.neighbors[i] if i < j)

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.neighbors[i]

    @cached_property
    def masks(self) -> tuple[int, ...]:
        """Neighbor sets as integer bitmasks."""
        return tuple(sum(1 << j for j in nb) for nb in self.neighbors)

    def induced(self, links: Sequence[int]) -> InterferenceGraph:
        """Subgraph induced by ``links``, relabelled in the given order."""
        pos = {v: k for k, v in enumerate(links)}
        return InterferenceGraph.from_edges(
            len(links),
            ((pos[i], pos[j]) for i in links for j in self.neighbors[i] if j in pos and pos[i] < pos[j]),
        )


def _check_links(graph: InterferenceGraph, links: Iterable[int]) -> list[int]:
    out = list(links)
    for i in out:
        if not 0 <= i < graph.n:
            raise ValueError(f"link index {i} out of range 0..{graph.n - 1}")
    return out


def _to_mask(links: Iterable[int]) -> int:
    m = 0
    for i in links:
        m |= 1 << i
    return m


def _members(mask: int) -> IndependentSet:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def is_independent(graph: InterferenceGraph, links: Iterable[int]) -> bool:
    members = _check_links(graph, links)
    s = _to_mask(members)
    return all(not (graph.masks[i] & s) for i in members)


def is_maximal(graph: InterferenceGraph, links: Iterable[int]) -> bool:
    """True when ``links`` is independent and no other link can be added."""
    members = _check_links(graph, links)
    if not is_independent(graph, members):
        return False
    s = _to_mask(members)
    return all(graph.masks[j] & s for j in range(graph.n) if not s >> j & 1)


def _maximal_masks(graph: InterferenceGraph) -> list[int]:
    # Bron-Kerbosch with pivoting on the complement graph.
    full = (1 << graph.n) - 1
    non_nbr = [full & ~graph.masks[v] & ~(1 << v) for v in range(graph.n)]
    found: list[int] = []

    def expand(r: int, p: int, x: int) -> None:
        if not p and not x:
            found.append(r)
            return
        px = p | x
        pivot = max(_members(px), key=lambda u: (p & non_nbr[u]).bit_count())
        cand = p & ~non_nbr[pivot]
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            expand(r | low, p & non_nbr[v], x & non_nbr[v])
            p &= ~low
            x |= low
            cand &= ~low

    expand(0, full, 0)
    return found


def enumerate_maximal_sets(graph: InterferenceGraph, cap: int = ENUMERATION_CAP) -> list[IndependentSet]:
    """Every maximal independent set, once each, in lexicographic order."""
    if graph.n > cap:
        raise SizeLimitError(f"{graph.n} links exceeds the enumeration cap of {cap}")
    return sorted(_members(m) for m in _maximal_masks(graph))


@lru_cache(maxsize=64)
def maximal_set_matrix(graph: InterferenceGraph, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """0/1 matrix with one row per maximal set, rows in lexicographic order."""
    sets = enumerate_maximal_sets(graph, cap)
    mat = np.zeros((len(sets), graph.n))
    for k, s in enumerate(sets):
        mat[k, list(s)] = 1.0
    mat.flags.writeable = False
    return mat


def max_weight_independent_set(
    graph: InterferenceGraph, weights: Sequence[float], cap: int = ENUMERATION_CAP
) -> IndependentSet:
    """Maximal set maximising total weight; ties go to the lexicographically smallest set."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (graph.n,):
        raise ValueError(f"expected {graph.n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    mat = maximal_set_matrix(graph, cap)
    k = int(np.argmax(mat @ w))
    return tuple(int(i) for i in np.flatnonzero(mat[k]))


def _mis_size(mask: int, nbr: Sequence[int], memo: dict[int, int]) -> int:
    if not mask:
        return 0
    hit = memo.get(mask)
    if hit is not None:
        return hit
    # branch on the vertex with most neighbours inside mask
    best_v, best_d = -1, -1
    m = mask
    while m:
        low = m & -m
        v = low.bit_length() - 1
        d = (nbr[v] & mask).bit_count()
        if d > best_d:
            best_v, best_d = v, d
        m &= ~low
    bit = 1 << best_v
    if best_d == 0:
        res = mask.bit_count()
    elif best_d == 1:
        # disjoint edges and isolated nodes: one endpoint per edge
        res = mask.bit_count() - sum((nbr[v] & mask).bit_count() for v in _members(mask)) // 2
    else:
        rest = mask & ~bit
        res = max(_mis_size(rest, nbr, memo), 1 + _mis_size(rest & ~nbr[best_v], nbr, memo))
    memo[mask] = res
    return res


def max_independent_size(graph: InterferenceGraph, links: Iterable[int]) -> int:
    """Cardinality of a maximum independent set inside the induced subgraph."""
    return _mis_size(_to_mask(_check_links(graph, links)), graph.masks, {})


def interference_degree(graph: InterferenceGraph, i: int, cap: int = ENUMERATION_CAP) -> int:
    """Size of the largest independent set within the closed neighbourhood of ``i``."""
    _check_links(graph, [i])
    if len(graph.neighbors[i]) + 1 > cap:
        raise SizeLimitError(f"neighbourhood of link {i} exceeds the enumeration cap of {cap}")
    return _mis_size(graph.masks[i] | 1 << i, graph.masks, {})


@dataclass(frozen=True)
class RemovalSequence:
    """Node removal order and the interference degree of each node when removed."""

    order: tuple[int, ...]
    step_degrees: tuple[int, ...]

    @property
    def value(self) -> int:
        return max(self.step_degrees)

    def priorities(self) -> tuple[int, ...]:
        """Reverse-removal priority ranks: the k-th removed link gets rank n+1-k."""
        n = len(self.order)
        ranks = [0] * n
        for k, link in enumerate(self.order):
            ranks[link] = n - k
        return tuple(ranks)


class _DegreeTable:
    """Memoised interference degree of ``v`` within the remaining-node mask."""

    def __init__(self, graph: InterferenceGraph, cap: int) -> None:
        self.nbr = graph.masks
        self.cap = cap
        self.mis_memo: dict[int, int] = {}
        self.cache: dict[tuple[int, int], int] = {}

    def __call__(self, remaining: int, v: int) -> int:
        key = (remaining, v)
        hit = self.cache.get(key)
        if hit is None:
            closed = (self.nbr[v] | 1 << v) & remaining
            if closed.bit_count() > self.cap:
                raise SizeLimitError(f"neighbourhood of link {v} exceeds the enumeration cap of {self.cap}")
            hit = self.cache[key] = _mis_size(closed, self.nbr, self.mis_memo)
        return hit


def _greedy_peel(graph: InterferenceGraph, cap: int) -> RemovalSequence:
    deg = _DegreeTable(graph, cap)
    remaining = (1 << graph.n) - 1
    order, steps = [], []
    while remaining:
        d, v = min((deg(remaining, v), v) for v in _members(remaining))
        order.append(v)
        steps.append(d)
        remaining &= ~(1 << v)
    return RemovalSequence(tuple(order), tuple(steps))


def _brute_peel(graph: InterferenceGraph, cap: int) -> RemovalSequence:
    deg = _DegreeTable(graph, cap)
    n = graph.n
    best: list = [n + 1, None]

    # depth-first over all orders in lexicographic order; prune branches that
    # cannot beat the incumbent, so the witness is the lexicographically first optimum
    def search(remaining: int, order: list[int], steps: list[int], worst: int) -> None:
        if not remaining:
            best[0], best[1] = worst, (tuple(order), tuple(steps))
            return
        for v in _members(remaining):
            d = deg(remaining, v)
            w = max(worst, d)
            if w >= best[0]:
                continue
            order.append(v)
            steps.append(d)
            search(remaining & ~(1 << v), order, steps, w)
            order.pop()
            steps.pop()

    search((1 << n) - 1, [], [], 0)
    return RemovalSequence(*best[1])


def compute_delta(
    graph: InterferenceGraph, mode: str = "greedy", cap: int = ENUMERATION_CAP
) -> tuple[int, RemovalSequence]:
    """Min over removal orders of the max per-step interference degree.

    ``greedy`` peels a node of minimum current interference degree at each
    step (lowest index on ties).  ``brute`` searches all ``n!`` orders and is
    limited to ``n <= 8``.
    """
    if mode == "greedy":
        seq = _greedy_peel(graph, cap)
    elif mode == "brute":
        if graph.n > BRUTE_DELTA_CAP:
            raise SizeLimitError(f"brute-force delta limited to {BRUTE_DELTA_CAP} links, got {graph.n}")
        seq = _brute_peel(graph, cap)
    else:
        raise ValueError(f"unknown delta mode {mode!r}")
    return seq.value, seq
