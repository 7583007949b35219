"""Stability regions and priority synthesis from arrival rates.

Regions, all with strict inequalities (boundaries are excluded):

* ``A_min``  -- ``a_i + sum_{N_i} a_j < 1`` for every link (any maximal scheduler).
* ``A_p``    -- ``a_i + sum of a_j over higher-priority neighbours < 1`` (fixed ranks p).
* ``A``      -- union of ``A_p`` over all p, tested by peeling.
* ``A_max``  -- interior of the down-closed convex hull of the maximal sets.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from prisched.engine import RandomizedPriority, check_ranks, set_first_ranks
from prisched.graph import (
    BRUTE_DELTA_CAP,
    ENUMERATION_CAP,
    IndependentSet,
    InterferenceGraph,
    RemovalSequence,
    compute_delta,
    max_weight_independent_set,
    maximal_set_matrix,
)

REGIONS = ("A_min", "A_p", "A", "A_max")
MIN_EPSILON = 1e-4
# extra coverage requested from the LP so float round-off never dips below the target
_LP_MARGIN = 1e-9


class InfeasibleRates(ValueError):
    """Rates plus slack lie outside the achievable region; carries a dual certificate."""

    def __init__(self, message: str, weights: np.ndarray | None = None, demand: float | None = None):
        super().__init__(message)
        self.weights = weights
        self.demand = demand


class NonConvergence(RuntimeError):
    def __init__(self, message: str, best_coverage: np.ndarray):
        super().__init__(message)
        self.best_coverage = best_coverage


def _rates(graph: InterferenceGraph, a: Sequence[float]) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (graph.n,):
        raise ValueError(f"expected {graph.n} rates, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("rates must be finite and nonnegative")
    return a


def neighbourhood_loads(graph: InterferenceGraph, a: Sequence[float]) -> np.ndarray:
    a = _rates(graph, a)
    return np.array([a[i] + sum(a[j] for j in graph.neighbors[i]) for i in range(graph.n)])


def priority_loads(graph: InterferenceGraph, a: Sequence[float], ranks: Sequence[int]) -> np.ndarray:
    """Per-link ``a_i + sum of a_j`` over neighbours with a smaller rank."""
    a = _rates(graph, a)
    ranks = check_ranks(ranks, graph.n)
    return np.array(
        [a[i] + sum(a[j] for j in graph.neighbors[i] if ranks[j] < ranks[i]) for i in range(graph.n)]
    )


@dataclass(frozen=True)
class Membership:
    member: bool
    witness: object = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.member


def in_a_min(graph: InterferenceGraph, a: Sequence[float]) -> Membership:
    loads = neighbourhood_loads(graph, a)
    bad = [i for i in range(graph.n) if not loads[i] < 1]
    return Membership(not bad, bad or None, f"worst neighbourhood load {loads.max():.6g}")


def in_a_p(graph: InterferenceGraph, a: Sequence[float], ranks: Sequence[int]) -> Membership:
    loads = priority_loads(graph, a, ranks)
    bad = [i for i in range(graph.n) if not loads[i] < 1]
    return Membership(not bad, bad or None, f"worst priority load {loads.max():.6g}")


def in_a(graph: InterferenceGraph, a: Sequence[float]) -> Membership:
    """Peeling test: repeatedly zero a positive-rate link whose neighbourhood load is below 1.

    Zeroing only lowers other loads, so the lowest-index choice never blocks
    success.  The witness is the peel order.
    """
    a = _rates(graph, a).copy()
    order = []
    while True:
        live = [i for i in range(graph.n) if a[i] > 0]
        if not live:
            return Membership(True, tuple(order))
        for i in live:
            if a[i] + sum(a[j] for j in graph.neighbors[i]) < 1:
                a[i] = 0.0
                order.append(i)
                break
        else:
            return Membership(False, tuple(order), f"stuck with positive links {live}")


def max_slack(graph: InterferenceGraph, a: Sequence[float], cap: int = ENUMERATION_CAP) -> float:
    """Largest ``eps`` with ``a + eps`` in the convex hull of maximal sets (may be <= 0)."""
    a = _rates(graph, a)
    mat = maximal_set_matrix(graph, cap)
    k = len(mat)
    # variables (x_1..x_k, eps): maximise eps
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-mat.T, np.ones((graph.n, 1))])
    a_ub = np.vstack([a_ub, np.concatenate([np.ones(k), [0.0]])])
    b_ub = np.concatenate([-a, [1.0]])
    bounds = [(0, None)] * k + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"slack LP failed: {res.message}")
    return float(-res.fun)


def in_a_max(graph: InterferenceGraph, a: Sequence[float], cap: int = ENUMERATION_CAP) -> Membership:
    slack = max_slack(graph, a, cap)
    return Membership(slack > 0, slack, f"max uniform slack {slack:.6g}")


def region_membership(
    graph: InterferenceGraph, a: Sequence[float], which: str, ranks: Sequence[int] | None = None
) -> Membership:
    if which == "A_min":
        return in_a_min(graph, a)
    if which == "A_p":
        if ranks is None:
            raise ValueError("A_p membership needs priority ranks")
        return in_a_p(graph, a, ranks)
    if which == "A":
        return in_a(graph, a)
    if which == "A_max":
        return in_a_max(graph, a)
    raise ValueError(f"unknown region {which!r}; expected one of {REGIONS}")


@dataclass(frozen=True)
class PriorityAssignment:
    """Output of a priority-assignment algorithm and its verification."""

    ranks: tuple[int, ...]
    feasible: bool
    loads: tuple[float, ...] = ()
    violated: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.feasible


def stable_priority(graph: InterferenceGraph, a: Sequence[float]) -> PriorityAssignment:
    """Assign ranks n, n-1, ..., 1 to links of minimum remaining neighbourhood load.

    The result is verified against ``A_p``; failure means ``a`` is outside ``A``.
    """
    a = _rates(graph, a)
    n = graph.n
    remaining = set(range(n))
    ranks = [0] * n
    for k in range(1, n + 1):
        s = min(remaining, key=lambda i: (a[i] + sum(a[j] for j in graph.neighbors[i] if j in remaining), i))
        ranks[s] = n + 1 - k
        remaining.remove(s)
    loads = priority_loads(graph, a, ranks)
    bad = tuple(i for i in range(n) if not loads[i] < 1)
    return PriorityAssignment(tuple(ranks), not bad, tuple(loads.tolist()), bad)


def _distribution(dist) -> list[tuple[tuple[int, ...], float]]:
    if isinstance(dist, RandomizedPriority):
        return list(zip(dist.ranks, dist.probs))
    return [(tuple(r), float(p)) for r, p in dist]


def local_priority_probability(
    graph: InterferenceGraph, dist, i: int, rivals: Sequence[int]
) -> float:
    """``Pr(p_i < p_j for all j in rivals)`` under a finite priority distribution."""
    return math.fsum(p for r, p in _distribution(dist) if all(r[i] < r[j] for j in rivals))


def check_local_priority(
    graph: InterferenceGraph,
    a: Sequence[float],
    dist,
    subsets: Sequence[Sequence[int]] | None = None,
) -> bool:
    """Sufficient stability condition for i.i.d. random priorities.

    For every link, ``a_i + sum_{N_i \\ S_i} a_j < Pr(p_i < p_j for all j in S_i)``.
    ``subsets`` defaults to ``S_i = N_i``.
    """
    a = _rates(graph, a)
    pairs = _distribution(dist)
    if abs(math.fsum(p for _, p in pairs) - 1) > 1e-9:
        raise ValueError("priority distribution is not normalised")
    for r, _ in pairs:
        check_ranks(r, graph.n)
    if subsets is None:
        subsets = [sorted(nb) for nb in graph.neighbors]
    for i in range(graph.n):
        s = set(subsets[i])
        if not s <= graph.neighbors[i]:
            raise ValueError(f"S_{i} = {sorted(s)} is not a subset of the neighbours of link {i}")
        load = a[i] + sum(a[j] for j in graph.neighbors[i] - s)
        if not load < local_priority_probability(graph, pairs, i, sorted(s)):
            return False
    return True


@dataclass(frozen=True)
class Decomposition:
    """Convex combination of maximal sets covering ``a + eps``.

    ``coverage_factor`` is 1 for exact solves; approximate solves may only
    guarantee ``coverage >= coverage_factor * (a + eps)``.
    """

    sets: tuple[IndependentSet, ...]
    weights: tuple[float, ...]
    epsilon: float
    target: tuple[float, ...]
    coverage: tuple[float, ...]
    coverage_factor: float = 1.0
    oracle_calls: int = 0
    budget: tuple[float, float] | None = None

    @property
    def residuals(self) -> tuple[float, ...]:
        return tuple(c - t for c, t in zip(self.coverage, self.target))

    def priority_distribution(self, n: int | None = None) -> RandomizedPriority:
        """Each set's members get the top ranks, so each member is locally highest."""
        n = len(self.target) if n is None else n
        return RandomizedPriority(tuple(set_first_ranks(s, n) for s in self.sets), self.weights)


def _coverage(graph: InterferenceGraph, sets: Sequence[IndependentSet], weights: Sequence[float]) -> np.ndarray:
    cov = np.zeros(graph.n)
    for s, w in zip(sets, weights):
        cov[list(s)] += w
    return cov


def caratheodory_reduce(columns: np.ndarray, weights: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Shrink a nonnegative combination to at most ``rows + 1`` terms.

    ``columns`` is ``(rows, terms)``.  Moves along null-space directions of the
    stacked ``[columns; 1]`` system, so the combined vector and the total
    weight are unchanged up to round-off.
    """
    w = np.array(weights, dtype=float)
    rows = columns.shape[0]
    while True:
        live = np.flatnonzero(w > tol)
        w[w <= tol] = 0.0
        if len(live) <= rows + 1:
            return w
        system = np.vstack([columns[:, live], np.ones(len(live))])
        z = null_space(system)[:, 0]
        if not np.any(z > 0):
            z = -z
        pos = z > 0
        ratios = w[live][pos] / z[pos]
        hit = live[pos][np.argmin(ratios)]
        w[live] = w[live] - ratios.min() * z
        # zero the blocking coordinate exactly
        w[hit] = 0.0
        w[w < 0] = 0.0


def _finish(
    graph: InterferenceGraph,
    mat: np.ndarray,
    x: np.ndarray,
    a: np.ndarray,
    eps: float,
    factor: float,
    calls: int = 0,
    budget: tuple[float, float] | None = None,
) -> Decomposition:
    # pad the unused probability mass onto the first maximal set
    x = np.clip(x, 0.0, None)
    total = x.sum()
    if total < 1:
        x[0] += 1 - total
    x = x / x.sum()
    theta = caratheodory_reduce(mat.T, x)
    theta = theta / theta.sum()
    keep = np.flatnonzero(theta > 0)
    sets = tuple(tuple(int(i) for i in np.flatnonzero(mat[k])) for k in keep)
    weights = tuple(float(theta[k]) for k in keep)
    target = a + eps
    return Decomposition(
        sets=sets,
        weights=weights,
        epsilon=float(eps),
        target=tuple(target.tolist()),
        coverage=tuple(_coverage(graph, sets, weights).tolist()),
        coverage_factor=factor,
        oracle_calls=calls,
        budget=budget,
    )


def _min_budget(mat: np.ndarray, b: np.ndarray):
    res = linprog(np.ones(len(mat)), A_ub=-mat.T, b_ub=-b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"covering LP failed: {res.message}")
    return res


def decompose_exact(
    graph: InterferenceGraph, a: Sequence[float], eps: float | None = None, cap: int = ENUMERATION_CAP
) -> Decomposition:
    """Weights on maximal sets with ``sum = 1`` and coverage ``>= a + eps`` componentwise.

    Solves ``min 1'x  s.t.  M x >= a + eps, x >= 0`` over the enumerated
    maximal sets, pads leftover mass onto the first set, and reduces the
    support to at most ``n + 1`` sets.  ``eps`` defaults to half the largest
    feasible slack, floored at ``MIN_EPSILON``.
    """
    a = _rates(graph, a)
    mat = maximal_set_matrix(graph, cap)
    if eps is None:
        eps = max(max_slack(graph, a, cap) / 2, MIN_EPSILON)
    if not eps > 0:
        raise ValueError("slack eps must be positive")
    b = a + eps
    res = _min_budget(mat, b + _LP_MARGIN)
    if res.fun > 1:
        res = _min_budget(mat, b)
    if res.fun > 1 + 1e-12:
        y = -np.asarray(res.ineqlin.marginals)
        raise InfeasibleRates(
            f"a + eps needs total weight {res.fun:.9g} > 1: link weights y give every maximal set "
            f"weight <= 1 but the demand weight {float(b @ y):.9g}",
            weights=y,
            demand=float(b @ y),
        )
    x = np.asarray(res.x, dtype=float)
    cov = mat.T @ x
    short = np.max(b / np.maximum(cov, 1e-300))
    if short > 1:
        x = x * short
    dec = _finish(graph, mat, x, a, eps, 1.0, budget=(float(res.fun), float(res.fun)))
    if any(r < 0 for r in dec.residuals):
        raise InfeasibleRates(f"a + eps lies on the boundary of the achievable region (eps={eps})")
    return dec


Oracle = Callable[[np.ndarray], Sequence[int]]


def decompose_approx(
    graph: InterferenceGraph,
    a: Sequence[float],
    eps: float,
    tol: float,
    oracle: Oracle | None = None,
    max_calls: int = 200_000,
) -> Decomposition:
    """Approximate decomposition using only a max-weight independent set oracle.

    Multiplicative weights over links: each round asks the oracle for the set
    maximising ``sum_i lam_i m_i / (a_i + eps)``, adds it to ``x`` in an amount
    that raises no link's relative coverage by more than one unit, and
    discounts each covered link's multiplier by ``exp(-eta * increment)``.
    The minimal budget ``t = 1'x`` is bracketed between the dual bound from
    the current multipliers and the scaled primal ``1'x / min_i coverage_i``;
    the loop stops when ``upper <= lower / (1 - tol)``.  The dual bound
    assumes an exact oracle.

    Raises :class:`InfeasibleRates` when even the relaxed target needs a
    budget above 1 and :class:`NonConvergence` past ``max_calls`` oracle calls.
    """
    a = _rates(graph, a)
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if not eps > 0:
        raise ValueError("slack eps must be positive")
    if oracle is None:
        def oracle(w: np.ndarray) -> Sequence[int]:
            return max_weight_independent_set(graph, w)

    n = graph.n
    b = a + eps
    eta = tol / 2
    lam = np.full(n, 1.0 / n)
    cov = np.zeros(n)
    picks: dict[IndependentSet, float] = {}
    lower, upper = 0.0, math.inf
    calls = 0
    while upper > lower / (1 - tol):
        if calls >= max_calls:
            raise NonConvergence(
                f"no {tol}-approximate budget after {calls} oracle calls (bracket [{lower:.6g}, {upper:.6g}])",
                best_coverage=cov / max(sum(picks.values()), 1e-300),
            )
        w = lam / b
        m = tuple(sorted(int(i) for i in oracle(w)))
        calls += 1
        mvec = np.zeros(n)
        mvec[list(m)] = 1.0
        best = float(w @ mvec)
        if best > 0:
            lower = max(lower, float(lam.sum() / best))
        step = float(np.min(b[list(m)]))
        picks[m] = picks.get(m, 0.0) + step
        cov += step * mvec
        ratio = float(np.min(cov / b))
        if ratio > 0:
            upper = min(upper, sum(picks.values()) / ratio)
        lam *= np.exp(-eta * step * mvec / b)
        lam /= lam.sum()

    ratio = float(np.min(cov / b))
    spend = sum(picks.values()) / ratio  # budget that covers b exactly
    if spend > 1 / (1 - tol):
        raise InfeasibleRates(
            f"approximate budget {spend:.6g} exceeds 1/(1-tol); a + eps is outside the relaxed region"
        )
    order = sorted(picks)
    mat = np.zeros((len(order), n))
    for k, s in enumerate(order):
        mat[k, list(s)] = 1.0
    x = np.array([picks[s] for s in order]) / ratio
    if spend > 1:
        x = x / spend
    elif spend * (1 + _LP_MARGIN) <= 1:
        x = x * (1 + _LP_MARGIN)
    dec = _finish(graph, mat, x, a, eps, 1.0, calls, (lower, upper))
    # record the coverage actually achieved, never more than the full target
    factor = min(1.0, min(c / t for c, t in zip(dec.coverage, dec.target)))
    return replace(dec, coverage_factor=factor)


@dataclass(frozen=True)
class EfficiencyFloor:
    value: float
    delta: int
    witness: RemovalSequence

    @property
    def ranks(self) -> tuple[int, ...]:
        """Reverse-removal priorities: the k-th removed link gets rank n+1-k."""
        return self.witness.priorities()


def efficiency_floor(graph: InterferenceGraph, mode: str | None = None, cap: int = ENUMERATION_CAP) -> EfficiencyFloor:
    """``1/delta`` with its witness removal order; brute force when n <= 8 unless told otherwise."""
    if mode is None:
        mode = "brute" if graph.n <= BRUTE_DELTA_CAP else "greedy"
    delta, seq = compute_delta(graph, mode, cap)
    return EfficiencyFloor(1.0 / delta, delta, seq)
