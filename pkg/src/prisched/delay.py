"""Large-deviations overflow exponents and delay-aware priorities.

For a link with log-MGF ``L_i`` competing against a set ``H`` of links that
always win contention, the overflow exponent is the positive root of

    F(theta) = L_i(theta) + min_{0 <= u <= theta} [sum_{j in H} L_j(u) - u].

``F`` is convex with ``F(0) = 0`` and ``F'(0) = a_i + sum_H a_j - 1``, so under
positive drift margin there is exactly one positive root (or none, which is
reported as ``inf``).  Arrival processes must be independent across links.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from prisched.engine import PrioritySpec, check_ranks, run
from prisched.graph import InterferenceGraph
from prisched.traffic import ArrivalModel

THETA_CAP = 64.0
ROOT_TOL = 1e-12
MIN_EVENTS = 50


def _require_independent(models: Sequence[ArrivalModel]) -> None:
    for m in models:
        if not getattr(m, "independent", True):
            raise ValueError("delay analysis needs independent arrivals; correlated group members are not supported")


def inner_inf(models_h: Sequence[ArrivalModel], theta: float) -> float:
    """``min over u in [0, theta]`` of ``sum_j L_j(u) - u``.

    The objective is convex, so the minimiser is found from the sign of its
    derivative: an endpoint when the derivative does not change sign,
    otherwise the derivative's root.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if theta == 0:
        return 0.0

    def g(u: float) -> float:
        return math.fsum(m.log_mgf(u) for m in models_h) - u

    def dg(u: float) -> float:
        return math.fsum(m.log_mgf_deriv(u) for m in models_h) - 1.0

    if dg(theta) <= 0:
        return g(theta)
    if dg(0.0) >= 0:
        return 0.0
    u = brentq(dg, 0.0, theta, xtol=ROOT_TOL)
    return min(g(u), g(theta), 0.0)


@dataclass(frozen=True)
class ExponentResult:
    """Overflow exponent of one link.

    ``value`` is ``inf`` when ``F`` stays negative up to ``THETA_CAP`` (a
    solver limit) and 0 with ``unstable`` set when the drift condition fails.
    """

    value: float
    residual: float
    bracket: tuple[float, float]
    competing_set: tuple[int, ...] = ()
    unstable: bool = False

    def admits(self, theta: float) -> bool:
        """Whether a target exponent ``theta`` is strictly below the achievable one."""
        if theta == 0:
            return True
        return not self.unstable and theta < self.value


def delay_exponent(
    model_i: ArrivalModel,
    models_h: Sequence[ArrivalModel],
    competing_set: Sequence[int] = (),
) -> ExponentResult:
    """Positive root of ``F`` for a link facing the always-preferred competitors ``models_h``."""
    _require_independent([model_i, *models_h])
    competing = tuple(competing_set)
    load = model_i.rate + math.fsum(m.rate for m in models_h)
    if load >= 1:
        return ExponentResult(0.0, 0.0, (0.0, 0.0), competing, unstable=True)

    def f(t: float) -> float:
        return model_i.log_mgf(t) + inner_inf(models_h, t)

    hi = 1.0
    while f(hi) <= 0:
        if hi >= THETA_CAP:
            return ExponentResult(math.inf, 0.0, (THETA_CAP, math.inf), competing)
        hi = min(2 * hi, THETA_CAP)
    lo = hi / 2
    while f(lo) > 0:
        lo /= 2
        if lo < 1e-300:
            raise ArithmeticError("could not find a negative point of F near 0")
    root = brentq(f, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps)
    return ExponentResult(float(root), abs(f(root)), (lo, hi), competing)


def sum_queue_exponent(model_i: ArrivalModel, models_n: Sequence[ArrivalModel]) -> float:
    """Exponent of one unit-rate queue fed by ``i`` and all its neighbours.

    Diagnostic only: this bound is far more pessimistic than ``delay_exponent``.
    """
    res = delay_exponent(_Aggregate((model_i, *models_n)), ())
    return 0.0 if res.unstable else res.value


@dataclass(frozen=True)
class _Aggregate:
    parts: tuple[ArrivalModel, ...]
    independent = True

    @property
    def rate(self) -> float:
        return math.fsum(m.rate for m in self.parts)

    def log_mgf(self, theta: float) -> float:
        return math.fsum(m.log_mgf(theta) for m in self.parts)

    def log_mgf_deriv(self, theta: float) -> float:
        return math.fsum(m.log_mgf_deriv(theta) for m in self.parts)


def link_exponent(
    graph: InterferenceGraph, models: Sequence[ArrivalModel], i: int, competing: Sequence[int]
) -> ExponentResult:
    competing = sorted(competing)
    for j in competing:
        if j not in graph.neighbors[i]:
            raise ValueError(f"link {j} is not a neighbour of link {i}")
    return delay_exponent(models[i], [models[j] for j in competing], competing)


def higher_priority_neighbours(graph: InterferenceGraph, ranks: Sequence[int], i: int) -> list[int]:
    return sorted(j for j in graph.neighbors[i] if ranks[j] < ranks[i])


def priority_exponents(
    graph: InterferenceGraph, models: Sequence[ArrivalModel], ranks: Sequence[int]
) -> list[ExponentResult]:
    ranks = check_ranks(ranks, graph.n)
    return [link_exponent(graph, models, i, higher_priority_neighbours(graph, ranks, i)) for i in range(graph.n)]


def worst_case_exponents(graph: InterferenceGraph, models: Sequence[ArrivalModel]) -> list[ExponentResult]:
    """Exponents guaranteed by any maximal scheduler (every neighbour competes)."""
    return [link_exponent(graph, models, i, graph.neighbors[i]) for i in range(graph.n)]


def _targets(graph: InterferenceGraph, theta: Sequence[float]) -> list[float]:
    theta = [float(t) for t in theta]
    if len(theta) != graph.n:
        raise ValueError(f"expected {graph.n} delay targets, got {len(theta)}")
    if any(not (math.isfinite(t) and t >= 0) for t in theta):
        raise ValueError("delay targets must be finite and nonnegative")
    return theta


def delay_region_check(
    graph: InterferenceGraph, models: Sequence[ArrivalModel], theta: Sequence[float], ranks: Sequence[int]
) -> bool:
    """True when every target is strictly below its exponent under fixed ``ranks``."""
    theta = _targets(graph, theta)
    return all(r.admits(t) for r, t in zip(priority_exponents(graph, models, ranks), theta))


@dataclass(frozen=True)
class DelayAssignment:
    """Ranks found by the greedy scan (``None`` if it got stuck) and whether they verify."""

    ranks: tuple[int, ...] | None
    feasible: bool
    exponents: tuple[float, ...] = ()
    stuck: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.feasible


def delay_priority(
    graph: InterferenceGraph,
    models: Sequence[ArrivalModel],
    theta: Sequence[float],
    zeros_first: bool = True,
) -> DelayAssignment:
    """Assign priorities from the lowest rank upward so each link meets its target.

    At each step a remaining link qualifies when its target is below the
    exponent it would get against neighbours whose targets are still
    positive; the lowest-index qualifying link takes the lowest free rank and
    its target is zeroed.  With ``zeros_first`` links with a zero target are
    given the lowest ranks up front; without it they compete in the same scan,
    which can make a feasible target look infeasible.
    """
    _require_independent(models)
    target = _targets(graph, theta)
    theta = list(target)
    n = graph.n
    ranks = [0] * n
    remaining = list(range(n))
    k = 1
    if zeros_first:
        for i in [i for i in remaining if theta[i] == 0]:
            ranks[i] = n + 1 - k
            remaining.remove(i)
            k += 1
    while remaining:
        chosen = None
        for i in remaining:
            rivals = [j for j in graph.neighbors[i] if theta[j] > 0]
            if link_exponent(graph, models, i, rivals).admits(theta[i]):
                chosen = i
                break
        if chosen is None:
            return DelayAssignment(None, False, stuck=tuple(remaining))
        ranks[chosen] = n + 1 - k
        theta[chosen] = 0.0
        remaining.remove(chosen)
        k += 1
    results = priority_exponents(graph, models, ranks)
    ok = all(r.admits(t) for r, t in zip(results, target))
    return DelayAssignment(tuple(ranks), ok, tuple(r.value for r in results))


def qos_to_theta(buffer: float, eps: float) -> float:
    """Exponent target for ``Pr(Q > buffer) <= eps``, i.e. ``-log(eps) / buffer``."""
    if not (buffer > 0 and 0 < eps < 1):
        raise ValueError("need buffer > 0 and 0 < eps < 1")
    return -math.log(eps) / buffer


@dataclass(frozen=True)
class OverflowEstimate:
    """Empirical tail of one link's stationary queue.

    ``slope`` is the least-squares slope of ``-log Pr(Q > B)`` against ``B``
    over thresholds with at least one exceedance; ``inf`` when no threshold
    was ever exceeded and ``nan`` when fewer than two points remain.
    """

    thresholds: tuple[int, ...]
    frequency: tuple[float, ...]
    events: tuple[int, ...]
    neg_log: tuple[float, ...]
    low_confidence: tuple[bool, ...]
    slope: float
    measured_slots: int


def fit_slope(thresholds: Sequence[float], frequency: Sequence[float]) -> float:
    pts = [(b, -math.log(f)) for b, f in zip(thresholds, frequency) if f > 0]
    if not pts:
        return math.inf
    if len(pts) < 2:
        return math.nan
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def estimate_overflow(
    graph: InterferenceGraph,
    spec: PrioritySpec,
    models: Sequence[ArrivalModel],
    i: int,
    thresholds: Sequence[int],
    slots: int,
    reps: int,
    seed: int,
) -> OverflowEstimate:
    """Pool replication overflow counts for link ``i`` and fit the tail slope."""
    thresholds = tuple(int(b) for b in thresholds)
    if list(thresholds) != sorted(set(thresholds)):
        raise ValueError("thresholds must be strictly increasing")
    if reps < 1:
        raise ValueError("need at least one replication")
    counts = np.zeros(len(thresholds), dtype=np.int64)
    measured = 0
    for r in range(reps):
        stats = run(graph, spec, models, slots, seed, thresholds, rep=r)
        counts += stats.overflow_counts[i]
        measured += stats.measured_slots
    freq = counts / measured
    return OverflowEstimate(
        thresholds=thresholds,
        frequency=tuple(freq.tolist()),
        events=tuple(counts.tolist()),
        neg_log=tuple(-math.log(f) if f > 0 else math.inf for f in freq),
        low_confidence=tuple(bool(c < MIN_EVENTS) for c in counts),
        slope=fit_slope(thresholds, freq),
        measured_slots=measured,
    )
