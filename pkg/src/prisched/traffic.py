"""Per-link arrival processes with closed-form log moment generating functions.

Every model draws exactly one uniform double per slot from its stream, so a
block of ``k`` slots drawn at once equals ``k`` single-slot draws.  That keeps
the fast simulator and the single-step API on identical sample paths.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

THETA_CAP = 60.0


class ArrivalModel:
    """Interface shared by all arrival models.

    Subclasses provide ``rate``, ``bound``, ``support``, ``log_mgf`` and
    ``log_mgf_deriv``, plus ``stream(rng)``.
    """

    independent = True
    rate: float
    bound: int

    def support(self) -> tuple[int, int]:
        raise NotImplementedError

    def log_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def log_mgf_deriv(self, theta: float) -> float:
        raise NotImplementedError

    def stream(self, rng: np.random.Generator) -> ArrivalStream:
        raise NotImplementedError

    def legendre(self, mu: float) -> float:
        return legendre(self, mu)


def _check_bound(declared: int | None, natural: int) -> int:
    if declared is None:
        return natural
    if declared < natural:
        raise ValueError(f"bound {declared} is below the largest possible arrival {natural}")
    return int(declared)


@dataclass(frozen=True)
class Batch(ArrivalModel):
    """I.i.d. batch arrivals: ``values[k]`` packets with probability ``probs[k]``."""

    values: tuple[int, ...]
    probs: tuple[float, ...]
    bound: int = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        values = tuple(int(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        if len(values) != len(probs) or not values:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(v < 0 for v in values):
            raise ValueError("arrival values must be nonnegative")
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        total = math.fsum(probs)
        if abs(total - 1) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "bound", _check_bound(self.bound, max(values)))

    @property
    def rate(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def support(self) -> tuple[int, int]:
        live = [v for v, p in zip(self.values, self.probs) if p > 0]
        return min(live), max(live)

    def _terms(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.array([v for v, p in zip(self.values, self.probs) if p > 0], dtype=float)
        lp = np.log([p for p in self.probs if p > 0])
        return v, lp

    def log_mgf(self, theta: float) -> float:
        if theta == 0:
            return 0.0
        v, lp = self._terms()
        return float(logsumexp(lp + theta * v))

    def log_mgf_deriv(self, theta: float) -> float:
        # mean of the exponentially tilted distribution
        v, lp = self._terms()
        x = lp + theta * v
        w = np.exp(x - x.max())
        return float(np.dot(w, v) / w.sum())

    def stream(self, rng: np.random.Generator) -> ArrivalStream:
        return _IIDStream(self, rng)


@dataclass(frozen=True)
class Bernoulli(ArrivalModel):
    """One packet with probability ``q``, otherwise none."""

    q: float

    def __post_init__(self) -> None:
        if not 0 <= self.q <= 1:
            raise ValueError(f"Bernoulli probability must lie in [0, 1], got {self.q}")
        object.__setattr__(self, "q", float(self.q))

    bound = 1

    @property
    def rate(self) -> float:
        return self.q

    @property
    def values(self) -> tuple[int, ...]:
        return (0, 1)

    @property
    def probs(self) -> tuple[float, ...]:
        return (1.0 - self.q, self.q)

    def support(self) -> tuple[int, int]:
        if self.q in (0.0, 1.0):
            return (int(self.q),) * 2
        return 0, 1

    def log_mgf(self, theta: float) -> float:
        q = self.q
        if theta == 0 or q == 0:
            return 0.0
        if theta > 0:
            return theta + math.log(q + (1 - q) * math.exp(-theta))
        return math.log1p(q * math.expm1(theta))

    def log_mgf_deriv(self, theta: float) -> float:
        q = self.q
        if q in (0.0, 1.0):
            return q
        if theta > 0:
            return q / (q + (1 - q) * math.exp(-theta))
        e = math.exp(theta)
        return q * e / (1 - q + q * e)

    def stream(self, rng: np.random.Generator) -> ArrivalStream:
        return _IIDStream(self, rng)


@dataclass(frozen=True)
class MarkovOnOff(ArrivalModel):
    """Two-state Markov source emitting ``batch_on`` packets per slot while on.

    The state is resampled at the start of every slot; the first slot's state
    is drawn from the stationary distribution.
    """

    p_on_to_off: float
    p_off_to_on: float
    batch_on: int = 1
    bound: int = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name in ("p_on_to_off", "p_off_to_on"):
            p = getattr(self, name)
            if not 0 < p <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {p}")
        if self.batch_on < 1:
            raise ValueError("batch_on must be at least 1")
        object.__setattr__(self, "bound", _check_bound(self.bound, self.batch_on))

    @property
    def p_on(self) -> float:
        return self.p_off_to_on / (self.p_on_to_off + self.p_off_to_on)

    @property
    def rate(self) -> float:
        return self.batch_on * self.p_on

    def support(self) -> tuple[int, int]:
        return 0, self.batch_on

    def _scaled(self, theta: float) -> tuple[float, float, float, float, float]:
        # tilted transition matrix [[1-b, b z], [a, (1-a) z]] with z = exp(theta c),
        # divided by z when theta > 0 to avoid overflow; returns (m00, m01, m10, m11, log scale)
        a, b, c = self.p_on_to_off, self.p_off_to_on, self.batch_on
        if theta > 0:
            s = math.exp(-theta * c)
            return (1 - b) * s, b, a * s, 1 - a, theta * c
        z = math.exp(theta * c)
        return 1 - b, b * z, a, (1 - a) * z, 0.0

    @staticmethod
    def _perron(m00: float, m01: float, m10: float, m11: float) -> tuple[float, float]:
        d = m11 - m00
        r = math.sqrt(d * d + 4 * m01 * m10)
        # rho - m00, written to avoid cancellation
        gap = (d + r) / 2 if d >= 0 else 2 * m01 * m10 / (r - d)
        return m00 + gap, gap

    def _log_rho_always_off(self, theta: float) -> float:
        # p_on_to_off = 1: rho^2 - (1-b) rho - b z = 0, solved in log space so
        # that large theta cannot underflow the scaled entries
        b, w = self.p_off_to_on, theta * self.batch_on
        half = 0.5 * (math.log(4 * b) + w) + 0.5 * math.log1p((1 - b) ** 2 * math.exp(-w) / (4 * b))
        return (np.logaddexp(math.log(1 - b), half) if b < 1 else half) - math.log(2)

    def log_mgf(self, theta: float) -> float:
        if theta == 0:
            return 0.0
        if self.p_on_to_off == 1 and theta > 0:
            return float(self._log_rho_always_off(theta))
        m00, m01, m10, m11, shift = self._scaled(theta)
        rho, _ = self._perron(m00, m01, m10, m11)
        return shift + math.log(rho)

    def log_mgf_deriv(self, theta: float) -> float:
        if self.p_on_to_off == 1 and theta > 0:
            b, c = self.p_off_to_on, self.batch_on
            log_rho = self._log_rho_always_off(theta)
            # differentiate rho^2 = (1-b) rho + b z
            ratio = math.exp(math.log(b) + theta * c - 2 * log_rho)
            return c * ratio / (2 - (1 - b) * math.exp(-log_rho))
        m00, m01, m10, m11, _ = self._scaled(theta)
        _, gap = self._perron(m00, m01, m10, m11)
        # c times the on-probability under the Perron left/right eigenvectors
        return self.batch_on * gap * gap / (m01 * m10 + gap * gap)

    def stream(self, rng: np.random.Generator) -> ArrivalStream:
        return _MarkovStream(self, rng)


def log_mgf(model: ArrivalModel, theta: float) -> float:
    return model.log_mgf(theta)


def legendre(model: ArrivalModel, mu: float) -> float:
    """Rate function ``sup_theta (theta*mu - log_mgf(theta))``.

    Returns ``inf`` outside ``[0, bound]`` and outside the support.  Interior
    points solve ``log_mgf_deriv(theta) = mu``; support endpoints take the
    limit, evaluated at ``|theta| = THETA_CAP``.
    """
    if not 0 <= mu <= model.bound:
        return math.inf
    lo, hi = model.support()
    if mu < lo or mu > hi:
        return math.inf
    if lo == hi:
        return 0.0

    def h(t: float) -> float:
        return t * mu - model.log_mgf(t)

    def slope(t: float) -> float:
        return model.log_mgf_deriv(t) - mu

    left, right = slope(-THETA_CAP), slope(THETA_CAP)
    if left >= 0:
        return max(h(-THETA_CAP), 0.0)
    if right <= 0:
        return max(h(THETA_CAP), 0.0)
    t = brentq(slope, -THETA_CAP, THETA_CAP, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return max(h(t), 0.0)


class ArrivalStream:
    """Single-owner sampler for one arrival model."""

    def draw(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def next(self) -> int:
        return int(self.draw(1)[0])


class _IIDStream(ArrivalStream):
    def __init__(self, model: Batch | Bernoulli, rng: np.random.Generator) -> None:
        self.rng = rng
        self.values = np.asarray(model.values, dtype=np.int64)
        self.cum = np.cumsum(model.probs)[:-1]
        self.q = model.q if isinstance(model, Bernoulli) else None

    def draw(self, k: int) -> np.ndarray:
        u = self.rng.random(k)
        if self.q is not None:
            return (u < self.q).astype(np.int64)
        return self.values[np.searchsorted(self.cum, u, side="right")]


class _MarkovStream(ArrivalStream):
    def __init__(self, model: MarkovOnOff, rng: np.random.Generator) -> None:
        self.model = model
        self.rng = rng
        self.on: bool | None = None

    def draw(self, k: int) -> np.ndarray:
        m = self.model
        out = np.zeros(k, dtype=np.int64)
        on = self.on
        stay_on, stay_off = 1 - m.p_on_to_off, 1 - m.p_off_to_on
        for t, u in enumerate(self.rng.random(k).tolist()):
            if on is None:
                on = u < m.p_on
            elif on:
                on = u < stay_on
            else:
                on = u >= stay_off
            if on:
                out[t] = m.batch_on
        self.on = on
        return out


def sample_arrivals(stream: ArrivalStream) -> int:
    """Arrivals for the stream's next slot."""
    return stream.next()


@dataclass(frozen=True, eq=False)
class CorrelatedGroup:
    """Bernoulli links driven by one shared uniform per slot.

    ``synchronized``: link j receives a packet iff ``u < q_j`` (arrivals coincide).
    ``staggered``: link j owns the arc ``[s_j, s_j + q_j)`` of the unit circle,
    ``s_j`` the running sum of earlier rates, so arrivals avoid each other as
    far as the total rate allows.  Marginals are Bernoulli(q_j) either way.

    ``tag`` names the group's random stream; distinct groups in one source
    need distinct tags.
    """

    rates: tuple[float, ...]
    mode: str = "synchronized"
    tag: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("synchronized", "staggered"):
            raise ValueError(f"unknown correlation mode {self.mode!r}")
        if any(not 0 <= q <= 1 for q in self.rates):
            raise ValueError("rates must lie in [0, 1]")
        object.__setattr__(self, "rates", tuple(float(q) for q in self.rates))

    def members(self) -> list[GroupMember]:
        return [GroupMember(self, k) for k in range(len(self.rates))]

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        u = rng.random(k)[:, None]
        q = np.asarray(self.rates)[None, :]
        if self.mode == "synchronized":
            hit = u < q
        else:
            start = np.concatenate(([0.0], np.cumsum(self.rates)[:-1]))[None, :]
            hit = np.mod(u - start, 1.0) < q
        return hit.astype(np.int64)


class GroupMember(Bernoulli):
    """Marginal view of one link inside a :class:`CorrelatedGroup`."""

    independent = False
    __eq__ = object.__eq__
    __hash__ = object.__hash__

    def __init__(self, group: CorrelatedGroup, index: int) -> None:
        super().__init__(group.rates[index])
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "index", index)

    def stream(self, rng: np.random.Generator) -> ArrivalStream:
        raise TypeError("correlated links are sampled jointly through ArrivalSource")


def link_rng(seed: int, rep: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep, 0, key]))


def scheduler_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep, 1]))


def _group_rng(seed: int, rep: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep, 2, key]))


class ArrivalSource:
    """Joint arrival sampler for a list of links.

    ``keys`` name the stream of each column; links that share a key (or a
    correlated group) across two sources see identical sample paths for the
    same ``(seed, rep)``, which is how coupled runs are built.
    """

    def __init__(
        self,
        models: Sequence[ArrivalModel],
        seed: int,
        rep: int = 0,
        keys: Sequence[int] | None = None,
    ) -> None:
        self.models = list(models)
        keys = list(range(len(self.models))) if keys is None else list(keys)
        if len(keys) != len(self.models):
            raise ValueError("one stream key per link is required")
        self.streams: list[tuple[int, ArrivalStream]] = []
        groups: dict[int, tuple[CorrelatedGroup, list[tuple[int, int]]]] = {}
        for col, (model, key) in enumerate(zip(self.models, keys)):
            if isinstance(model, GroupMember):
                grp, cols = groups.setdefault(id(model.group), (model.group, []))
                cols.append((col, model.index))
            else:
                self.streams.append((col, model.stream(link_rng(seed, rep, key))))
        tags = [grp.tag for grp, _ in groups.values()]
        if len(set(tags)) != len(tags):
            raise ValueError("correlated groups in one source need distinct tags")
        self.groups = [(grp, cols, _group_rng(seed, rep, grp.tag)) for grp, cols in groups.values()]

    def draw(self, k: int) -> np.ndarray:
        out = np.zeros((k, len(self.models)), dtype=np.int64)
        for col, stream in self.streams:
            out[:, col] = stream.draw(k)
        for grp, cols, rng in self.groups:
            block = grp.draw(rng, k)
            for col, idx in cols:
                out[:, col] = block[:, idx]
        return out
