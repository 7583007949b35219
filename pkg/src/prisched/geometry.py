"""Geometric networks and their interference graphs.

Three pairwise conflict models are supported:

* ``Primary`` -- links conflict iff they share a node.
* ``KHop(k)`` -- links conflict iff some endpoint of one lies strictly closer
  than ``k * tx_range`` to some endpoint of the other.
* ``Phy(snr_threshold, path_loss)`` -- with ``c = snr_threshold ** (1/path_loss)``,
  links i and j conflict iff ``d(tx_i, rx_j) < c * l_j`` or ``d(tx_j, rx_i) < c * l_i``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from prisched.graph import InterferenceGraph


@dataclass(frozen=True)
class GeometricNetwork:
    nodes: tuple[tuple[float, float], ...]
    links: tuple[tuple[int, int], ...]
    tx_range: float

    def __post_init__(self) -> None:
        for k, (tx, rx) in enumerate(self.links):
            if tx == rx:
                raise ValueError(f"link {k} has identical transmitter and receiver")
            if not (0 <= tx < len(self.nodes) and 0 <= rx < len(self.nodes)):
                raise ValueError(f"link {k} refers to a missing node")
            # small slack for positions read back from text
            if self.length(k) > self.tx_range * (1 + 1e-12):
                raise ValueError(f"link {k} is longer than the transmission range")

    def length(self, k: int) -> float:
        tx, rx = self.links[k]
        return math.dist(self.nodes[tx], self.nodes[rx])


@dataclass(frozen=True)
class Primary:
    pass


@dataclass(frozen=True)
class KHop:
    k: float

    def __post_init__(self) -> None:
        if not self.k >= 1:
            raise ValueError(f"K-hop model needs K >= 1, got {self.k}")


@dataclass(frozen=True)
class Phy:
    snr_threshold: float
    path_loss: float

    def __post_init__(self) -> None:
        if not (self.snr_threshold > 0 and self.path_loss > 0):
            raise ValueError("PHY model needs a positive SNR threshold and path-loss exponent")

    @property
    def c(self) -> float:
        return self.snr_threshold ** (1.0 / self.path_loss)


InterferenceModel = Primary | KHop | Phy


def generate_network(
    n_nodes: int, area_side: float, tx_range: float, link_density: float, seed: int
) -> GeometricNetwork:
    """Uniform node placement with directed links sampled among in-range pairs.

    Every ordered in-range pair ``(u, v)`` becomes a link independently with
    probability ``link_density``.  An empty link set is returned with a warning.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    if not tx_range > 0:
        raise ValueError("tx_range must be positive")
    if not 0 < link_density <= 1:
        raise ValueError("link_density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, area_side, size=(n_nodes, 2))
    nodes = tuple((float(x), float(y)) for x, y in pos)
    links = []
    for u in range(n_nodes):
        for v in range(n_nodes):
            if u != v and math.dist(nodes[u], nodes[v]) <= tx_range and rng.random() < link_density:
                links.append((u, v))
    if not links:
        warnings.warn("generated network has no feasible links", RuntimeWarning, stacklevel=2)
    return GeometricNetwork(nodes, tuple(links), float(tx_range))


def _conflict(net: GeometricNetwork, i: int, j: int, model: InterferenceModel) -> bool:
    ti, ri = net.links[i]
    tj, rj = net.links[j]
    if isinstance(model, Primary):
        return bool({ti, ri} & {tj, rj})
    pts = net.nodes
    if isinstance(model, KHop):
        limit = model.k * net.tx_range
        return any(math.dist(pts[a], pts[b]) < limit for a in (ti, ri) for b in (tj, rj))
    if isinstance(model, Phy):
        c = model.c
        return math.dist(pts[ti], pts[rj]) < c * net.length(j) or math.dist(pts[tj], pts[ri]) < c * net.length(i)
    raise TypeError(f"unsupported interference model {model!r}")


def build_interference(net: GeometricNetwork, model: InterferenceModel) -> InterferenceGraph:
    n = len(net.links)
    if n == 0:
        raise ValueError("network has no links")
    edges = ((i, j) for i in range(n) for j in range(i + 1, n) if _conflict(net, i, j, model))
    return InterferenceGraph.from_edges(n, edges)
