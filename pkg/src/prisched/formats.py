"""Plain-text and CSV formats.  Every link number in a file is 1-based."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence

import numpy as np

from prisched.delay import ExponentResult
from prisched.engine import RunStats, check_ranks
from prisched.geometry import GeometricNetwork
from prisched.graph import InterferenceGraph
from prisched.synth import Decomposition


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _num(x: float) -> str:
    # repr round-trips exactly
    return repr(float(x))


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield no, body.split()


def _int(tok: str, no: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"expected an integer, got {tok!r}", no) from None


def _float(tok: str, no: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"expected a number, got {tok!r}", no) from None


def format_graph(graph: InterferenceGraph) -> str:
    out = [f"links {graph.n}"]
    out += [f"edge {i + 1} {j + 1}" for i, j in graph.edges()]
    return "\n".join(out) + "\n"


def parse_graph(text: str) -> InterferenceGraph:
    n = None
    edges: set[tuple[int, int]] = set()
    for no, tok in _lines(text):
        if tok[0] == "links" and len(tok) == 2:
            if n is not None:
                raise FormatError("repeated links line", no)
            n = _int(tok[1], no)
            if n < 1:
                raise FormatError("link count must be positive", no)
        elif tok[0] == "edge" and len(tok) == 3:
            if n is None:
                raise FormatError("edge before links line", no)
            i, j = _int(tok[1], no), _int(tok[2], no)
            if not (1 <= i <= n and 1 <= j <= n):
                raise FormatError(f"edge {i} {j} out of range 1..{n}", no)
            if i == j:
                raise FormatError(f"self-loop on link {i}", no)
            key = (min(i, j) - 1, max(i, j) - 1)
            if key in edges:
                raise FormatError(f"duplicate edge {i} {j}", no)
            edges.add(key)
        else:
            raise FormatError(f"unrecognised line {' '.join(tok)!r}", no)
    if n is None:
        raise FormatError("missing links line")
    return InterferenceGraph.from_edges(n, edges)


def format_network(net: GeometricNetwork) -> str:
    out = [f"range {_num(net.tx_range)}"]
    out += [f"node {k + 1} {_num(x)} {_num(y)}" for k, (x, y) in enumerate(net.nodes)]
    out += [f"link {k + 1} {tx + 1} {rx + 1}" for k, (tx, rx) in enumerate(net.links)]
    return "\n".join(out) + "\n"


def parse_network(text: str, tx_range: float | None = None) -> GeometricNetwork:
    """Nodes and links must be numbered 1, 2, ... in file order.

    The transmission range comes from ``tx_range``, else an optional
    ``range <r>`` line, else the longest link.
    """
    nodes: list[tuple[float, float]] = []
    links: list[tuple[int, int]] = []
    file_range = None
    for no, tok in _lines(text):
        if tok[0] == "range" and len(tok) == 2:
            file_range = _float(tok[1], no)
        elif tok[0] == "node" and len(tok) == 4:
            if links:
                raise FormatError("node after link lines", no)
            if _int(tok[1], no) != len(nodes) + 1:
                raise FormatError(f"expected node {len(nodes) + 1}", no)
            nodes.append((_float(tok[2], no), _float(tok[3], no)))
        elif tok[0] == "link" and len(tok) == 4:
            if _int(tok[1], no) != len(links) + 1:
                raise FormatError(f"expected link {len(links) + 1}", no)
            tx, rx = _int(tok[2], no), _int(tok[3], no)
            if not (1 <= tx <= len(nodes) and 1 <= rx <= len(nodes)):
                raise FormatError("link refers to an undefined node", no)
            links.append((tx - 1, rx - 1))
        else:
            raise FormatError(f"unrecognised line {' '.join(tok)!r}", no)
    if not links:
        raise FormatError("network has no links")
    r = tx_range if tx_range is not None else file_range
    if r is None:
        r = max(math.dist(nodes[a], nodes[b]) for a, b in links)
    return GeometricNetwork(tuple(nodes), tuple(links), float(r))


def format_priority(ranks: Sequence[int]) -> str:
    return "".join(f"priority {i + 1} {r}\n" for i, r in enumerate(ranks))


def parse_priority(text: str, n: int | None = None) -> tuple[int, ...]:
    found: dict[int, int] = {}
    for no, tok in _lines(text):
        if tok[0] != "priority" or len(tok) != 3:
            raise FormatError(f"unrecognised line {' '.join(tok)!r}", no)
        link, rank = _int(tok[1], no), _int(tok[2], no)
        if link in found:
            raise FormatError(f"link {link} listed twice", no)
        found[link] = rank
    n = len(found) if n is None else n
    if sorted(found) != list(range(1, n + 1)):
        raise FormatError(f"priority file must list links 1..{n} exactly once")
    return check_ranks([found[i] for i in range(1, n + 1)], n)


def format_decomposition(dec: Decomposition) -> str:
    n = len(dec.target)
    out = [f"links {n}", f"epsilon {_num(dec.epsilon)}", f"coverage_factor {_num(dec.coverage_factor)}"]
    if dec.oracle_calls:
        out.append(f"oracle_calls {dec.oracle_calls}")
    if dec.budget is not None:
        out.append(f"budget {_num(dec.budget[0])} {_num(dec.budget[1])}")
    for i in range(n):
        out.append(f"target {i + 1} {_num(dec.target[i])} residual {_num(dec.residuals[i])}")
    for k, (s, w) in enumerate(zip(dec.sets, dec.weights), start=1):
        out.append(f"set {k} weight {_num(w)} members {' '.join(str(i + 1) for i in s)}")
    return "\n".join(out) + "\n"


def parse_decomposition(text: str) -> Decomposition:
    """Inverse of :func:`format_decomposition`; coverage is recomputed from the sets."""
    n = None
    eps = None
    factor = 1.0
    calls = 0
    budget = None
    target: dict[int, float] = {}
    sets: list[tuple[int, ...]] = []
    weights: list[float] = []
    for no, tok in _lines(text):
        key = tok[0]
        if key == "links" and len(tok) == 2:
            n = _int(tok[1], no)
        elif key == "epsilon" and len(tok) == 2:
            eps = _float(tok[1], no)
        elif key == "coverage_factor" and len(tok) == 2:
            factor = _float(tok[1], no)
        elif key == "oracle_calls" and len(tok) == 2:
            calls = _int(tok[1], no)
        elif key == "budget" and len(tok) == 3:
            budget = (_float(tok[1], no), _float(tok[2], no))
        elif key == "target" and len(tok) in (3, 5):
            target[_int(tok[1], no)] = _float(tok[2], no)
        elif key == "set" and len(tok) >= 5 and tok[2] == "weight" and tok[4] == "members":
            if _int(tok[1], no) != len(sets) + 1:
                raise FormatError(f"expected set {len(sets) + 1}", no)
            if n is None:
                raise FormatError("set before links line", no)
            members = tuple(sorted(_int(t, no) - 1 for t in tok[5:]))
            if any(not 0 <= i < n for i in members) or len(set(members)) != len(members):
                raise FormatError("set members out of range or repeated", no)
            sets.append(members)
            weights.append(_float(tok[3], no))
        else:
            raise FormatError(f"unrecognised line {' '.join(tok)!r}", no)
    if n is None or eps is None:
        raise FormatError("decomposition needs links and epsilon lines")
    if sorted(target) != list(range(1, n + 1)):
        raise FormatError(f"decomposition must give a target for links 1..{n}")
    cov = np.zeros(n)
    for s, w in zip(sets, weights):
        cov[list(s)] += w
    return Decomposition(
        sets=tuple(sets),
        weights=tuple(weights),
        epsilon=eps,
        target=tuple(target[i] for i in range(1, n + 1)),
        coverage=tuple(cov.tolist()),
        coverage_factor=factor,
        oracle_calls=calls,
        budget=budget,
    )


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell(x: float) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return ""
    return f"{x:.10g}"


def summary_csv(stats: RunStats) -> str:
    header = ["link", "rate_in", "rate_out", "mean_q", "max_q", "drift"] + [f"ovf_B{t}" for t in stats.thresholds]
    rows = []
    for i in range(len(stats.rate_in)):
        row = [i + 1, stats.rate_in[i], stats.rate_out[i], stats.mean_q[i], stats.max_q[i], stats.drift[i]]
        row += list(stats.overflow[i])
        rows.append([_cell(x) for x in row])
    return _csv(header, rows)


def trace_csv(stats: RunStats) -> str:
    if stats.queues is None or stats.schedules is None:
        raise ValueError("run was not recorded; pass record=True")
    n = stats.queues.shape[1]
    rows = (
        (t + 1, i + 1, int(stats.queues[t, i]), stats.schedules[t] >> i & 1)
        for t in range(stats.slots)
        for i in range(n)
    )
    return _csv(["slot", "link", "queue", "scheduled"], rows)


def exponent_csv(results: Sequence[ExponentResult], slopes: Sequence[float] | None = None) -> str:
    rows = []
    for i, r in enumerate(results):
        value = r.value
        slope = slopes[i] if slopes is not None else math.nan
        if math.isfinite(slope) and math.isfinite(value) and value > 0:
            gap = abs(slope - value) / value
        else:
            gap = math.nan
        rows.append(
            [
                i + 1,
                " ".join(str(j + 1) for j in r.competing_set),
                "unstable" if r.unstable else _cell(value),
                _cell(r.residual),
                _cell(slope),
                _cell(gap),
            ]
        )
    return _csv(["link", "competing_set", "exponent", "residual", "empirical_slope", "relative_gap"], rows)
