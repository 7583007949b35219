from __future__ import annotations

import pytest
from hypothesis import settings

from oracles import G6_EDGES
from prisched.graph import InterferenceGraph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def g6() -> InterferenceGraph:
    return InterferenceGraph.from_edges(6, G6_EDGES)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(k: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
