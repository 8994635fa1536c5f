from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from graphbo.graph import LabeledDigraph

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LABELS = ("input", "output", "conv1x1", "conv3x3", "maxpool3x3")


@st.composite
def dags(draw, max_nodes: int = 8, max_edges: int = 12, labels=LABELS, min_nodes: int = 1):
    """Arbitrary labelled DAGs; node order is a random permutation of a topological order."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=max_edges)) if pairs else []
    perm = draw(st.permutations(range(n)))
    node_labels = [draw(st.sampled_from(labels)) for _ in range(n)]
    return LabeledDigraph(tuple(node_labels), tuple((perm[u], perm[v]) for u, v in chosen))


def random_dag(rng: np.random.Generator, max_nodes: int = 8, max_edges: int = 12, labels=LABELS) -> LabeledDigraph:
    n = int(rng.integers(1, max_nodes + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    k = int(rng.integers(0, min(max_edges, len(pairs)) + 1))
    picked = [pairs[i] for i in rng.choice(len(pairs), size=k, replace=False)] if k else []
    perm = rng.permutation(n)
    node_labels = tuple(labels[int(i)] for i in rng.integers(0, len(labels), size=n))
    return LabeledDigraph(node_labels, tuple((int(perm[u]), int(perm[v])) for u, v in picked))


def chain(*ops: str) -> LabeledDigraph:
    labels = ("input", *ops, "output")
    return LabeledDigraph(labels, tuple((i, i + 1) for i in range(len(labels) - 1)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = [
        v
        for reports in terminalreporter.stats.values()
        for r in reports
        if getattr(r, "when", None) == "call"
        for k, v in getattr(r, "user_properties", ())
        if k == "acceptance"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
