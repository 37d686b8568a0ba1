"""Shared fixtures and small graph builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from saf.graphs import Graph


def er_graph(rng: np.random.Generator, n: int, p: float = 0.15,
             classes: int = 2) -> Graph:
    """Seeded Erdos-Renyi graph with random labels and identity-ish features."""
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(rows.size) < p
    edges = np.column_stack((rows[keep], cols[keep]))
    labels = rng.integers(classes, size=n)
    features = rng.standard_normal((n, 4))
    return Graph(n, edges, labels, features, classes)


def complete_graph(n: int, labels, classes: int) -> Graph:
    rows, cols = np.triu_indices(n, k=1)
    edges = np.column_stack((rows, cols))
    return Graph(n, edges, np.asarray(labels), np.eye(n), classes)


@pytest.fixture
def path3() -> Graph:
    """The 3-node path 0-1-2 with alternating labels."""
    return Graph(3, [[0, 1], [1, 2]], [0, 1, 0], np.eye(3), 2)


@pytest.fixture
def single_edge() -> Graph:
    """Two nodes joined by one edge."""
    return Graph(2, [[0, 1]], [0, 1], np.eye(2), 2)


@pytest.fixture
def two_cliques() -> Graph:
    """Two disconnected 4-cliques, one class each."""
    edges = []
    for base in (0, 4):
        for i in range(4):
            for j in range(i + 1, 4):
                edges.append([base + i, base + j])
    labels = [0] * 4 + [1] * 4
    return Graph(8, edges, labels, np.eye(8), 2)
