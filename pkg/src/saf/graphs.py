"""Graph representation, normalized operators, and homophily metrics.

Conventions used throughout:

* Graphs are simple and undirected.  Edges are stored canonically as
  ``(min, max)`` pairs in lexicographic order; duplicates and self-loops
  are rejected at construction time.
* Degree-0 nodes get a 0 entry in ``D^{-1/2}``, so their rows/columns of
  the normalized adjacency are zero and their normalized-Laplacian
  diagonal entry is 0.  This keeps every eigenvalue inside [0, 2].
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateLabels, EmptyEdgeSet, ValidationError

__all__ = [
    "Graph",
    "normalized_adjacency",
    "normalized_laplacian",
    "edge_homophily",
    "class_homophily",
    "adjusted_homophily",
    "geodesic_distances_from",
    "adjacency_lists",
    "degrees",
]


@dataclass(frozen=True)
class Graph:
    """An undirected attributed graph with node labels.

    Parameters
    ----------
    num_nodes:
        Node count N.  Nodes are indexed 0..N-1.
    edges:
        Array-like of unordered node pairs, shape (E, 2).  Canonicalized
        to (min, max) rows in sorted order on construction.
    labels:
        Integer class id per node, each in [0, num_classes).
    features:
        Real feature matrix of shape (N, F).
    num_classes:
        Class count C.
    """

    num_nodes: int
    edges: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
        labels = np.asarray(self.labels, dtype=np.int64)
        features = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)
        self._validate()

    def _validate(self) -> None:
        n, edges = self.num_nodes, self.edges
        if n < 0:
            raise ValidationError("num_nodes must be non-negative")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValidationError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValidationError("self-loops are not allowed")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise ValidationError("duplicate undirected edge")
        if self.labels.shape != (n,):
            raise ValidationError(
                f"labels must have shape ({n},), got {self.labels.shape}"
            )
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValidationError(
                f"features must have shape ({n}, F), got {self.features.shape}"
            )
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValidationError("label out of range")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


def degrees(graph: Graph) -> np.ndarray:
    """Node degrees as an int64 vector."""
    return np.bincount(graph.edges.ravel(), minlength=graph.num_nodes)


def adjacency_lists(graph: Graph) -> list[np.ndarray]:
    """Neighbor index arrays per node (sorted ascending)."""
    neigh: list[list[int]] = [[] for _ in range(graph.num_nodes)]
    for i, j in graph.edges:
        neigh[i].append(j)
        neigh[j].append(i)
    return [np.array(sorted(v), dtype=np.int64) for v in neigh]


def _inv_sqrt_degrees(deg: np.ndarray) -> np.ndarray:
    out = np.zeros(len(deg), dtype=np.float64)
    pos = deg > 0
    out[pos] = 1.0 / np.sqrt(deg[pos].astype(np.float64))
    return out


def normalized_adjacency(graph: Graph, add_self_loops: bool = False) -> sp.csr_array:
    """Degree-normalized adjacency ``D^{-1/2} A D^{-1/2}``.

    With ``add_self_loops`` the identity is added before normalization,
    i.e. the operator is ``D~^{-1/2} (A + I) D~^{-1/2}``.

    The matrix is assembled from explicit symmetric entry pairs that
    share one computed weight, so symmetry is bit-exact.
    """
    n = graph.num_nodes
    deg = degrees(graph)
    if add_self_loops:
        deg = deg + 1
    dis = _inv_sqrt_degrees(deg)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    if graph.num_edges:
        i, j = graph.edges[:, 0], graph.edges[:, 1]
        w = dis[i] * dis[j]
        rows.extend([i, j])
        cols.extend([j, i])
        vals.extend([w, w])
    if add_self_loops:
        idx = np.arange(n, dtype=np.int64)
        rows.append(idx)
        cols.append(idx)
        vals.append(dis * dis)
    if not rows:
        return sp.csr_array((n, n), dtype=np.float64)
    coo = sp.coo_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return coo.tocsr()


def normalized_laplacian(graph: Graph) -> sp.csr_array:
    """Normalized Laplacian ``I - D^{-1/2} A D^{-1/2}``.

    Symmetric positive semi-definite with eigenvalues in [0, 2].  The
    diagonal entry of a degree-0 node is 0 by convention, which keeps
    the spectrum inside [0, 2] without special-casing downstream.
    """
    n = graph.num_nodes
    deg = degrees(graph)
    adj = normalized_adjacency(graph, add_self_loops=False)
    diag = sp.dia_array(
        ((deg > 0).astype(np.float64)[None, :], [0]), shape=(n, n)
    )
    return (diag.tocsr() - adj).tocsr()


def edge_homophily(graph: Graph) -> float:
    """Fraction of edges whose endpoints share a label."""
    if graph.num_edges == 0:
        raise EmptyEdgeSet("edge homophily needs at least one edge")
    same = graph.labels[graph.edges[:, 0]] == graph.labels[graph.edges[:, 1]]
    return float(np.mean(same))


def _class_degree_totals(graph: Graph) -> tuple[np.ndarray, np.ndarray]:
    """Per-class totals of (same-label neighbor count, degree)."""
    c = graph.num_classes
    same_total = np.zeros(c, dtype=np.float64)
    deg_total = np.zeros(c, dtype=np.float64)
    lab = graph.labels
    deg = degrees(graph)
    np.add.at(deg_total, lab, deg.astype(np.float64))
    if graph.num_edges:
        li = lab[graph.edges[:, 0]]
        lj = lab[graph.edges[:, 1]]
        same = li == lj
        # each same-label edge contributes one same-class neighbor to
        # both endpoints, which belong to the same class bucket
        np.add.at(same_total, li[same], 2.0)
    return same_total, deg_total


def class_homophily(graph: Graph) -> float:
    """Class-balanced homophily: mean clipped excess of per-class
    neighbor homophily over the class share of nodes.

    For class c with node share n_c/N and class-wise homophily
    h_c = (same-label neighbor count over class c) / (degree over class c),
    the metric is ``(1/(C-1)) * sum_c max(0, h_c - n_c/N)``.
    """
    if graph.num_classes < 2:
        raise DegenerateLabels("class homophily needs at least two classes")
    same_total, deg_total = _class_degree_totals(graph)
    counts = np.bincount(graph.labels, minlength=graph.num_classes)
    share = counts.astype(np.float64) / max(graph.num_nodes, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.where(deg_total > 0, same_total / np.maximum(deg_total, 1e-300), 0.0)
    excess = np.clip(h - share, 0.0, None)
    return float(excess.sum() / (graph.num_classes - 1))


def adjusted_homophily(graph: Graph) -> float:
    """Edge homophily corrected for the expected value under a
    degree-preserving random relabeling.

    With D_c the total degree of class c and p = sum_c D_c^2 / (2|E|)^2,
    the metric is ``(h_edge - p) / (1 - p)``; it is 1 iff every edge is
    intra-class, and can be negative for heterophilic graphs.
    """
    h_edge = edge_homophily(graph)
    _, deg_total = _class_degree_totals(graph)
    two_e = float(2 * graph.num_edges)
    p = float(np.sum((deg_total / two_e) ** 2))
    if 1.0 - p == 0.0:
        raise DegenerateLabels("all degree concentrated in a single class")
    return (h_edge - p) / (1.0 - p)


def geodesic_distances_from(
    graph: Graph, source: int, neigh: list[np.ndarray] | None = None
) -> np.ndarray:
    """BFS hop distances from ``source``; unreachable nodes get inf."""
    if not 0 <= source < graph.num_nodes:
        raise ValidationError(f"source {source} out of range")
    if neigh is None:
        neigh = adjacency_lists(graph)
    dist = np.full(graph.num_nodes, np.inf)
    dist[source] = 0.0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        for v in neigh[u]:
            if np.isinf(dist[v]):
                dist[v] = du + 1.0
                queue.append(v)
    return dist
