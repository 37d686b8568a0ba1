"""The adapted graph induced by an inverted spectral filter.

Inverting a filter response on a spectral basis yields a new, generally
dense and signed, propagation matrix

    A_adapted = I - tau * (U diag(1/g) U^T - I)
              = I - tau * U (diag(1/g) - I) U^T   (partial-basis form),

whose eigenvalues on the spanned subspace are 1 - tau*(1/g(lambda) - 1).
With a partial basis the correction acts only on the spanned subspace
and leaves the complement untouched (equivalent to treating unspanned
directions as g = 1).

This module materializes that matrix, thresholds it (entries with
|value| <= epsilon are dropped, diagonal included), verifies the
geometric-series route to the same matrix, and computes the structural
analyses used on trained models: how far apart linked node pairs are in
the original graph, and how the signs of surviving entries relate to
the node labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    DimensionTooLarge,
    MisalignedBasis,
    NegativeEpsilon,
    NonPositiveTau,
    NoSurvivingEdges,
    PartialBasisUnsupported,
    ValidationError,
)
from .filters import FilterResponse
from .graphs import Graph, adjacency_lists, geodesic_distances_from
from .spectra import SpectralBasis

__all__ = [
    "AdaptedGraph",
    "build_adapted_graph",
    "adapted_graph_node",
    "adapted_apply_node",
    "sparsify",
    "neumann_truncation",
    "distance_histogram",
    "signed_edge_stats",
]

DENSE_CAP_DEFAULT = 8000


@dataclass(frozen=True)
class AdaptedGraph:
    """Signed dense propagation matrix with its construction metadata."""

    matrix: np.ndarray
    tau: float
    epsilon: float
    rank: int

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError("adapted graph matrix must be square")
        if mat.size and float(np.abs(mat - mat.T).max()) > 1e-10:
            raise ValidationError("adapted graph matrix must be symmetric")

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def _check_alignment(basis: SpectralBasis, response: FilterResponse) -> None:
    if len(response.values) != basis.count:
        raise MisalignedBasis(
            f"response has {len(response.values)} values for a basis of"
            f" {basis.count} pairs"
        )


def adapted_graph_node(resp, basis: SpectralBasis, tau: float) -> Tensor:
    """Differentiable materialization of the adapted-graph matrix.

    ``resp`` is the clamped response (Tensor during training).  The
    result is explicitly symmetrized as (M + M^T)/2 so the symmetry
    invariant holds bit-exactly regardless of float association.
    """
    u = basis.eigenvectors
    d = ad.sub(ad.div(1.0, resp), 1.0)
    scaled = ad.mul(u, ad.reshape(d, (1, basis.count)))
    corr = ad.matmul(scaled, u.T)
    mat = ad.sub(np.eye(basis.source_dim), ad.mul(corr, tau))
    return ad.mul(ad.add(mat, ad.transpose(mat)), 0.5)


def adapted_apply_node(resp, basis: SpectralBasis, tau: float, signal) -> Tensor:
    """Apply the adapted graph to a signal without materializing it.

    Computes signal - tau * U ((1/g - 1) * (U^T signal)); O(N*m*d)
    instead of O(N^2*d), and exactly the same linear map.
    """
    u = basis.eigenvectors
    d = ad.sub(ad.div(1.0, resp), 1.0)
    projected = ad.matmul(u.T, signal)
    scaled = ad.mul(projected, ad.reshape(d, (basis.count, 1)))
    corr = ad.matmul(u, scaled)
    return ad.sub(signal, ad.mul(corr, tau))


def build_adapted_graph(
    basis: SpectralBasis,
    response: FilterResponse,
    tau: float,
    dense_cap: int = DENSE_CAP_DEFAULT,
) -> AdaptedGraph:
    """Materialize the adapted graph for a response on a basis."""
    if tau <= 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    _check_alignment(basis, response)
    if basis.source_dim > dense_cap:
        raise DimensionTooLarge(
            f"N={basis.source_dim} exceeds dense cap {dense_cap}"
        )
    if response.values.size and response.values.min() < response.g_floor - 1e-15:
        raise ValidationError("response values below g_floor")
    mat = adapted_graph_node(response.values, basis, tau).value
    return AdaptedGraph(mat, tau=float(tau), epsilon=0.0, rank=basis.count)


def sparsify(g: AdaptedGraph, epsilon: float) -> AdaptedGraph:
    """Zero out all entries with |value| <= epsilon (diagonal included)."""
    if epsilon < 0:
        raise NegativeEpsilon(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return replace(g, epsilon=0.0)
    kept = np.where(np.abs(g.matrix) > epsilon, g.matrix, 0.0)
    return AdaptedGraph(kept, tau=g.tau, epsilon=float(epsilon), rank=g.rank)


def neumann_truncation(
    response: FilterResponse, basis: SpectralBasis, tau: float, terms: int
) -> np.ndarray:
    """Truncated geometric-series route to the adapted graph.

    Returns I - tau * sum_{t=1..terms} (I - g(L))^t evaluated spectrally
    per eigenvalue.  Because every response value g is in (0, 1], the
    series ratio r = 1 - g satisfies 0 <= r < 1 and the truncation
    converges to the closed-form matrix at rate r^terms.
    """
    if not basis.is_full:
        raise PartialBasisUnsupported(
            "the series route needs a full basis (the complement of a"
            " partial basis has an unknown response)"
        )
    _check_alignment(basis, response)
    if tau <= 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    if terms < 1:
        raise ValidationError(f"terms must be >= 1, got {terms}")
    ratio = 1.0 - response.values
    # partial geometric sum r + r^2 + ... + r^T = r (1 - r^T) / (1 - r)
    with np.errstate(divide="ignore", invalid="ignore"):
        series = np.where(
            ratio == 0.0, 0.0, ratio * (1.0 - ratio**terms) / (1.0 - ratio)
        )
    diag_vals = 1.0 - tau * series
    u = basis.eigenvectors
    mat = (u * diag_vals[None, :]) @ u.T
    return 0.5 * (mat + mat.T)


def distance_histogram(
    g: AdaptedGraph, original: Graph, epsilon: float
) -> dict[float, int]:
    """Surviving off-diagonal links bucketed by original-graph distance.

    Counts every unordered pair (i, j), i < j, with |entry| > epsilon,
    keyed by the BFS hop distance between i and j in ``original``
    (``math.inf`` for pairs in different components).
    """
    if epsilon < 0:
        raise NegativeEpsilon(f"epsilon must be >= 0, got {epsilon}")
    n = g.num_nodes
    if original.num_nodes != n:
        raise ValidationError("graph size mismatch")
    mask = np.triu(np.abs(g.matrix) > epsilon, 1)
    sources, targets = np.nonzero(mask)
    hist: dict[float, int] = {}
    if len(sources) == 0:
        return hist
    neigh = adjacency_lists(original)
    for src in np.unique(sources):
        dist = geodesic_distances_from(original, int(src), neigh)
        for tgt in targets[sources == src]:
            d = dist[tgt]
            key = math.inf if math.isinf(d) else int(d)
            hist[key] = hist.get(key, 0) + 1
    return hist


def signed_edge_stats(
    g: AdaptedGraph, labels: np.ndarray, epsilon: float
) -> dict[str, float]:
    """Label statistics of surviving signed entries.

    Over off-diagonal unordered pairs with |value| > epsilon:
    ``pos_edge_homophily`` is the same-label fraction among positive
    entries, ``neg_cross_class_fraction`` the different-label fraction
    among negative entries.
    """
    if epsilon < 0:
        raise NegativeEpsilon(f"epsilon must be >= 0, got {epsilon}")
    labels = np.asarray(labels)
    n = g.num_nodes
    if labels.shape != (n,):
        raise ValidationError(f"labels must have shape ({n},)")
    iu, ju = np.triu_indices(n, k=1)
    vals = g.matrix[iu, ju]
    same = labels[iu] == labels[ju]
    pos = vals > epsilon
    neg = vals < -epsilon
    pos_count = int(pos.sum())
    neg_count = int(neg.sum())
    if pos_count + neg_count == 0:
        raise NoSurvivingEdges(f"no off-diagonal entries above epsilon={epsilon}")
    return {
        "pos_edge_homophily": float(same[pos].mean()) if pos_count else float("nan"),
        "neg_cross_class_fraction": (
            float((~same[neg]).mean()) if neg_count else float("nan")
        ),
        "pos_count": pos_count,
        "neg_count": neg_count,
    }
