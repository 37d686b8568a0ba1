"""Adapted propagation graph: construction, series, thresholds, analyses."""

import math

import numpy as np
import pytest

from conftest import er_graph
from saf.autodiff import Tensor, backward
from saf.errors import (
    NegativeEpsilon,
    NonPositiveTau,
    NoSurvivingEdges,
    PartialBasisUnsupported,
    ValidationError,
)
from saf.filters import BernsteinFilter, FilterResponse, response_on_basis
from saf.graphs import Graph, normalized_laplacian
from saf.newgraph import (
    AdaptedGraph,
    adapted_apply_node,
    build_adapted_graph,
    distance_histogram,
    neumann_truncation,
    signed_edge_stats,
    sparsify,
)
from saf.spectra import dense_eigh, lanczos_extremal


def filter_response(graph, coeffs, g_floor=1e-6):
    basis = dense_eigh(normalized_laplacian(graph))
    filt = BernsteinFilter(len(coeffs) - 1, np.asarray(coeffs, float))
    return basis, response_on_basis(filt, basis, g_floor)


def test_single_edge_example(single_edge):
    # degree-1 filter (2,1) on the {0,2} spectrum: response (1, 1/2);
    # tau=1 sends the adapted graph to [[1/2, 1/2], [1/2, 1/2]]
    basis, resp = filter_response(single_edge, [2.0, 1.0])
    adapted = build_adapted_graph(basis, resp, tau=1.0)
    assert np.allclose(adapted.matrix, 0.5, atol=1e-12)
    assert adapted.rank == 2 and adapted.epsilon == 0.0


def test_identity_response_gives_identity():
    rng = np.random.default_rng(0)
    g = er_graph(rng, 20, 0.2)
    basis, resp = filter_response(g, np.full(5, 2.5))
    adapted = build_adapted_graph(basis, resp, tau=0.7)
    assert np.allclose(adapted.matrix, np.eye(20), atol=1e-12)


def test_adapted_matrix_bitwise_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(5):
        g = er_graph(rng, 25, 0.2)
        basis, resp = filter_response(g, rng.random(6) + 0.2)
        adapted = build_adapted_graph(basis, resp, tau=0.5)
        assert np.array_equal(adapted.matrix, adapted.matrix.T)


def test_adapted_eigenvalues_follow_response():
    # eigenvalues of the adapted graph are 1 - tau*(1/g - 1) on the
    # original eigenvectors
    rng = np.random.default_rng(2)
    g = er_graph(rng, 18, 0.25)
    basis, resp = filter_response(g, rng.random(7) + 0.3)
    tau = 0.8
    adapted = build_adapted_graph(basis, resp, tau)
    want = np.sort(1.0 - tau * (1.0 / resp.values - 1.0))
    got = np.sort(np.linalg.eigvalsh(adapted.matrix))
    assert np.max(np.abs(got - want)) < 1e-10


def test_build_validation(single_edge):
    basis, resp = filter_response(single_edge, [2.0, 1.0])
    with pytest.raises(NonPositiveTau):
        build_adapted_graph(basis, resp, tau=0.0)
    short = FilterResponse(np.array([0.5]))
    with pytest.raises(ValidationError):
        build_adapted_graph(basis, short, tau=1.0)


def test_factored_apply_matches_materialized():
    # the epsilon=0 training route never forms the N x N matrix; it must
    # agree with the materialized product to round-off
    rng = np.random.default_rng(3)
    for _ in range(5):
        g = er_graph(rng, 30, 0.2)
        basis, resp = filter_response(g, rng.random(5) + 0.1)
        tau = float(rng.uniform(0.2, 1.0))
        x = rng.standard_normal((30, 4))
        adapted = build_adapted_graph(basis, resp, tau)
        factored = adapted_apply_node(resp.values, basis, tau, x).value
        assert np.max(np.abs(factored - adapted.matrix @ x)) < 1e-10


def test_factored_apply_gradient_flows_to_response():
    rng = np.random.default_rng(4)
    g = er_graph(rng, 10, 0.3)
    basis = dense_eigh(normalized_laplacian(g))
    vals = rng.random(10) * 0.5 + 0.4
    x = rng.standard_normal((10, 2))
    t = Tensor(vals.copy(), requires_grad=True)
    out = adapted_apply_node(t, basis, 0.6, x)
    w = rng.standard_normal(out.value.shape)
    backward(out, seed=w)
    h = 1e-6
    for i in range(10):
        plus, minus = vals.copy(), vals.copy()
        plus[i] += h
        minus[i] -= h
        fd = (
            (adapted_apply_node(plus, basis, 0.6, x).value * w).sum()
            - (adapted_apply_node(minus, basis, 0.6, x).value * w).sum()
        ) / (2 * h)
        assert t.grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_neumann_truncation_converges():
    rng = np.random.default_rng(5)
    g = er_graph(rng, 24, 0.25)
    # keep the response >= 0.5 so the series contracts fast
    basis, resp_raw = filter_response(g, rng.random(5) + 0.2)
    resp = FilterResponse(np.clip(resp_raw.values, 0.5, 1.0))
    adapted = build_adapted_graph(basis, resp, tau=1.0)
    approx = neumann_truncation(resp, basis, 1.0, terms=200)
    assert np.max(np.abs(approx - adapted.matrix)) < 1e-9
    # short truncations improve monotonically toward the closed form
    errs = [
        np.max(np.abs(neumann_truncation(resp, basis, 1.0, terms=t)
                      - adapted.matrix))
        for t in (3, 10, 40)
    ]
    assert errs[0] > errs[1] > errs[2]


def test_neumann_needs_full_basis(single_edge):
    lap = normalized_laplacian(single_edge)
    part = lanczos_extremal(lap, n=2, m=1, mode="largest", seed=0)
    resp = FilterResponse(np.array([0.8]))
    with pytest.raises(PartialBasisUnsupported):
        neumann_truncation(resp, part, 1.0, terms=10)


def test_sparsify_behavior():
    mat = np.array([[0.2, 0.001], [0.001, -0.3]])
    g = AdaptedGraph(mat, tau=1.0, epsilon=0.0, rank=2)
    out = sparsify(g, 0.01)
    assert out.matrix[0, 1] == 0.0 and out.matrix[1, 0] == 0.0
    assert out.matrix[0, 0] == 0.2 and out.matrix[1, 1] == -0.3
    assert out.epsilon == 0.01
    again = sparsify(out, 0.01)
    assert np.array_equal(again.matrix, out.matrix)  # idempotent
    big = sparsify(g, 0.25)
    assert big.matrix[0, 0] == 0.0  # diagonal participates too
    with pytest.raises(NegativeEpsilon):
        sparsify(g, -0.1)


def test_distance_histogram_counts():
    # path 0-1-2 plus an adapted link between the distance-2 endpoints
    g = Graph(3, [[0, 1], [1, 2]], [0, 1, 0], np.eye(3), 2)
    mat = np.eye(3)
    mat[0, 2] = mat[2, 0] = 0.4
    mat[0, 1] = mat[1, 0] = 0.2
    adapted = AdaptedGraph(mat, tau=1.0, epsilon=0.0, rank=3)
    hist = distance_histogram(adapted, g, epsilon=0.1)
    assert hist == {1: 1, 2: 1}


def test_distance_histogram_empty_and_disconnected():
    g = Graph(4, [[0, 1]], [0, 0, 1, 1], np.eye(4), 2)
    identity = AdaptedGraph(np.eye(4), tau=1.0, epsilon=0.0, rank=4)
    assert distance_histogram(identity, g, 1e-3) == {}
    mat = np.eye(4)
    mat[0, 3] = mat[3, 0] = 0.9  # bridges two components
    linked = AdaptedGraph(mat, tau=1.0, epsilon=0.0, rank=4)
    assert distance_histogram(linked, g, 1e-3) == {math.inf: 1}


def test_signed_edge_stats_hand_case():
    labels = np.array([0, 0, 1, 1])
    mat = np.zeros((4, 4))
    mat[0, 1] = mat[1, 0] = 0.5    # positive, same class
    mat[0, 2] = mat[2, 0] = 0.5    # positive, cross class
    mat[1, 3] = mat[3, 1] = -0.4   # negative, cross class
    g = AdaptedGraph(mat, tau=1.0, epsilon=0.0, rank=4)
    stats = signed_edge_stats(g, labels, epsilon=0.1)
    assert stats["pos_count"] == 2 and stats["neg_count"] == 1
    assert stats["pos_edge_homophily"] == pytest.approx(0.5)
    assert stats["neg_cross_class_fraction"] == pytest.approx(1.0)


def test_signed_edge_stats_no_survivors():
    g = AdaptedGraph(np.eye(3), tau=1.0, epsilon=0.0, rank=3)
    with pytest.raises(NoSurvivingEdges):
        signed_edge_stats(g, np.array([0, 1, 0]), epsilon=0.5)
