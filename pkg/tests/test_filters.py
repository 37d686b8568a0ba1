"""Non-negative polynomial filters: responses, bounds, sparse application."""

import numpy as np
import pytest

from conftest import er_graph
from saf.autodiff import Tensor, backward
from saf.errors import AllZeroCoefficients, OutOfDomain, ValidationError
from saf.filters import (
    BernsteinFilter,
    ChebInterpFilter,
    FilterResponse,
    apply_filter_node,
    apply_filter_poly,
    bernstein_basis,
    bernstein_design,
    cheb_coeff_matrix,
    cheb_nodes,
    cheb_response,
    response,
    response_node,
    response_on_basis,
)
from saf.graphs import normalized_laplacian
from saf.spectra import dense_eigh


def test_coefficient_validation():
    with pytest.raises(ValidationError):
        BernsteinFilter(2, [1.0, 1.0])  # wrong length
    with pytest.raises(ValidationError):
        BernsteinFilter(1, [1.0, -0.2])  # negative
    with pytest.raises(AllZeroCoefficients):
        BernsteinFilter(1, [0.0, 0.0])
    with pytest.raises(ValidationError):
        BernsteinFilter(0, [1.0])  # order below 1
    with pytest.raises(ValidationError):
        BernsteinFilter(65, np.ones(66))  # above the order cap


def test_bernstein_basis_partition_of_unity():
    rng = np.random.default_rng(0)
    for order in (1, 4, 10, 16):
        xs = rng.random(50)
        design = bernstein_design(xs, order)
        assert np.all(design >= 0)
        assert np.allclose(design.sum(axis=1), 1.0, atol=1e-12)
        for x in xs[:5]:
            scalar = sum(bernstein_basis(k, order, x) for k in range(order + 1))
            assert scalar == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(OutOfDomain):
        bernstein_basis(0, 3, 1.5)


def test_single_coefficient_bump():
    # B_{k,K} peaks at x = k/K with all other basis members smaller there
    order = 6
    for k in range(order + 1):
        peak = bernstein_basis(k, order, k / order)
        others = [
            bernstein_basis(i, order, k / order)
            for i in range(order + 1) if i != k
        ]
        assert peak > max(others)


def test_response_examples():
    filt = BernsteinFilter(1, [2.0, 1.0])
    # degree-1 response: (2(1-x) + x)/2 on x = lambda/2
    assert response(filt, 0.0) == pytest.approx(1.0)
    assert response(filt, 1.0) == pytest.approx(0.75)
    assert response(filt, 2.0) == pytest.approx(0.5)
    uniform = BernsteinFilter(8, np.full(9, 3.7))
    for lam in np.linspace(0, 2, 9):
        assert response(uniform, lam) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(OutOfDomain):
        response(filt, 2.5)


def test_response_scale_invariance():
    rng = np.random.default_rng(1)
    lam = np.linspace(0, 2, 41)
    for _ in range(20):
        order = int(rng.integers(1, 17))
        coeffs = rng.random(order + 1) + 0.01
        filt = BernsteinFilter(order, coeffs)
        doubled = BernsteinFilter(order, 4.0 * coeffs)  # power of two: exact
        base = np.array([response(filt, x) for x in lam])
        scaled = np.array([response(doubled, x) for x in lam])
        assert np.array_equal(base, scaled)
        arb = BernsteinFilter(order, np.pi * coeffs)
        assert np.allclose(
            base, [response(arb, x) for x in lam], rtol=0, atol=1e-12
        )


def test_bernstein_bound_by_max_coefficient():
    # normalized response never exceeds 1; pre-normalization response never
    # exceeds the largest coefficient (partition-of-unity argument)
    rng = np.random.default_rng(2)
    grid = np.linspace(0, 2, 201)
    for _ in range(50):
        order = int(rng.integers(1, 17))
        coeffs = rng.random(order + 1) * rng.choice([0.1, 1.0, 10.0])
        if not np.any(coeffs > 0):
            continue
        filt = BernsteinFilter(order, coeffs)
        vals = np.array([response(filt, x) for x in grid])
        assert vals.max() <= 1.0 + 1e-12
        raw = bernstein_design(grid / 2.0, order) @ coeffs
        assert raw.max() <= coeffs.max() + 1e-12


def test_cheb_nodes_and_interpolation():
    order = 7
    nodes = cheb_nodes(order)
    assert nodes.shape == (order + 1,)
    assert np.all((nodes >= 0) & (nodes <= 2))
    rng = np.random.default_rng(3)
    coeffs = rng.random(order + 1) + 0.05
    filt = ChebInterpFilter(order, coeffs)
    vals, bound = cheb_response(filt, nodes)
    # the interpolant passes through its own coefficients at the nodes
    assert np.allclose(vals * bound, coeffs, atol=1e-9)


def test_cheb_bound_dominates_response():
    rng = np.random.default_rng(4)
    grid = np.linspace(0, 2, 401)
    for _ in range(20):
        order = int(rng.integers(1, 13))
        filt = ChebInterpFilter(order, rng.random(order + 1) + 0.01)
        vals, bound = cheb_response(filt, grid)
        assert np.max(np.abs(vals)) * bound <= bound + 1e-10
        assert np.max(np.abs(vals)) <= 1.0 + 1e-12


def test_cheb_coeff_matrix_recovers_polynomial():
    # interpolate T_2 on [0,2]: gamma_j = T_2(node_j - 1) must map to the
    # coefficient vector e_2
    order = 5
    nodes = cheb_nodes(order) - 1.0
    gamma = 2.0 * nodes**2 - 1.0
    c = cheb_coeff_matrix(order) @ gamma
    want = np.zeros(order + 1)
    want[2] = 1.0
    assert np.allclose(c, want, atol=1e-12)


def test_response_on_basis_clamps(path3):
    basis = dense_eigh(normalized_laplacian(path3))
    low_pass = BernsteinFilter(4, [1.0, 0.5, 1e-9, 1e-9, 1e-9])
    resp = response_on_basis(low_pass, basis, g_floor=1e-6)
    assert isinstance(resp, FilterResponse)
    assert resp.values.min() >= 1e-6
    assert resp.values.max() <= 1.0
    assert resp.minimum == resp.values.min()


def test_response_node_matches_scalar_response():
    rng = np.random.default_rng(5)
    lam = np.linspace(0, 2, 31)
    for kind, cls in (("bernstein", BernsteinFilter), ("cheb", ChebInterpFilter)):
        for _ in range(10):
            order = int(rng.integers(1, 11))
            coeffs = rng.random(order + 1) + 0.05
            filt = cls(order, coeffs)
            node_vals = response_node(coeffs, kind, order, lam, 1e-6).value
            if kind == "bernstein":
                direct = np.array([response(filt, x) for x in lam])
            else:
                vals, _ = cheb_response(filt, lam)
                direct = vals
            assert np.allclose(node_vals, np.clip(direct, 1e-6, 1.0), atol=1e-12)


def test_response_node_gradient():
    rng = np.random.default_rng(6)
    lam = np.array([0.05, 0.4, 1.1, 1.9])
    h = 1e-6
    for kind in ("bernstein", "cheb"):
        for _ in range(10):
            order = int(rng.integers(2, 9))
            base = rng.random(order + 1) + 0.3
            # keep a unique argmax so the rescale subgradient is exact
            base[int(rng.integers(order + 1))] += 0.5
            t = Tensor(base.copy(), requires_grad=True)
            out = response_node(t, kind, order, lam, 1e-6)
            w = rng.standard_normal(out.value.shape)
            backward(out, seed=w)
            for idx in range(order + 1):
                plus, minus = base.copy(), base.copy()
                plus[idx] += h
                minus[idx] -= h
                fd = (
                    (response_node(plus, kind, order, lam, 1e-6).value * w).sum()
                    - (response_node(minus, kind, order, lam, 1e-6).value * w).sum()
                ) / (2 * h)
                assert t.grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_polynomial_path_matches_spectral():
    # dual route: sparse polynomial recurrences against U g(Lambda) U^T x
    rng = np.random.default_rng(7)
    for kind, cls in (("bernstein", BernsteinFilter), ("cheb", ChebInterpFilter)):
        for trial in range(8):
            g = er_graph(rng, 40, 0.15)
            lap = normalized_laplacian(g)
            basis = dense_eigh(lap)
            order = int(rng.integers(1, 17))
            filt = cls(order, rng.random(order + 1) + 0.01)
            x = rng.standard_normal((40, 3))
            via_poly = apply_filter_poly(filt, lap, x)
            if kind == "bernstein":
                resp = np.array([response(filt, v) for v in basis.eigenvalues])
            else:
                resp, _ = cheb_response(filt, basis.eigenvalues)
            via_spectral = basis.eigenvectors @ (
                resp[:, None] * (basis.eigenvectors.T @ x)
            )
            assert np.max(np.abs(via_poly - via_spectral)) < 1e-10


def test_apply_filter_node_gradient():
    rng = np.random.default_rng(8)
    g = er_graph(rng, 12, 0.3)
    lap = normalized_laplacian(g)
    x = rng.standard_normal((12, 2))
    h = 1e-6
    for kind in ("bernstein", "cheb"):
        order = 5
        base = rng.random(order + 1) + 0.3
        base[2] += 0.5
        t = Tensor(base.copy(), requires_grad=True)
        out = apply_filter_node(t, kind, order, lap, x)
        w = rng.standard_normal(out.value.shape)
        backward(out, seed=w)
        for idx in range(order + 1):
            plus, minus = base.copy(), base.copy()
            plus[idx] += h
            minus[idx] -= h
            fd = (
                (apply_filter_node(plus, kind, order, lap, x).value * w).sum()
                - (apply_filter_node(minus, kind, order, lap, x).value * w).sum()
            ) / (2 * h)
            assert t.grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)
