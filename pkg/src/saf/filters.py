"""Non-negative polynomial spectral filters.

Two families share one interface:

* ``BernsteinFilter`` — order-K Bernstein expansion with non-negative
  coefficients.  Because the Bernstein basis is a partition of unity,
  the maximum of the expansion over [0, 2] is at most the largest
  coefficient, so dividing by that coefficient rescales the response
  into [0, 1] *tightly*.
* ``ChebInterpFilter`` — interpolation through non-negative values at
  the K+1 Chebyshev nodes mapped onto [0, 2], rescaled by the sum of
  absolute Chebyshev coefficients (a looser bound).

Responses can be evaluated pointwise, on a spectral basis (clamped into
``[g_floor, 1]`` so the filter can be inverted safely), or applied to a
node-signal matrix through sparse polynomial recurrences that never
materialize a dense matrix power.  The application paths are written in
terms of the autodiff ops, so the same code serves inference (plain
arrays in, array out) and training (gradients flow into the
coefficients).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    AllZeroCoefficients,
    DimensionMismatch,
    OutOfDomain,
    ValidationError,
)
from .spectra import SpectralBasis

__all__ = [
    "BernsteinFilter",
    "ChebInterpFilter",
    "FilterResponse",
    "G_FLOOR_DEFAULT",
    "bernstein_basis",
    "bernstein_design",
    "response",
    "response_on_basis",
    "response_node",
    "cheb_response",
    "cheb_nodes",
    "apply_filter_poly",
    "apply_filter_node",
]

G_FLOOR_DEFAULT = 1e-6
_DOMAIN_TOL = 1e-8
_MAX_ORDER = 64


@lru_cache(maxsize=None)
def _binomial_row(order: int) -> np.ndarray:
    """Binomial coefficients C(order, k) in floating point.

    Multiplicative recurrence; exact for the desk-scale orders used
    here (validated well past order 64 against integer arithmetic).
    """
    row = np.empty(order + 1, dtype=np.float64)
    row[0] = 1.0
    for k in range(1, order + 1):
        row[k] = row[k - 1] * (order - k + 1) / k
    return row


def _check_order(order: int) -> None:
    if not 1 <= order <= _MAX_ORDER:
        raise ValidationError(f"order must be in [1, {_MAX_ORDER}], got {order}")


def _check_coeffs(coeffs: np.ndarray, order: int) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if len(coeffs) != order + 1:
        raise ValidationError(
            f"need order+1 = {order + 1} coefficients, got {len(coeffs)}"
        )
    if np.any(coeffs < 0):
        raise ValidationError("coefficients must be non-negative")
    if not np.any(coeffs > 0):
        raise AllZeroCoefficients("all filter coefficients are zero")
    return coeffs


@dataclass(frozen=True)
class BernsteinFilter:
    """Non-negative Bernstein-basis filter of the given order."""

    order: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        _check_order(self.order)
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs, self.order))


@dataclass(frozen=True)
class ChebInterpFilter:
    """Interpolating filter with non-negative values at Chebyshev nodes."""

    order: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        _check_order(self.order)
        object.__setattr__(self, "coeffs", _check_coeffs(self.coeffs, self.order))


@dataclass(frozen=True)
class FilterResponse:
    """Response values aligned to a spectral basis, inside [g_floor, 1]."""

    values: np.ndarray
    g_floor: float = G_FLOOR_DEFAULT

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", vals)
        if vals.size and (vals.min() < self.g_floor - 1e-15 or vals.max() > 1 + 1e-12):
            raise ValidationError("response values outside [g_floor, 1]")

    @property
    def minimum(self) -> float:
        return float(self.values.min()) if self.values.size else 1.0


def bernstein_basis(k: int, order: int, x: float) -> float:
    """Bernstein basis value C(order,k) (1-x)^(order-k) x^k at x in [0,1]."""
    if not 0 <= k <= order:
        raise OutOfDomain(f"need 0 <= k <= order, got k={k}, order={order}")
    if not -_DOMAIN_TOL <= x <= 1 + _DOMAIN_TOL:
        raise OutOfDomain(f"x={x} outside [0, 1]")
    x = min(max(x, 0.0), 1.0)
    row = _binomial_row(order)
    return float(row[k] * (1.0 - x) ** (order - k) * x**k)


def bernstein_design(x: np.ndarray, order: int) -> np.ndarray:
    """Matrix of basis values, shape (len(x), order+1), for x in [0,1]."""
    x = np.clip(np.asarray(x, dtype=np.float64).reshape(-1), 0.0, 1.0)
    ks = np.arange(order + 1)
    return _binomial_row(order) * (1.0 - x[:, None]) ** (order - ks) * x[:, None] ** ks


def cheb_nodes(order: int) -> np.ndarray:
    """K+1 Chebyshev (first-kind) nodes mapped to [0, 2], ascending.

    Coefficient j of a ChebInterpFilter is the filter's value at node j
    of this array; the interpolation matrices below share the ordering.
    """
    return np.cos(_cheb_angles(order))[::-1] + 1.0


def _cheb_angles(order: int) -> np.ndarray:
    j = np.arange(order + 1)
    return (2 * j + 1) * np.pi / (2 * (order + 1))


def cheb_coeff_matrix(order: int) -> np.ndarray:
    """Map from node values to Chebyshev coefficients.

    Row k gives the coefficient of T_k in the interpolant through the
    node values (the k=0 row already carries the conventional halving),
    so the interpolant is sum_k (M v)_k T_k(x) and the rescale bound is
    sum_k |(M v)_k|.
    """
    theta = _cheb_angles(order)
    k = np.arange(order + 1)[:, None]
    mat = (2.0 / (order + 1)) * np.cos(k * theta[None, :])
    mat[0, :] *= 0.5
    return mat[:, ::-1]  # columns follow the ascending node order


def cheb_interp_matrix(lambdas: np.ndarray, order: int) -> np.ndarray:
    """Barycentric interpolation matrix from node values to values at
    ``lambdas`` (in [0, 2]).

    Chebyshev points of the first kind admit the closed-form barycentric
    weights w_j = (-1)^j sin(theta_j); evaluation points that coincide
    with a node short-circuit to that node's value.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    x = lambdas - 1.0
    theta = _cheb_angles(order)
    nodes = np.cos(theta)[::-1]
    weights = (((-1.0) ** np.arange(order + 1)) * np.sin(theta))[::-1]
    out = np.zeros((len(x), order + 1))
    diff = x[:, None] - nodes[None, :]
    exact = np.abs(diff) < 1e-14
    hit = exact.any(axis=1)
    safe = np.where(exact, 1.0, diff)
    terms = weights[None, :] / safe
    denom = terms.sum(axis=1, keepdims=True)
    out[~hit] = (terms / denom)[~hit]
    out[hit] = exact[hit].astype(np.float64)
    return out


def _response_raw(filt, lambdas: np.ndarray) -> np.ndarray:
    """Rescaled response values without any clamping."""
    lambdas = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    if isinstance(filt, BernsteinFilter):
        design = bernstein_design(lambdas / 2.0, filt.order)
        return design @ filt.coeffs / filt.coeffs.max()
    if isinstance(filt, ChebInterpFilter):
        values, _bound = cheb_response(filt, lambdas)
        return np.asarray(values).reshape(-1)
    raise ValidationError(f"unknown filter type {type(filt).__name__}")


def response(filt, lam):
    """Rescaled filter response at one or more eigenvalues in [0, 2]."""
    arr = np.asarray(lam, dtype=np.float64)
    if np.any(arr < -_DOMAIN_TOL) or np.any(arr > 2 + _DOMAIN_TOL):
        raise OutOfDomain("eigenvalue outside [0, 2]")
    vals = _response_raw(filt, np.clip(arr, 0.0, 2.0).reshape(-1))
    return float(vals[0]) if arr.ndim == 0 else vals.reshape(arr.shape)


def cheb_response(filt: ChebInterpFilter, lam):
    """Chebyshev-interpolated response and its rescale bound.

    Returns ``(values / bound, bound)`` where bound is the sum of
    absolute Chebyshev coefficients of the interpolant — an upper bound
    for its magnitude on [0, 2], so the rescaled response stays in
    [-1, 1] (and in [0, 1] up to interpolation wiggle, since the node
    values are non-negative).
    """
    arr = np.asarray(lam, dtype=np.float64)
    lambdas = np.clip(arr.reshape(-1), 0.0, 2.0)
    coeffs = cheb_coeff_matrix(filt.order) @ filt.coeffs
    bound = float(np.abs(coeffs).sum())
    if bound == 0.0:
        raise AllZeroCoefficients("interpolant is identically zero")
    vals = cheb_interp_matrix(lambdas, filt.order) @ filt.coeffs / bound
    if arr.ndim == 0:
        return float(vals[0]), bound
    return vals.reshape(arr.shape), bound


def response_on_basis(
    filt, basis: SpectralBasis, g_floor: float = G_FLOOR_DEFAULT
) -> FilterResponse:
    """Response at the basis eigenvalues, clamped into [g_floor, 1]."""
    lam = basis.eigenvalues
    if lam.size and (lam.min() < -_DOMAIN_TOL or lam.max() > 2 + _DOMAIN_TOL):
        raise OutOfDomain("basis eigenvalues outside [0, 2]")
    raw = _response_raw(filt, np.clip(lam, 0.0, 2.0))
    return FilterResponse(np.clip(raw, g_floor, 1.0), g_floor)


def response_node(
    coeffs, kind: str, order: int, lambdas: np.ndarray,
    g_floor: float = G_FLOOR_DEFAULT,
) -> Tensor:
    """Differentiable clamped response at fixed eigenvalues.

    ``coeffs`` may be a Tensor (training) or a plain array.  The
    Bernstein rescale routes its subgradient to the first argmax
    coefficient; the Chebyshev bound uses the sign subgradient of the
    absolute coefficient sum.
    """
    lambdas = np.clip(np.asarray(lambdas, dtype=np.float64).reshape(-1), 0.0, 2.0)
    col = ad.reshape(coeffs, (order + 1, 1))
    if kind == "bernstein":
        design = bernstein_design(lambdas / 2.0, order)
        raw = ad.reshape(ad.matmul(design, col), (len(lambdas),))
        scale = ad.amax_first(coeffs)
    elif kind == "cheb":
        interp = cheb_interp_matrix(lambdas, order)
        raw = ad.reshape(ad.matmul(interp, col), (len(lambdas),))
        scale = ad.tsum(ad.absolute(ad.matmul(cheb_coeff_matrix(order), col)))
    else:
        raise ValidationError(f"unknown filter kind {kind!r}")
    return ad.clip(ad.div(raw, scale), g_floor, 1.0)


def apply_filter_node(coeffs, kind: str, order: int, laplacian, signal) -> Tensor:
    """Differentiable polynomial application of the rescaled filter.

    Never materializes a dense matrix power: the Bernstein path chains
    (2I - L) sweeps over cached L^k signal blocks (O(K^2/2) sparse
    matvecs), the Chebyshev path runs the classic three-term recurrence
    in L - I.
    """
    n = laplacian.shape[0]
    sig_val = signal.value if isinstance(signal, Tensor) else np.asarray(signal)
    if sig_val.ndim != 2 or sig_val.shape[0] != n:
        raise DimensionMismatch(
            f"signal must be ({n}, d), got {sig_val.shape}"
        )
    col = ad.reshape(coeffs, (order + 1, 1))
    if kind == "bernstein":
        weights = _binomial_row(order) * 0.5**order
        powers = [signal if isinstance(signal, Tensor) else Tensor(signal)]
        for _ in range(order):
            powers.append(ad.spmm(laplacian, powers[-1]))
        acc = None
        for k in range(order + 1):
            w = powers[k]
            for _ in range(order - k):
                w = ad.sub(ad.mul(w, 2.0), ad.spmm(laplacian, w))
            term = ad.mul(w, ad.mul(ad.getitem(coeffs, k), weights[k]))
            acc = term if acc is None else ad.add(acc, term)
        return ad.div(acc, ad.amax_first(coeffs))
    if kind == "cheb":
        coef = ad.matmul(cheb_coeff_matrix(order), col)
        bound = ad.tsum(ad.absolute(coef))
        if sp.issparse(laplacian):
            shifted = (laplacian - sp.eye_array(n, format="csr")).tocsr()
        else:
            shifted = np.asarray(laplacian) - np.eye(n)
        t_prev = signal if isinstance(signal, Tensor) else Tensor(signal)
        t_cur = ad.spmm(shifted, t_prev)
        acc = ad.add(ad.mul(t_prev, ad.getitem(coef, (0, 0))),
                     ad.mul(t_cur, ad.getitem(coef, (1, 0))))
        for k in range(2, order + 1):
            t_next = ad.sub(ad.mul(ad.spmm(shifted, t_cur), 2.0), t_prev)
            acc = ad.add(acc, ad.mul(t_next, ad.getitem(coef, (k, 0))))
            t_prev, t_cur = t_cur, t_next
        return ad.div(acc, bound)
    raise ValidationError(f"unknown filter kind {kind!r}")


def apply_filter_poly(filt, laplacian, signal: np.ndarray) -> np.ndarray:
    """Apply the rescaled filter to a node-signal matrix (plain arrays)."""
    if isinstance(filt, BernsteinFilter):
        kind = "bernstein"
    elif isinstance(filt, ChebInterpFilter):
        kind = "cheb"
    else:
        raise ValidationError(f"unknown filter type {type(filt).__name__}")
    out = apply_filter_node(filt.coeffs, kind, filt.order, laplacian, np.asarray(signal, dtype=np.float64))
    return out.value
