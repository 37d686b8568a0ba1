"""Eigendecomposition of symmetric graph operators.

Two routes produce the same ``SpectralBasis`` type:

* ``dense_eigh`` — full decomposition through LAPACK, used at desk scale
  and as the oracle the iterative route is tested against.
* ``lanczos_extremal`` — restarted Lanczos iteration with full
  reorthogonalization, returning m converged Ritz pairs at the requested
  end(s) of the spectrum without ever forming a dense matrix.

A basis can be persisted to a small binary cache file (``basis.bin``)
keyed by a content hash of the edge list that produced the operator.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import (
    BreakdownNotRecovered,
    DimensionTooLarge,
    InvalidMode,
    NotSymmetric,
    ValidationError,
)

__all__ = [
    "SpectralBasis",
    "dense_eigh",
    "lanczos_extremal",
    "compute_basis",
    "save_basis",
    "load_basis",
    "basis_cache_path",
]

_MAGIC = b"SAFB"
_VERSION = 1

DENSE_CAP_DEFAULT = 5000
MODES = ("smallest", "largest", "both_ends")


@dataclass(frozen=True)
class SpectralBasis:
    """m eigenpairs of a symmetric N x N operator.

    ``eigenvalues`` are sorted ascending; ``eigenvectors`` holds the
    matching orthonormal columns (shape N x m).  ``is_full`` marks a
    complete decomposition (m = N).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    is_full: bool
    source_dim: int

    def __post_init__(self) -> None:
        vals = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        vecs = np.asarray(self.eigenvectors, dtype=np.float64)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)
        if vecs.ndim != 2 or vecs.shape != (self.source_dim, len(vals)):
            raise ValidationError(
                f"eigenvector matrix must be ({self.source_dim}, {len(vals)}),"
                f" got {vecs.shape}"
            )
        if len(vals) > 1 and np.any(np.diff(vals) < -1e-12):
            raise ValidationError("eigenvalues must be sorted ascending")

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def orthonormality_defect(self) -> float:
        """Max-entry deviation of U^T U from the identity."""
        m = self.count
        g = self.eigenvectors.T @ self.eigenvectors
        return float(np.abs(g - np.eye(m)).max()) if m else 0.0

    def max_residual(self, apply: Callable[[np.ndarray], np.ndarray]) -> float:
        """Largest 2-norm residual |A u_i - lambda_i u_i| over the pairs."""
        worst = 0.0
        for lam, u in zip(self.eigenvalues, self.eigenvectors.T):
            worst = max(worst, float(np.linalg.norm(apply(u) - lam * u)))
        return worst


def _as_apply(operator) -> tuple[Callable[[np.ndarray], np.ndarray], int]:
    """Normalize a matrix or callable into (matvec, dimension)."""
    if callable(operator):
        raise ValidationError("pass (apply, n) explicitly for callables")
    n = operator.shape[0]
    if sp.issparse(operator):
        return (lambda v: operator @ v), n
    mat = np.asarray(operator, dtype=np.float64)
    return (lambda v: mat @ v), n


def dense_eigh(matrix, dense_cap: int = DENSE_CAP_DEFAULT) -> SpectralBasis:
    """Full symmetric eigendecomposition.

    Accepts a dense array or scipy sparse matrix.  Fails with
    ``DimensionTooLarge`` above ``dense_cap`` and ``NotSymmetric`` when
    the max-entry asymmetry exceeds 1e-10.
    """
    if sp.issparse(matrix):
        n = matrix.shape[0]
        if n > dense_cap:
            raise DimensionTooLarge(f"N={n} exceeds dense cap {dense_cap}")
        asym = abs(matrix - matrix.T)
        defect = float(asym.max()) if asym.nnz else 0.0
        dense = matrix.toarray()
    else:
        dense = np.asarray(matrix, dtype=np.float64)
        n = dense.shape[0]
        if n > dense_cap:
            raise DimensionTooLarge(f"N={n} exceeds dense cap {dense_cap}")
        defect = float(np.abs(dense - dense.T).max()) if n else 0.0
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ValidationError("matrix must be square")
    if defect > 1e-10:
        raise NotSymmetric(f"max asymmetry {defect:.3e}")
    vals, vecs = np.linalg.eigh(dense)
    return SpectralBasis(vals, vecs, is_full=True, source_dim=n)


def _fresh_start(rng, basis_vectors: list[np.ndarray], n: int) -> np.ndarray:
    """Random unit vector orthogonal to everything found so far."""
    for _ in range(5):
        v = rng.standard_normal(n)
        for _ in range(2):
            for q in basis_vectors:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    raise BreakdownNotRecovered(
        "could not generate a new orthogonal start vector"
    )


def lanczos_extremal(
    apply,
    n: int,
    m: int,
    mode: str = "both_ends",
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int | None = None,
) -> SpectralBasis:
    """Partial eigendecomposition via restarted Lanczos iteration.

    ``apply`` is a symmetric matrix-vector oracle (a matrix is also
    accepted).  Builds an orthonormal Krylov basis with full
    reorthogonalization each step; on breakdown (invariant subspace
    found) a fresh random start vector opens a new tridiagonal block.
    Ritz pairs are extracted from the accumulated block-tridiagonal
    projection and accepted once their residual bound drops below
    ``tol``.

    ``mode`` selects which end of the spectrum to converge:
    ``smallest``, ``largest``, or ``both_ends`` (ceil(m/2) smallest plus
    floor(m/2) largest).  Fewer than m pairs are returned if the
    iteration cap (default 10*m) is hit first; the returned basis
    reports its own count.
    """
    if not callable(apply):
        apply, n = _as_apply(apply)
    if mode not in MODES:
        raise InvalidMode(f"mode must be one of {MODES}, got {mode!r}")
    if not 1 <= m <= n:
        raise ValidationError(f"need 1 <= m <= n, got m={m}, n={n}")
    if max_iter is None:
        max_iter = 10 * m
    max_iter = max(max_iter, m)
    rng = np.random.default_rng(seed)
    breakdown_tol = 1e-12

    vectors: list[np.ndarray] = []     # orthonormal Krylov vectors
    diag: list[float] = []             # projection diagonal
    offdiag: list[float] = []          # coupling to the next vector (0 across blocks)
    block_ends: list[int] = []         # indices where a block was closed
    exhausted = False

    q = _fresh_start(rng, vectors, n)
    beta_prev = 0.0
    for _ in range(max_iter):
        vectors.append(q)
        w = np.asarray(apply(q), dtype=np.float64)
        alpha = float(q @ w)
        diag.append(alpha)
        w = w - alpha * q
        if beta_prev != 0.0:
            w = w - beta_prev * vectors[-2]
        # full reorthogonalization, twice for numerical safety
        for _ in range(2):
            for qk in vectors:
                w -= (qk @ w) * qk
        beta = float(np.linalg.norm(w))
        j = len(vectors)

        # close the block on breakdown; j = n means the space is spanned
        block_done = beta <= breakdown_tol or j >= n
        if block_done:
            offdiag.append(0.0)
            beta_prev = 0.0
            if j >= n:
                exhausted = True
        else:
            offdiag.append(beta)
            beta_prev = beta

        theta, s_mat = _ritz(diag, offdiag, j)
        bounds = _residual_bounds(s_mat, offdiag, block_ends, j, exhausted)
        want = _requested_indices(mode, m, j)
        if exhausted or (len(want) == m and np.all(bounds[want] < tol)):
            if block_done:
                block_ends.append(j - 1)
            break
        if block_done:
            block_ends.append(j - 1)
            q = _fresh_start(rng, vectors, n)
        else:
            q = w / beta

    j = len(vectors)
    theta, s_mat = _ritz(diag, offdiag, j)
    bounds = _residual_bounds(s_mat, offdiag, block_ends, j, exhausted)
    want = _requested_indices(mode, m, j)
    keep = [i for i in want if bounds[i] < tol]
    keep.sort(key=lambda i: theta[i])
    basis_mat = np.column_stack(vectors) if vectors else np.zeros((n, 0))
    vecs = basis_mat @ s_mat[:, keep] if keep else np.zeros((n, 0))
    vals = theta[keep] if keep else np.zeros(0)

    # verify the estimated residuals against the true ones and drop any
    # pair the estimate was too optimistic about
    good = [
        i
        for i in range(len(vals))
        if np.linalg.norm(np.asarray(apply(vecs[:, i])) - vals[i] * vecs[:, i]) < tol
    ]
    vals, vecs = vals[good], vecs[:, good]
    return SpectralBasis(vals, vecs, is_full=(len(vals) == n), source_dim=n)


def _ritz(diag, offdiag, j):
    """Eigenpairs of the block-tridiagonal projection matrix.

    Closed blocks already carry a 0.0 in ``offdiag``, so the couplings
    can be copied verbatim.
    """
    t = np.zeros((j, j))
    idx = np.arange(j)
    t[idx, idx] = diag
    if j > 1:
        off = np.asarray(offdiag[: j - 1])
        t[idx[:-1], idx[1:]] = off
        t[idx[1:], idx[:-1]] = off
    theta, s_mat = np.linalg.eigh(t)
    return theta, s_mat


def _residual_bounds(s_mat, offdiag, block_ends, j, exhausted):
    """Per-Ritz-pair residual estimate |beta_end * s_last| per block."""
    if exhausted:
        return np.zeros(s_mat.shape[1])
    ends = set(block_ends)
    ends.add(j - 1)
    acc = np.zeros(s_mat.shape[1])
    for e in ends:
        acc += (offdiag[e] * s_mat[e, :]) ** 2
    return np.sqrt(acc)


def _requested_indices(mode: str, m: int, j: int) -> np.ndarray:
    """Indices (into ascending Ritz values) targeted by the mode."""
    if mode == "smallest":
        return np.arange(min(m, j))
    if mode == "largest":
        return np.arange(max(j - m, 0), j)
    lo = (m + 1) // 2
    hi = m // 2
    idx = set(range(min(lo, j))) | set(range(max(j - hi, 0), j))
    return np.array(sorted(idx), dtype=np.int64)


def compute_basis(
    laplacian,
    basis_mode: str = "dense",
    basis_m: int = 0,
    mode: str = "both_ends",
    seed: int = 0,
    dense_cap: int = DENSE_CAP_DEFAULT,
) -> SpectralBasis:
    """Dispatch to the dense or Lanczos route.

    ``basis_mode='dense'`` ignores ``basis_m`` and returns the full
    basis; ``basis_mode='lanczos'`` returns ``basis_m`` extremal pairs
    (``mode`` picks the end(s)).
    """
    if basis_mode == "dense":
        return dense_eigh(laplacian, dense_cap=dense_cap)
    if basis_mode == "lanczos":
        n = laplacian.shape[0]
        if basis_m < 1:
            raise ValidationError("basis_m must be >= 1 in lanczos mode")
        return lanczos_extremal(laplacian, n=n, m=basis_m, mode=mode, seed=seed)
    raise InvalidMode(f"basis_mode must be 'dense' or 'lanczos', got {basis_mode!r}")


# --- binary cache -----------------------------------------------------------

def save_basis(basis: SpectralBasis, path) -> None:
    """Write a basis to the little-endian binary cache format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _MAGIC + struct.pack(
        "<IQQB", _VERSION, basis.source_dim, basis.count, int(basis.is_full)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(basis.eigenvalues.astype("<f8").tobytes())
        fh.write(basis.eigenvectors.astype("<f8").flatten(order="F").tobytes())


def load_basis(path) -> SpectralBasis:
    """Read a basis written by ``save_basis``."""
    path = Path(path)
    raw = path.read_bytes()
    head = struct.calcsize("<IQQB")
    if len(raw) < 4 + head or raw[:4] != _MAGIC:
        raise ValidationError(f"{path} is not a basis cache file")
    version, n, m, is_full = struct.unpack("<IQQB", raw[4 : 4 + head])
    if version != _VERSION:
        raise ValidationError(f"unsupported basis cache version {version}")
    need = 4 + head + 8 * m + 8 * n * m
    if len(raw) != need:
        raise ValidationError(f"basis cache truncated: {len(raw)} != {need}")
    vals = np.frombuffer(raw, dtype="<f8", count=m, offset=4 + head)
    vecs = np.frombuffer(raw, dtype="<f8", count=n * m, offset=4 + head + 8 * m)
    vecs = vecs.reshape((n, m), order="F")
    return SpectralBasis(vals.copy(), vecs.copy(), bool(is_full), int(n))


def basis_cache_path(cache_dir, edges_file, basis_mode: str, basis_m: int) -> Path:
    """Cache location keyed by the content hash of the edge list file."""
    digest = hashlib.sha256(Path(edges_file).read_bytes()).hexdigest()[:16]
    key = f"{digest}-{basis_mode}-m{basis_m}"
    return Path(cache_dir) / key / "basis.bin"
