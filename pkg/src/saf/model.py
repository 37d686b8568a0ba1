"""The dual-branch node classification model.

Pipeline per forward pass:

1. A two-layer MLP maps features to class logits ``Z0`` (N x C).
2. Spectral branch: the learnable non-negative filter is applied to
   ``Z0`` through its sparse polynomial recurrence, giving ``Z_f``.
3. Spatial branch: the same filter, inverted on the cached spectral
   basis, induces the adapted propagation matrix; ``Z_a`` is the
   damped L-step recurrence ``Z = (1-eta) Z0 + eta * A_adapted Z``.
4. Amalgamation: per-node sigmoid attention scores for each branch are
   normalized to sum to 1 and mix the two branch logits.

All stages are written with the autodiff ops, so one implementation
serves plain inference (arrays in, arrays out) and gradient-based
training (the trainer feeds parameter Tensors into the same functions).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import MissingCheckpoint, NonPositiveDelta, ShapeMismatch, ValidationError
from .filters import (
    BernsteinFilter,
    ChebInterpFilter,
    G_FLOOR_DEFAULT,
    apply_filter_node,
    response_node,
)
from .newgraph import adapted_apply_node, adapted_graph_node
from .spectra import SpectralBasis

__all__ = [
    "MlpParams",
    "AttentionParams",
    "SafParams",
    "init_params",
    "flatten_params",
    "unflatten_params",
    "mlp_forward",
    "mlp_forward_node",
    "spatial_branch",
    "spatial_branch_node",
    "amalgamate",
    "amalgamate_node",
    "forward",
    "forward_node",
    "save_checkpoint",
    "load_checkpoint",
]

DELTA_DEFAULT = 1e-9


@dataclass(frozen=True)
class MlpParams:
    """Two-layer MLP weights: (F, H), (H,), (H, C), (C,)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite entries in {name}")
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ShapeMismatch("weight matrices must be 2-D")
        if self.w1.shape[1] != self.b1.shape[0] or self.w1.shape[1] != self.w2.shape[0]:
            raise ShapeMismatch("hidden dimensions disagree")
        if self.w2.shape[1] != self.b2.shape[0]:
            raise ShapeMismatch("output dimensions disagree")

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class AttentionParams:
    """One-layer per-branch scoring maps over the C-dim branch logits."""

    spectral_w: np.ndarray
    spectral_b: np.ndarray
    spatial_w: np.ndarray
    spatial_b: np.ndarray

    def __post_init__(self) -> None:
        for name in ("spectral_w", "spectral_b", "spatial_w", "spatial_b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite entries in {name}")
        if self.spectral_b.shape != (1,) or self.spatial_b.shape != (1,):
            raise ShapeMismatch("attention biases must be scalars")
        if self.spectral_w.shape != self.spatial_w.shape:
            raise ShapeMismatch("attention weight shapes disagree")


@dataclass(frozen=True)
class SafParams:
    """All learnables: MLP, polynomial filter, attention maps."""

    mlp: MlpParams
    filt: BernsteinFilter | ChebInterpFilter
    attention: AttentionParams

    @property
    def backbone(self) -> str:
        return "cheb" if isinstance(self.filt, ChebInterpFilter) else "bernstein"


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    num_features: int,
    num_classes: int,
    hidden: int = 64,
    order: int = 10,
    backbone: str = "bernstein",
    rng: np.random.Generator | None = None,
) -> SafParams:
    """Seeded initialization.

    MLP and attention weights use the uniform fan-in scheme; filter
    coefficients start at all-ones, i.e. an identity response, so the
    adapted graph starts as the identity (a neutral prior).
    """
    rng = rng or np.random.default_rng(0)
    mlp = MlpParams(
        w1=_uniform_fan_in(rng, num_features, (num_features, hidden)),
        b1=_uniform_fan_in(rng, num_features, (hidden,)),
        w2=_uniform_fan_in(rng, hidden, (hidden, num_classes)),
        b2=_uniform_fan_in(rng, hidden, (num_classes,)),
    )
    coeffs = np.ones(order + 1)
    filt = (
        ChebInterpFilter(order, coeffs)
        if backbone == "cheb"
        else BernsteinFilter(order, coeffs)
    )
    attention = AttentionParams(
        spectral_w=_uniform_fan_in(rng, num_classes, (num_classes,)),
        spectral_b=_uniform_fan_in(rng, num_classes, (1,)),
        spatial_w=_uniform_fan_in(rng, num_classes, (num_classes,)),
        spatial_b=_uniform_fan_in(rng, num_classes, (1,)),
    )
    return SafParams(mlp, filt, attention)


def flatten_params(params: SafParams) -> dict[str, np.ndarray]:
    """Named copies of every learnable array."""
    return {
        "w1": params.mlp.w1.copy(),
        "b1": params.mlp.b1.copy(),
        "w2": params.mlp.w2.copy(),
        "b2": params.mlp.b2.copy(),
        "filter": params.filt.coeffs.copy(),
        "att_wf": params.attention.spectral_w.copy(),
        "att_bf": params.attention.spectral_b.copy(),
        "att_wa": params.attention.spatial_w.copy(),
        "att_ba": params.attention.spatial_b.copy(),
    }


def unflatten_params(
    arrays: dict[str, np.ndarray], backbone: str, order: int
) -> SafParams:
    filt_cls = ChebInterpFilter if backbone == "cheb" else BernsteinFilter
    return SafParams(
        mlp=MlpParams(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"]),
        filt=filt_cls(order, arrays["filter"]),
        attention=AttentionParams(
            arrays["att_wf"], arrays["att_bf"], arrays["att_wa"], arrays["att_ba"]
        ),
    )


def _dropout_mask(rng, shape, rate: float) -> np.ndarray:
    # inverted dropout: scale at train time, identity at eval time
    return (rng.random(shape) >= rate) / (1.0 - rate)


def mlp_forward_node(
    x, pt: dict, dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None, train_mode: bool = False,
) -> Tensor:
    """Differentiable MLP forward; ``pt`` maps names to Tensors/arrays."""
    x = np.asarray(x, dtype=np.float64)
    w1 = pt["w1"]
    f_in = w1.value.shape[0] if isinstance(w1, Tensor) else np.asarray(w1).shape[0]
    if x.ndim != 2 or x.shape[1] != f_in:
        raise ShapeMismatch(f"features must be (N, {f_in}), got {x.shape}")
    if train_mode and dropout_rate > 0.0:
        rng = rng or np.random.default_rng(0)
        x = x * _dropout_mask(rng, x.shape, dropout_rate)
    h = ad.relu(ad.add(ad.matmul(x, pt["w1"]), pt["b1"]))
    if train_mode and dropout_rate > 0.0:
        h = ad.mul(h, _dropout_mask(rng, h.value.shape, dropout_rate))
    return ad.add(ad.matmul(h, pt["w2"]), pt["b2"])


def mlp_forward(
    x: np.ndarray, mlp: MlpParams, dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None, train_mode: bool = False,
) -> np.ndarray:
    """MLP forward on plain arrays (dropout only in train mode)."""
    pt = {"w1": mlp.w1, "b1": mlp.b1, "w2": mlp.w2, "b2": mlp.b2}
    return mlp_forward_node(x, pt, dropout_rate, rng, train_mode).value


def spatial_branch_node(z0, propagate, eta: float, layers: int) -> Tensor:
    """Damped propagation recurrence; ``propagate`` maps Tensor -> Tensor."""
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must be in [0, 1], got {eta}")
    if layers < 0:
        raise ValidationError(f"layers must be >= 0, got {layers}")
    z0 = z0 if isinstance(z0, Tensor) else Tensor(np.asarray(z0, dtype=np.float64))
    z = z0
    for _ in range(layers):
        z = ad.add(ad.mul(z0, 1.0 - eta), ad.mul(propagate(z), eta))
    return z


def spatial_branch(z0: np.ndarray, propagation, eta: float, layers: int) -> np.ndarray:
    """L-step recurrence ``Z = (1-eta) Z0 + eta * P @ Z`` on plain arrays.

    ``propagation`` may be an AdaptedGraph, a dense array, or a sparse
    matrix.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    mat = getattr(propagation, "matrix", propagation)
    if mat.shape[1] != z0.shape[0]:
        raise ShapeMismatch(
            f"propagation {mat.shape} does not match signal {z0.shape}"
        )
    if hasattr(mat, "toarray") or isinstance(mat, np.ndarray):
        apply = lambda z: ad.spmm(mat, z)  # noqa: E731
    else:
        raise ValidationError("unsupported propagation operator")
    return spatial_branch_node(z0, apply, eta, layers).value


def amalgamate_node(z_f, z_a, pt: dict, delta: float = DELTA_DEFAULT):
    """Attention mixing; returns (Y, kappa_f, kappa_a) as Tensors."""
    if delta <= 0:
        raise NonPositiveDelta(f"delta must be positive, got {delta}")
    wf = ad.reshape(pt["att_wf"], (-1, 1))
    wa = ad.reshape(pt["att_wa"], (-1, 1))
    kf = ad.sigmoid(ad.add(ad.matmul(z_f, wf), pt["att_bf"]))
    ka = ad.sigmoid(ad.add(ad.matmul(z_a, wa), pt["att_ba"]))
    denom = ad.maximum_scalar(ad.add(kf, ka), delta)
    kf_n = ad.div(kf, denom)
    ka_n = ad.div(ka, denom)
    y = ad.add(ad.mul(kf_n, z_f), ad.mul(ka_n, z_a))
    return y, kf_n, ka_n


def amalgamate(
    z_f: np.ndarray, z_a: np.ndarray, attention: AttentionParams,
    delta: float = DELTA_DEFAULT,
):
    """Attention mixing on plain arrays; kappas returned as (N,) vectors."""
    z_f = np.asarray(z_f, dtype=np.float64)
    z_a = np.asarray(z_a, dtype=np.float64)
    if z_f.shape != z_a.shape:
        raise ShapeMismatch(f"branch shapes disagree: {z_f.shape} vs {z_a.shape}")
    pt = {
        "att_wf": attention.spectral_w,
        "att_bf": attention.spectral_b,
        "att_wa": attention.spatial_w,
        "att_ba": attention.spatial_b,
    }
    y, kf, ka = amalgamate_node(z_f, z_a, pt, delta)
    return y.value, kf.value.reshape(-1), ka.value.reshape(-1)


def forward_node(
    x: np.ndarray,
    laplacian,
    basis: SpectralBasis | None,
    pt: dict,
    config,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Full differentiable pipeline; returns (Y, diagnostics).

    ``config`` is duck-typed: the fields used here are dropout, order,
    backbone, tau, eta, epsilon, layers, delta and the three ablation
    flags (no_attention, no_spectral, no_spatial).
    """
    backbone = getattr(config, "backbone", "bernstein")
    order = config.order
    z0 = mlp_forward_node(x, pt, config.dropout, rng, train_mode)

    if getattr(config, "no_spatial", False):
        z_f = apply_filter_node(pt["filter"], backbone, order, laplacian, z0)
        return z_f, {"kappa_f_mean": 1.0, "kappa_a_mean": 0.0}

    if basis is None:
        raise ValidationError("the spatial branch needs a spectral basis")
    resp = response_node(
        pt["filter"], backbone, order, basis.eigenvalues, G_FLOOR_DEFAULT
    )
    if config.epsilon > 0.0:
        mat = adapted_graph_node(resp, basis, config.tau)
        keep = np.abs(mat.value) > config.epsilon
        mat = ad.mul(mat, keep)
        propagate = lambda z: ad.matmul(mat, z)  # noqa: E731
    else:
        propagate = lambda z: adapted_apply_node(resp, basis, config.tau, z)  # noqa: E731
    z_a = spatial_branch_node(z0, propagate, config.eta, config.layers)

    if getattr(config, "no_spectral", False):
        return z_a, {"kappa_f_mean": 0.0, "kappa_a_mean": 1.0}

    z_f = apply_filter_node(pt["filter"], backbone, order, laplacian, z0)
    if getattr(config, "no_attention", False):
        y = ad.mul(ad.add(z_f, z_a), 0.5)
        return y, {"kappa_f_mean": 0.5, "kappa_a_mean": 0.5}
    y, kf, ka = amalgamate_node(z_f, z_a, pt, config.delta)
    return y, {
        "kappa_f_mean": float(kf.value.mean()),
        "kappa_a_mean": float(ka.value.mean()),
    }


def forward(
    x: np.ndarray,
    laplacian,
    basis: SpectralBasis | None,
    params: SafParams,
    config,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Full pipeline on plain arrays; returns (Y, diagnostics)."""
    pt = flatten_params(params)
    y, diag = forward_node(x, laplacian, basis, pt, config, train_mode, rng)
    return y.value, diag


# --- checkpointing ----------------------------------------------------------

def save_checkpoint(params: SafParams, config_dict: dict, seed: int, path) -> None:
    """Write all parameter tensors plus a config echo as JSON."""
    payload = {
        "format": "saf-checkpoint",
        "version": 1,
        "backbone": params.backbone,
        "order": params.filt.order,
        "seed": int(seed),
        "config": config_dict,
        "params": {k: v.tolist() for k, v in flatten_params(params).items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[SafParams, dict, int]:
    """Read a checkpoint; returns (params, config dict, seed)."""
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(f"no checkpoint at {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MissingCheckpoint(f"unreadable checkpoint {path}: {exc}") from exc
    if payload.get("format") != "saf-checkpoint":
        raise MissingCheckpoint(f"{path} is not a checkpoint file")
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()}
    params = unflatten_params(arrays, payload["backbone"], payload["order"])
    return params, payload.get("config", {}), int(payload.get("seed", 0))
