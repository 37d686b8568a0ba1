"""Full-batch training: loss, exact gradients, Adam, early stopping, splits.

The trainer never materializes the adapted graph when ``epsilon == 0``;
the spatial branch then runs through the factored low-rank application,
which keeps an epoch at O(N * basis_size * classes).  Grid search wraps
``fit`` with deterministic per-configuration RNG streams and an optional
process pool.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    DivergedRun,
    EmptyMask,
    InfeasibleScheme,
    MalformedSplit,
    NonFiniteValue,
    ValidationError,
)
from .graphs import Graph, normalized_laplacian
from .model import (
    SafParams,
    flatten_params,
    forward_node,
    init_params,
    unflatten_params,
)
from .spectra import SpectralBasis, compute_basis

__all__ = [
    "SEARCH_SPACE",
    "TrainConfig",
    "Split",
    "AdamState",
    "FitResult",
    "loss",
    "accuracy",
    "gradients",
    "adam_step",
    "fit",
    "grid_search",
    "make_split",
    "confidence_interval",
]

# Hyperparameter grid used by random/exhaustive search.  The polynomial
# order stays fixed at 10 and is deliberately not part of the space.
SEARCH_SPACE: dict[str, tuple] = {
    "lr": (1e-3, 5e-3, 1e-2, 5e-2, 0.1),
    "weight_decay": (0.0, 1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2),
    "dropout": tuple(round(0.1 * i, 1) for i in range(9)),
    "layers": tuple(range(1, 11)),
    "tau": tuple(round(0.1 * i, 1) for i in range(1, 11)),
    "eta": tuple(round(0.1 * i, 1) for i in range(1, 11)),
    "epsilon": (0.0, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2),
}


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    ``order`` is the polynomial degree of the learnable filter; ``layers``
    is the number of damped propagation steps; ``tau`` scales the adapted
    graph; ``eta`` is the propagation update rate; ``epsilon`` the edge
    threshold (0 keeps the factored, never-materialized propagation).
    """

    lr: float = 0.05
    weight_decay: float = 5e-4
    dropout: float = 0.5
    order: int = 10
    layers: int = 2
    tau: float = 0.5
    eta: float = 0.5
    epsilon: float = 0.0
    delta: float = 1e-9
    hidden: int = 64
    max_epochs: int = 1000
    patience: int = 200
    seed: int = 0
    basis_mode: str = "dense"
    basis_m: int = 0
    backbone: str = "bernstein"
    no_attention: bool = False
    no_spectral: bool = False
    no_spatial: bool = False

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValidationError(f"order must be >= 1, got {self.order}")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValidationError(
                f"patience must be in [1, max_epochs], got {self.patience}"
            )
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.layers < 0:
            raise ValidationError(f"layers must be >= 0, got {self.layers}")
        if self.tau <= 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError(f"eta must be in [0, 1], got {self.eta}")
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.delta <= 0:
            raise ValidationError(f"delta must be positive, got {self.delta}")
        if self.hidden < 1:
            raise ValidationError("hidden must be >= 1")
        if self.backbone not in ("bernstein", "cheb"):
            raise ValidationError(f"unknown backbone {self.backbone!r}")
        if self.basis_mode not in ("dense", "lanczos"):
            raise ValidationError(f"unknown basis_mode {self.basis_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def _as_index_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if arr.size and arr.min() < 0:
        raise MalformedSplit(f"{name} indices must be non-negative")
    if np.unique(arr).size != arr.size:
        raise MalformedSplit(f"duplicate indices inside {name} set")
    return np.sort(arr)


@dataclass(frozen=True)
class Split:
    """Disjoint train/val/test node index sets (stored sorted)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self) -> None:
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, _as_index_array(getattr(self, name), name))
        if self.train.size == 0:
            raise MalformedSplit("train set must be non-empty")
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            if np.intersect1d(getattr(self, a), getattr(self, b)).size:
                raise MalformedSplit(f"{a} and {b} sets overlap")

    def check_against(self, num_nodes: int) -> None:
        top = max(
            int(part.max()) for part in (self.train, self.val, self.test) if part.size
        )
        if top >= num_nodes:
            raise MalformedSplit(
                f"split references node {top} but the graph has {num_nodes} nodes"
            )


# --- loss and gradients -----------------------------------------------------

def loss(y, labels, mask) -> float:
    """Mean softmax cross-entropy of rows ``mask`` (no weight decay)."""
    mask = np.asarray(mask, dtype=np.int64).reshape(-1)
    if mask.size == 0:
        raise EmptyMask("loss mask is empty")
    yt = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=np.float64))
    return float(ad.softmax_cross_entropy(yt, labels, mask).value)


def accuracy(y: np.ndarray, labels: np.ndarray, mask) -> float:
    """Fraction of rows in ``mask`` whose argmax equals the label."""
    mask = np.asarray(mask, dtype=np.int64).reshape(-1)
    if mask.size == 0:
        raise EmptyMask("accuracy mask is empty")
    preds = np.argmax(np.asarray(y)[mask], axis=1)
    return float(np.mean(preds == np.asarray(labels)[mask]))


def gradients(
    features: np.ndarray,
    laplacian,
    basis: SpectralBasis | None,
    params,
    labels: np.ndarray,
    mask,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
    train_mode: bool = True,
):
    """One differentiable forward/backward pass over the whole graph.

    ``params`` may be a SafParams bundle or a name -> array dict; returns
    ``(loss_value, gradient dict, diagnostics)`` with one gradient array
    per learnable, shaped like its parameter.
    """
    mask = np.asarray(mask, dtype=np.int64).reshape(-1)
    if mask.size == 0:
        raise EmptyMask("gradient mask is empty")
    arrays = flatten_params(params) if isinstance(params, SafParams) else params
    pt = {k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
          for k, v in arrays.items()}
    y, diag = forward_node(features, laplacian, basis, pt, config, train_mode, rng)
    objective = ad.softmax_cross_entropy(y, labels, mask)
    value = float(objective.value)
    if not math.isfinite(value):
        raise NonFiniteValue(f"loss is {value}")
    ad.backward(objective)
    grads: dict[str, np.ndarray] = {}
    for name, tensor in pt.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.value)
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue(f"non-finite gradient for {name}")
        grads[name] = g
    return value, grads, diag


# --- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_arrays(cls, arrays: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in arrays.items()},
            v={k: np.zeros_like(v) for k, v in arrays.items()},
        )


def adam_step(
    arrays: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update, in place.

    Weight decay enters as an L2 gradient term on every parameter.  The
    filter coefficients are clamped at 0 afterwards, so the non-negative
    parameterization survives every step.
    """
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in arrays.items():
        g = grads[name]
        if weight_decay:
            g = g + weight_decay * p
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        p -= lr * (state.m[name] / bc1) / (np.sqrt(state.v[name] / bc2) + eps)
    if "filter" in arrays:
        np.maximum(arrays["filter"], 0.0, out=arrays["filter"])
    return arrays


# --- fit --------------------------------------------------------------------

@dataclass
class FitResult:
    """Best parameters plus the per-epoch record of one training run."""

    params: SafParams
    history: list[dict]
    best_epoch: int
    best_val_acc: float
    best_val_loss: float
    test_acc: float
    decomposition_ms: float
    train_ms: float


def fit(
    graph: Graph,
    split: Split,
    config: TrainConfig,
    basis: SpectralBasis | None = None,
    laplacian=None,
) -> FitResult:
    """Train on the full graph with early stopping on validation accuracy.

    The parameters from the best validation epoch are restored (ties are
    broken by lower validation loss).  The run stops once ``patience``
    consecutive epochs fail to improve.  Identical seed, config and data
    give bit-identical results.
    """
    if graph.num_features == 0:
        raise ValidationError("training requires node features")
    split.check_against(graph.num_nodes)
    if split.val.size == 0 or split.test.size == 0:
        raise MalformedSplit("fit needs non-empty val and test sets")

    x = graph.features
    labels = graph.labels
    if laplacian is None:
        laplacian = normalized_laplacian(graph)
    t0 = time.perf_counter()
    if basis is None and not config.no_spatial:
        basis = compute_basis(
            laplacian, config.basis_mode, config.basis_m, seed=config.seed
        )
    decomposition_ms = (time.perf_counter() - t0) * 1000.0

    rng = np.random.default_rng(config.seed)
    arrays = flatten_params(
        init_params(
            graph.num_features,
            graph.num_classes,
            hidden=config.hidden,
            order=config.order,
            backbone=config.backbone,
            rng=rng,
        )
    )
    state = AdamState.for_arrays(arrays)

    history: list[dict] = []
    best_val_acc = -np.inf
    best_val_loss = np.inf
    best_test_acc = 0.0
    best_epoch = -1
    best_arrays = {k: v.copy() for k, v in arrays.items()}
    stale = 0

    t1 = time.perf_counter()
    for epoch in range(config.max_epochs):
        t_epoch = time.perf_counter()
        try:
            train_loss, grads, _ = gradients(
                x, laplacian, basis, arrays, labels, split.train,
                config, rng=rng, train_mode=True,
            )
            adam_step(
                arrays, grads, state, config.lr, weight_decay=config.weight_decay
            )
            pt_eval = {k: Tensor(v) for k, v in arrays.items()}
            y_eval, diag = forward_node(
                x, laplacian, basis, pt_eval, config, train_mode=False
            )
        except NonFiniteValue as exc:
            raise DivergedRun(f"run diverged at epoch {epoch}: {exc}") from exc
        y_val = y_eval.value
        if not np.all(np.isfinite(y_val)):
            raise DivergedRun(f"non-finite logits at epoch {epoch}")
        val_acc = accuracy(y_val, labels, split.val)
        test_acc = accuracy(y_val, labels, split.test)
        val_loss = loss(y_val, labels, split.val)
        history.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_acc": val_acc,
                "test_acc": test_acc,
                "kappa_f_mean": diag["kappa_f_mean"],
                "kappa_a_mean": diag["kappa_a_mean"],
                "epoch_ms": (time.perf_counter() - t_epoch) * 1000.0,
            }
        )
        if val_acc > best_val_acc or (
            val_acc == best_val_acc and val_loss < best_val_loss
        ):
            best_val_acc = val_acc
            best_val_loss = val_loss
            best_test_acc = test_acc
            best_epoch = epoch
            best_arrays = {k: v.copy() for k, v in arrays.items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    train_ms = (time.perf_counter() - t1) * 1000.0

    return FitResult(
        params=unflatten_params(best_arrays, config.backbone, config.order),
        history=history,
        best_epoch=best_epoch,
        best_val_acc=best_val_acc,
        best_val_loss=best_val_loss,
        test_acc=best_test_acc,
        decomposition_ms=decomposition_ms,
        train_ms=train_ms,
    )


# --- grid search ------------------------------------------------------------

def _derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _grid_worker(task):
    graph, split, config, basis, laplacian, index = task
    try:
        res = fit(graph, split, config, basis=basis, laplacian=laplacian)
        return {
            "index": index,
            "config": config.to_dict(),
            "val_acc": res.best_val_acc,
            "val_loss": res.best_val_loss,
            "test_acc": res.test_acc,
            "best_epoch": res.best_epoch,
            "diverged": False,
        }
    except DivergedRun as exc:
        return {
            "index": index,
            "config": config.to_dict(),
            "val_acc": 0.0,
            "val_loss": None,
            "test_acc": 0.0,
            "best_epoch": -1,
            "diverged": True,
            "error": str(exc),
        }


def _leaderboard_key(entry: dict):
    val_loss = entry["val_loss"]
    return (
        -entry["val_acc"],
        np.inf if val_loss is None else val_loss,
        entry["index"],
    )


def grid_search(
    graph: Graph,
    split: Split,
    space: dict[str, tuple] | None = None,
    budget: int = 0,
    base_config: TrainConfig | None = None,
    seed: int = 0,
    jobs: int = 1,
    laplacian=None,
    basis: SpectralBasis | None = None,
):
    """Hyperparameter search over ``space``; returns (best config, leaderboard).

    ``budget == 0`` enumerates the full product of the space; ``budget > 0``
    draws that many seeded random combinations.  Each candidate trains with
    its own RNG stream derived from ``(seed, index)``, so reruns with the
    same arguments reproduce the leaderboard bit for bit.  Selection is by
    validation accuracy, ties by lower validation loss, then enumeration
    order.  Diverging candidates are recorded and ranked last rather than
    aborting the search.
    """
    space = dict(SEARCH_SPACE) if space is None else space
    for key, choices in space.items():
        if len(choices) == 0:
            raise ValidationError(f"empty choice list for {key!r}")
    base = base_config if base_config is not None else TrainConfig()
    keys = sorted(space)
    if budget and budget > 0:
        rng = np.random.default_rng(seed)
        draws = [
            {k: space[k][int(rng.integers(len(space[k])))] for k in keys}
            for _ in range(budget)
        ]
    else:
        draws = [
            dict(zip(keys, combo))
            for combo in itertools.product(*(space[k] for k in keys))
        ]
    configs = [
        replace(base, **draw, seed=_derived_seed(seed, i))
        for i, draw in enumerate(draws)
    ]

    if laplacian is None:
        laplacian = normalized_laplacian(graph)
    share_basis = not ({"basis_mode", "basis_m"} & set(keys))
    if basis is None and share_basis and not base.no_spatial:
        basis = compute_basis(laplacian, base.basis_mode, base.basis_m, seed=seed)
    shared = basis if share_basis else None

    tasks = [
        (graph, split, cfg, shared, laplacian, i) for i, cfg in enumerate(configs)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_grid_worker, tasks))
    else:
        entries = [_grid_worker(task) for task in tasks]

    leaderboard = sorted(entries, key=_leaderboard_key)
    best_config = configs[leaderboard[0]["index"]]
    return best_config, leaderboard


# --- splits -----------------------------------------------------------------

def make_split(
    graph: Graph,
    scheme: str,
    seed: int = 0,
    train_per_class: int = 20,
    val_size: int = 500,
    test_size: int = 1000,
) -> Split:
    """Deterministic split of the nodes.

    ``standard``: ``train_per_class`` nodes from every class (stratified),
    then ``val_size`` + ``test_size`` nodes from the remainder.
    ``sparse``: 2.5% / 2.5% / rest.  ``dense``: 60% / 20% / rest.
    Percentages round down; the remainder goes to the test set.
    """
    n = graph.num_nodes
    labels = graph.labels
    rng = np.random.default_rng(seed)
    if scheme == "standard":
        picks = []
        for c in range(graph.num_classes):
            members = np.flatnonzero(labels == c)
            if members.size < train_per_class:
                raise InfeasibleScheme(
                    f"class {c} has {members.size} nodes; the standard scheme "
                    f"needs {train_per_class} per class"
                )
            picks.append(rng.permutation(members)[:train_per_class])
        train = np.concatenate(picks)
        rest = np.setdiff1d(np.arange(n), train)
        if rest.size < val_size + test_size:
            raise InfeasibleScheme(
                f"{rest.size} nodes left after the train draw; "
                f"need {val_size + test_size} for val+test"
            )
        rest = rng.permutation(rest)
        return Split(train, rest[:val_size], rest[val_size : val_size + test_size])
    if scheme == "sparse":
        share = int(math.floor(0.025 * n))
        if share == 0 or n - 2 * share == 0:
            raise InfeasibleScheme(f"{n} nodes are too few for the sparse scheme")
        perm = rng.permutation(n)
        return Split(perm[:share], perm[share : 2 * share], perm[2 * share :])
    if scheme == "dense":
        n_train = int(math.floor(0.6 * n))
        n_val = int(math.floor(0.2 * n))
        if n_train == 0 or n_val == 0 or n - n_train - n_val == 0:
            raise InfeasibleScheme(f"{n} nodes are too few for the dense scheme")
        perm = rng.permutation(n)
        return Split(perm[:n_train], perm[n_train : n_train + n_val],
                     perm[n_train + n_val :])
    raise ValidationError(f"unknown split scheme {scheme!r}")


def confidence_interval(values) -> tuple[float, float]:
    """Mean and half-width of the normal-approximation 95% interval."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptyMask("no values to summarize")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, 0.0
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, half
