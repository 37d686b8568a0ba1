"""Dataset directory I/O, synthetic block-model graphs, split persistence.

Dataset directory layout (text, UTF-8, LF):

* ``edges.tsv``     one edge per line, ``src<TAB>dst``, 0-indexed;
* ``features.csv``  N lines of F comma-separated reals;
* ``labels.txt``    N lines, one integer class id each;
* ``meta.json``     ``{"num_nodes": N, "num_features": F, "num_classes": C}``.

Edge direction in files is ignored; duplicate, reversed-duplicate and
self-loop lines are dropped on load.  Saving uses 17 significant digits
for features, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadLabel,
    MalformedSplit,
    MissingFile,
    ShapeMismatch,
    ValidationError,
)
from .graphs import Graph
from .train import Split

__all__ = [
    "SbmSpec",
    "generate_sbm",
    "load_dataset",
    "save_dataset",
    "load_split",
    "save_split",
]

_DATASET_FILES = ("edges.tsv", "features.csv", "labels.txt", "meta.json")


@dataclass(frozen=True)
class SbmSpec:
    """Parameters of a stochastic block model with class-mean features.

    ``p_in``/``p_out`` are the intra/inter-class edge probabilities, so
    ``p_in > p_out`` yields a homophilic graph and ``p_in < p_out`` a
    heterophilic one.  Class mean vectors are placed with pairwise
    distance ``feature_signal``; node features add isotropic Gaussian
    noise of scale ``noise_std``.
    """

    num_nodes: int
    num_classes: int
    p_in: float
    p_out: float
    feature_dim: int = 16
    feature_signal: float = 1.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValidationError("the block model needs at least 2 classes")
        if self.num_nodes < self.num_classes:
            raise ValidationError("need at least one node per class")
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {p}")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.feature_signal < 0:
            raise ValidationError("feature_signal must be >= 0")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")


def _class_means(spec: SbmSpec, rng: np.random.Generator) -> np.ndarray:
    """Mean vectors with pairwise distance ``feature_signal``.

    With feature_dim >= num_classes the means sit on scaled orthogonal
    axes, which makes the pairwise distance exact; otherwise seeded
    random unit directions are scaled to the same target (the distance
    then only holds approximately, which is fine for a noisy stand-in).
    """
    c, f = spec.num_classes, spec.feature_dim
    scale = spec.feature_signal / math.sqrt(2.0)
    if f >= c:
        means = np.zeros((c, f))
        means[np.arange(c), np.arange(c)] = scale
        return means
    directions = rng.standard_normal((c, f))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return scale * directions


def generate_sbm(spec: SbmSpec) -> Graph:
    """Sample a labelled, feature-bearing block-model graph.

    Classes occupy contiguous, balanced index blocks (earlier classes get
    the remainder nodes).  The same spec reproduces the same graph bit
    for bit.
    """
    rng = np.random.default_rng(spec.seed)
    n, c = spec.num_nodes, spec.num_classes
    sizes = np.full(c, n // c)
    sizes[: n % c] += 1
    labels = np.repeat(np.arange(c), sizes)

    rows, cols = np.triu_indices(n, k=1)
    probs = np.where(labels[rows] == labels[cols], spec.p_in, spec.p_out)
    keep = rng.random(rows.size) < probs
    edges = np.column_stack((rows[keep], cols[keep]))

    means = _class_means(spec, rng)
    features = means[labels] + spec.noise_std * rng.standard_normal(
        (n, spec.feature_dim)
    )
    return Graph(
        num_nodes=n,
        edges=edges,
        labels=labels,
        features=features,
        num_classes=c,
    )


# --- dataset directories ----------------------------------------------------

def _read_meta(path: Path) -> tuple[int, int, int]:
    try:
        meta = json.loads(path.read_text())
        return (
            int(meta["num_nodes"]),
            int(meta["num_features"]),
            int(meta["num_classes"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"unreadable meta.json at {path}: {exc}") from exc


def _read_edges(path: Path, num_nodes: int) -> np.ndarray:
    pairs = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"{path}:{ln}: expected 'src<TAB>dst'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValidationError(f"{path}:{ln}: non-integer endpoint") from exc
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise ShapeMismatch(
                f"{path}:{ln}: edge ({u}, {v}) outside 0..{num_nodes - 1}"
            )
        if u == v:
            continue
        pairs.append((min(u, v), max(u, v)))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(np.asarray(pairs, dtype=np.int64), axis=0)


def _read_labels(path: Path, num_nodes: int, num_classes: int) -> np.ndarray:
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if len(lines) != num_nodes:
        raise ShapeMismatch(
            f"{path}: {len(lines)} labels for {num_nodes} nodes"
        )
    try:
        labels = np.array([int(line) for line in lines], dtype=np.int64)
    except ValueError as exc:
        raise BadLabel(f"{path}: non-integer label: {exc}") from exc
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise BadLabel(
            f"{path}: labels must be in [0, {num_classes}), "
            f"found range [{labels.min()}, {labels.max()}]"
        )
    return labels


def _read_features(path: Path, num_nodes: int, num_features: int) -> np.ndarray:
    try:
        feats = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"unreadable features at {path}: {exc}") from exc
    if feats.shape != (num_nodes, num_features):
        raise ShapeMismatch(
            f"{path}: features are {feats.shape}, "
            f"meta says ({num_nodes}, {num_features})"
        )
    return feats


def load_dataset(directory) -> Graph:
    """Read and validate a dataset directory into a Graph."""
    d = Path(directory)
    for name in _DATASET_FILES:
        if not (d / name).is_file():
            raise MissingFile(f"dataset file missing: {d / name}")
    n, f, c = _read_meta(d / "meta.json")
    edges = _read_edges(d / "edges.tsv", n)
    labels = _read_labels(d / "labels.txt", n, c)
    features = _read_features(d / "features.csv", n, f)
    return Graph(
        num_nodes=n, edges=edges, labels=labels, features=features, num_classes=c
    )


def save_dataset(graph: Graph, directory) -> None:
    """Write a Graph as a dataset directory (see module docstring)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "meta.json").write_text(
        json.dumps(
            {
                "num_nodes": graph.num_nodes,
                "num_features": graph.num_features,
                "num_classes": graph.num_classes,
            },
            sort_keys=True,
        )
        + "\n"
    )
    with (d / "edges.tsv").open("w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")
    np.savetxt(d / "features.csv", graph.features, delimiter=",", fmt="%.17g")
    (d / "labels.txt").write_text(
        "".join(f"{label}\n" for label in graph.labels)
    )


# --- split files ------------------------------------------------------------

def save_split(split: Split, path) -> None:
    """Write a split as JSON index arrays."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "train": split.train.tolist(),
        "val": split.val.tolist(),
        "test": split.test.tolist(),
    }
    path.write_text(json.dumps(payload) + "\n")


def load_split(path, num_nodes: int | None = None) -> Split:
    """Read a split file; validates disjointness and (optionally) range."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no split file at {path}")
    try:
        payload = json.loads(path.read_text())
        split = Split(payload["train"], payload["val"], payload["test"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedSplit(f"unreadable split file {path}: {exc}") from exc
    if num_nodes is not None:
        split.check_against(num_nodes)
    return split
