"""Spectrally adapted filtering for node classification.

A spectral graph-learning toolkit built around one idea: a learnable
non-negative polynomial filter does double duty, acting directly on the
Laplacian spectrum (spectral branch) and inducing an adapted propagation
graph whose signed, non-local links drive a damped spatial recurrence
(spatial branch).  Per-node attention fuses the two branches.

Subpackage map:

* :mod:`saf.graphs`    graph type, normalized operators, homophily metrics;
* :mod:`saf.spectra`   dense and restarted-Lanczos eigendecomposition, cache;
* :mod:`saf.filters`   non-negative polynomial filters (two bases);
* :mod:`saf.newgraph`  adapted graph, thresholding, link analyses;
* :mod:`saf.autodiff`  minimal reverse-mode engine used by the model;
* :mod:`saf.model`     the dual-branch network and checkpoints;
* :mod:`saf.train`     loss/gradients, Adam, early stopping, splits, search;
* :mod:`saf.data`      dataset directories, synthetic block models, splits;
* :mod:`saf.reports`   JSON/CSV/PNG rendering of analyses;
* :mod:`saf.cli`       the ``saf`` command.
"""

from .errors import (
    NumericalError,
    SafError,
    ValidationError,
)
from .graphs import (
    Graph,
    adjusted_homophily,
    class_homophily,
    edge_homophily,
    normalized_adjacency,
    normalized_laplacian,
)
from .spectra import SpectralBasis, compute_basis, dense_eigh, lanczos_extremal
from .filters import (
    BernsteinFilter,
    ChebInterpFilter,
    FilterResponse,
    apply_filter_poly,
    response,
    response_on_basis,
)
from .newgraph import (
    AdaptedGraph,
    build_adapted_graph,
    distance_histogram,
    neumann_truncation,
    signed_edge_stats,
    sparsify,
)
from .model import SafParams, forward, init_params, load_checkpoint, save_checkpoint
from .train import (
    FitResult,
    Split,
    TrainConfig,
    fit,
    grid_search,
    make_split,
)
from .data import SbmSpec, generate_sbm, load_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "SafError",
    "ValidationError",
    "NumericalError",
    "Graph",
    "normalized_adjacency",
    "normalized_laplacian",
    "edge_homophily",
    "class_homophily",
    "adjusted_homophily",
    "SpectralBasis",
    "compute_basis",
    "dense_eigh",
    "lanczos_extremal",
    "BernsteinFilter",
    "ChebInterpFilter",
    "FilterResponse",
    "response",
    "response_on_basis",
    "apply_filter_poly",
    "AdaptedGraph",
    "build_adapted_graph",
    "sparsify",
    "neumann_truncation",
    "distance_histogram",
    "signed_edge_stats",
    "SafParams",
    "init_params",
    "forward",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "Split",
    "FitResult",
    "fit",
    "make_split",
    "grid_search",
    "SbmSpec",
    "generate_sbm",
    "load_dataset",
    "save_dataset",
    "__version__",
]
