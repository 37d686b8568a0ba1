"""Command-line surface: ``saf <subcommand>``.

Subcommands
-----------

* ``train``             fit over one or more seeded runs, write artifacts;
* ``eval``              forward-only accuracy of a saved checkpoint;
* ``analyze``           adapted-graph reports and figures for a checkpoint;
* ``check-equivalence`` iterative fixed point vs. the closed-form filter;
* ``grid``              hyperparameter search (exhaustive or budgeted);
* ``gen-sbm``           write a synthetic block-model dataset directory.

All file outputs are JSON/CSV (plus PNG figures from ``analyze``); stdout
carries a short human-readable summary.  Machine-readable errors go to
stderr as one JSON object.  Exit codes: 0 success, 2 validation error,
3 numerical failure, 4 not-converged.  The environment variable
``SAF_CACHE_DIR`` overrides the per-dataset basis cache location.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as data_io
from . import reports
from .errors import (
    EmptyEdgeSet,
    NoSurvivingEdges,
    NotConverged,
    SafError,
    ValidationError,
)
from .filters import (
    BernsteinFilter,
    ChebInterpFilter,
    G_FLOOR_DEFAULT,
    response_on_basis,
)
from .graphs import (
    Graph,
    adjusted_homophily,
    class_homophily,
    edge_homophily,
    normalized_laplacian,
)
from .model import forward, load_checkpoint, save_checkpoint
from .newgraph import build_adapted_graph, distance_histogram, signed_edge_stats
from .spectra import (
    SpectralBasis,
    basis_cache_path,
    compute_basis,
    load_basis,
    save_basis,
)
from .train import (
    SEARCH_SPACE,
    Split,
    TrainConfig,
    accuracy,
    confidence_interval,
    fit,
    grid_search,
    make_split,
)

__all__ = ["main", "build_parser", "equivalence_report"]

_CONFIG_FLOATS = (
    "lr", "weight_decay", "dropout", "tau", "eta", "epsilon", "delta",
)
_CONFIG_INTS = (
    "order", "layers", "hidden", "max_epochs", "patience", "seed", "basis_m",
)


# --- shared helpers ---------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name in _CONFIG_FLOATS:
        parser.add_argument(f"--{name.replace('_', '-')}", type=float, default=None)
    for name in _CONFIG_INTS:
        parser.add_argument(f"--{name.replace('_', '-')}", type=int, default=None)
    parser.add_argument("--basis-mode", choices=("dense", "lanczos"), default=None)
    parser.add_argument("--backbone", choices=("bernstein", "cheb"), default=None)
    parser.add_argument("--no-attention", action="store_true")
    parser.add_argument("--no-spectral", action="store_true")
    parser.add_argument("--no-spatial", action="store_true")


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    overrides: dict = {}
    for name in (*_CONFIG_FLOATS, *_CONFIG_INTS, "basis_mode", "backbone"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    for name in ("no_attention", "no_spectral", "no_spatial"):
        if getattr(args, name, False):
            overrides[name] = True
    return TrainConfig(**overrides)


def _cache_root(data_dir: Path) -> Path:
    env = os.environ.get("SAF_CACHE_DIR")
    return Path(env) if env else data_dir / ".saf_cache"


def _basis_for(
    graph: Graph,
    laplacian,
    config: TrainConfig,
    data_dir: Path | None,
) -> SpectralBasis | None:
    """Basis per config, via the on-disk cache when a dataset dir is known."""
    if config.no_spatial:
        return None
    if data_dir is not None:
        cache = basis_cache_path(
            _cache_root(data_dir),
            data_dir / "edges.tsv",
            config.basis_mode,
            config.basis_m,
        )
        if cache.is_file():
            basis = load_basis(cache)
            if basis.source_dim == graph.num_nodes:
                return basis
        basis = compute_basis(
            laplacian, config.basis_mode, config.basis_m, seed=config.seed
        )
        save_basis(basis, cache)
        return basis
    return compute_basis(
        laplacian, config.basis_mode, config.basis_m, seed=config.seed
    )


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_filter(backbone: str, coeffs: np.ndarray):
    cls = ChebInterpFilter if backbone == "cheb" else BernsteinFilter
    return cls(len(coeffs) - 1, coeffs)


# --- train ------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    graph = data_io.load_dataset(data_dir)
    base = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    laplacian = normalized_laplacian(graph)

    t0 = time.perf_counter()
    basis = _basis_for(graph, laplacian, base, data_dir)
    decomposition_ms = (time.perf_counter() - t0) * 1000.0

    fixed_split = (
        data_io.load_split(args.split, graph.num_nodes) if args.split else None
    )
    per_run: list[dict] = []
    train_times: list[float] = []
    best_key = None
    best_run = -1
    for run in range(args.runs):
        run_seed = base.seed + run
        config = replace(base, seed=run_seed)
        split = (
            fixed_split
            if fixed_split is not None
            else make_split(graph, args.scheme, seed=run_seed)
        )
        result = fit(graph, split, config, basis=basis, laplacian=laplacian)
        run_dir = out / "runs" / f"run_{run:02d}"
        save_checkpoint(
            result.params, config.to_dict(), run_seed, run_dir / "model.json"
        )
        reports.write_history(result.history, run_dir / "history.jsonl")
        data_io.save_split(split, run_dir / "split.json")
        per_run.append(
            {
                "run": run,
                "seed": run_seed,
                "val_acc": result.best_val_acc,
                "test_acc": result.test_acc,
                "best_epoch": result.best_epoch,
                "epochs": len(result.history),
            }
        )
        train_times.append(result.train_ms)
        key = (-result.best_val_acc, result.best_val_loss, run)
        if best_key is None or key < best_key:
            best_key, best_run = key, run

    for name in ("model.json", "history.jsonl"):
        shutil.copyfile(out / "runs" / f"run_{best_run:02d}" / name, out / name)

    val_mean, val_ci = confidence_interval([r["val_acc"] for r in per_run])
    test_mean, test_ci = confidence_interval([r["test_acc"] for r in per_run])
    result_payload = {
        "config": base.to_dict(),
        "scheme": "file" if args.split else args.scheme,
        "runs": args.runs,
        "best_run": best_run,
        "val_acc": {"mean": val_mean, "ci95": val_ci},
        "test_acc": {"mean": test_mean, "ci95": test_ci},
        "per_run": per_run,
        "timing": {
            "decomposition_ms": decomposition_ms,
            "train_ms": float(np.mean(train_times)),
        },
        "artifacts": {
            "model": str(out / "model.json"),
            "history": str(out / "history.jsonl"),
            "runs_dir": str(out / "runs"),
        },
    }
    (out / "result.json").write_text(
        json.dumps(result_payload, sort_keys=True, indent=2) + "\n"
    )

    print(f"{'run':>4} {'seed':>6} {'val_acc':>9} {'test_acc':>9} {'best_ep':>8}")
    for row in per_run:
        print(
            f"{row['run']:>4} {row['seed']:>6} {row['val_acc']:>9.4f} "
            f"{row['test_acc']:>9.4f} {row['best_epoch']:>8}"
        )
    print(
        f"mean: val {val_mean:.4f} ± {val_ci:.4f}   "
        f"test {test_mean:.4f} ± {test_ci:.4f}"
    )
    print(f"wrote {out / 'result.json'}")
    return 0


# --- eval -------------------------------------------------------------------

def cmd_eval(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    graph = data_io.load_dataset(data_dir)
    params, config_dict, _seed = load_checkpoint(args.checkpoint)
    config = TrainConfig.from_dict(config_dict)
    laplacian = normalized_laplacian(graph)
    basis = _basis_for(graph, laplacian, config, data_dir)
    y, diag = forward(
        graph.features, laplacian, basis, params, config, train_mode=False
    )
    if args.split:
        split = data_io.load_split(args.split, graph.num_nodes)
        mask = split.test
        evaluated = "test"
    else:
        mask = np.arange(graph.num_nodes)
        evaluated = "all"
    _emit(
        {
            "accuracy": accuracy(y, graph.labels, mask),
            "nodes_evaluated": int(mask.size),
            "subset": evaluated,
            "kappa_f_mean": diag["kappa_f_mean"],
            "kappa_a_mean": diag["kappa_a_mean"],
        }
    )
    return 0


# --- analyze ----------------------------------------------------------------

def cmd_analyze(args: argparse.Namespace) -> int:
    checkpoint = Path(args.checkpoint)
    params, config_dict, _seed = load_checkpoint(checkpoint)
    config = TrainConfig.from_dict(config_dict)
    epsilon = config.epsilon if args.epsilon is None else args.epsilon
    if epsilon < 0:
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    data_dir = Path(args.data)
    graph = data_io.load_dataset(data_dir)
    out = Path(args.out) if args.out else checkpoint.parent
    out.mkdir(parents=True, exist_ok=True)

    # analysis materializes the adapted graph, so it always uses the full
    # eigendecomposition regardless of how the model was trained
    dense_config = replace(config, basis_mode="dense", basis_m=0)
    laplacian = normalized_laplacian(graph)
    basis = _basis_for(graph, laplacian, dense_config, data_dir)
    response = response_on_basis(params.filt, basis, G_FLOOR_DEFAULT)
    adapted = build_adapted_graph(basis, response, config.tau)

    histogram = distance_histogram(adapted, graph, epsilon)
    try:
        signed = signed_edge_stats(adapted, graph.labels, epsilon)
    except NoSurvivingEdges:
        signed = None

    stats_path = out / "newgraph_stats.json"
    payload = reports.write_newgraph_stats(histogram, signed, epsilon, stats_path)
    artifacts = [str(stats_path)]
    reports.plot_distance_histogram(histogram, out / "distance_histogram.png")
    artifacts.append(str(out / "distance_histogram.png"))
    reports.plot_signed_edges(signed, out / "signed_edges.png")
    artifacts.append(str(out / "signed_edges.png"))

    history_path = (
        Path(args.history) if args.history else checkpoint.parent / "history.jsonl"
    )
    if history_path.is_file():
        history = reports.read_history(history_path)
        reports.write_attention_trend(history, out / "attention_trend.csv")
        reports.plot_attention_trend(history, out / "attention_trend.png")
        artifacts += [
            str(out / "attention_trend.csv"),
            str(out / "attention_trend.png"),
        ]

    _emit({**payload, "artifacts": artifacts})
    return 0


# --- check-equivalence ------------------------------------------------------

def equivalence_report(
    basis: SpectralBasis,
    filt,
    tau: float,
    signal: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> dict:
    """Iterate the damped propagation to its fixed point and compare it
    against the closed-form spectral filter output.

    The recurrence ``Z <- alpha X + (1 - alpha) A_adapted Z`` with
    ``alpha = tau / (1 + tau)`` contracts exactly when every response
    value exceeds ``alpha / 2``; its fixed point then equals the
    filtered signal.  Raises NotConverged (with the violating
    eigenvalue) when the precondition fails or the iteration stalls.
    """
    response = response_on_basis(filt, basis, G_FLOOR_DEFAULT)
    alpha = tau / (1.0 + tau)
    g_min = float(response.values.min())
    if g_min <= alpha / 2.0:
        lam = float(basis.eigenvalues[int(np.argmin(response.values))])
        raise NotConverged(
            f"contraction needs min response > alpha/2 = {alpha / 2.0:.6g}; "
            f"got {g_min:.6g} at eigenvalue {lam:.6g}"
        )
    adapted = build_adapted_graph(basis, response, tau)
    x = np.asarray(signal, dtype=np.float64)
    closed = basis.eigenvectors @ (
        response.values[:, None] * (basis.eigenvectors.T @ x)
    )
    z = x.copy()
    iterations = 0
    step = np.inf
    for iterations in range(1, max_iter + 1):
        z_next = alpha * x + (1.0 - alpha) * (adapted.matrix @ z)
        step = float(np.max(np.abs(z_next - z)))
        z = z_next
        if step < tol:
            break
    else:
        raise NotConverged(
            f"fixed-point iteration still moving {step:.3g} after {max_iter} steps"
        )
    return {
        "alpha": alpha,
        "g_min": g_min,
        "iterations": iterations,
        "last_step": step,
        "max_deviation": float(np.max(np.abs(z - closed))),
    }


def cmd_check_equivalence(args: argparse.Namespace) -> int:
    if args.data:
        graph = data_io.load_dataset(Path(args.data))
    else:
        graph = data_io.generate_sbm(
            data_io.SbmSpec(
                num_nodes=args.nodes,
                num_classes=args.classes,
                p_in=args.p_in,
                p_out=args.p_out,
                seed=args.seed,
            )
        )
    if graph.num_nodes > 200:
        raise ValidationError(
            f"the equivalence check is a small-graph tool (N <= 200), "
            f"got N = {graph.num_nodes}"
        )
    coeffs = np.array([float(v) for v in args.coeffs.split(",")])
    filt = _load_filter(args.backbone, coeffs)
    basis = compute_basis(normalized_laplacian(graph))
    rng = np.random.default_rng(args.seed)
    signal = rng.standard_normal((graph.num_nodes, args.signal_dim))
    report = equivalence_report(basis, filt, args.tau, signal)
    report["passed"] = bool(report["max_deviation"] < args.tolerance)
    _emit(report)
    return 0 if report["passed"] else 3


# --- grid -------------------------------------------------------------------

def cmd_grid(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    graph = data_io.load_dataset(data_dir)
    base = _config_from_args(args)
    if args.split:
        split = data_io.load_split(args.split, graph.num_nodes)
    else:
        split = make_split(graph, args.scheme, seed=args.split_seed)
    if args.space:
        space = {
            key: tuple(choices)
            for key, choices in json.loads(Path(args.space).read_text()).items()
        }
    else:
        space = None
    best_config, leaderboard = grid_search(
        graph,
        split,
        space=space,
        budget=args.budget,
        base_config=base,
        seed=args.grid_seed,
        jobs=args.jobs,
    )
    payload = {"best_config": best_config.to_dict(), "leaderboard": leaderboard}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )
    print(f"{'rank':>5} {'val_acc':>9} {'test_acc':>9}  config")
    for rank, entry in enumerate(leaderboard[:5]):
        short = {
            k: entry["config"][k]
            for k in sorted(entry["config"])
            if k in SEARCH_SPACE
        }
        print(
            f"{rank:>5} {entry['val_acc']:>9.4f} {entry['test_acc']:>9.4f}  {short}"
        )
    print(f"wrote {out / 'grid.json'}")
    return 0


# --- gen-sbm ----------------------------------------------------------------

def cmd_gen_sbm(args: argparse.Namespace) -> int:
    spec = data_io.SbmSpec(
        num_nodes=args.nodes,
        num_classes=args.classes,
        p_in=args.p_in,
        p_out=args.p_out,
        feature_dim=args.feature_dim,
        feature_signal=args.feature_signal,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    graph = data_io.generate_sbm(spec)
    out = Path(args.out)
    data_io.save_dataset(graph, out)

    def _metric(fn):
        try:
            return fn(graph)
        except (EmptyEdgeSet, SafError):
            return None

    stats = {
        "directory": str(out),
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "num_classes": graph.num_classes,
        "num_features": graph.num_features,
        "edge_homophily": _metric(edge_homophily),
        "class_homophily": _metric(lambda g: class_homophily(g)),
        "adjusted_homophily": _metric(adjusted_homophily),
    }
    (out / "stats.json").write_text(
        json.dumps(stats, sort_keys=True, indent=2) + "\n"
    )
    _emit(stats)
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saf",
        description="Spectrally adapted filtering for node classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one or more seeded runs")
    p_train.add_argument("--data", required=True, help="dataset directory")
    p_train.add_argument(
        "--scheme", choices=("standard", "sparse", "dense"), default="standard"
    )
    p_train.add_argument("--split", default=None, help="fixed split.json path")
    p_train.add_argument("--runs", type=int, default=1)
    p_train.add_argument("--out", default="saf_out")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="accuracy of a saved checkpoint")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default=None,
                        help="evaluate on this split's test set (default: all nodes)")
    p_eval.set_defaults(func=cmd_eval)

    p_an = sub.add_parser("analyze", help="adapted-graph reports for a checkpoint")
    p_an.add_argument("--data", required=True)
    p_an.add_argument("--checkpoint", required=True)
    p_an.add_argument("--epsilon", type=float, default=None,
                      help="link threshold (default: the checkpoint's epsilon)")
    p_an.add_argument("--history", default=None,
                      help="history.jsonl for the attention trend "
                           "(default: next to the checkpoint)")
    p_an.add_argument("--out", default=None,
                      help="artifact directory (default: the checkpoint's)")
    p_an.set_defaults(func=cmd_analyze)

    p_eq = sub.add_parser(
        "check-equivalence",
        help="fixed-point iteration vs. closed-form spectral filtering",
    )
    p_eq.add_argument("--data", default=None, help="dataset directory (optional)")
    p_eq.add_argument("--nodes", type=int, default=40)
    p_eq.add_argument("--classes", type=int, default=2)
    p_eq.add_argument("--p-in", type=float, default=0.2)
    p_eq.add_argument("--p-out", type=float, default=0.05)
    p_eq.add_argument("--seed", type=int, default=0)
    p_eq.add_argument("--tau", type=float, default=1.0)
    p_eq.add_argument("--coeffs", default="2,1",
                      help="comma-separated filter coefficients")
    p_eq.add_argument("--backbone", choices=("bernstein", "cheb"),
                      default="bernstein")
    p_eq.add_argument("--signal-dim", type=int, default=4)
    p_eq.add_argument("--tolerance", type=float, default=1e-9)
    p_eq.set_defaults(func=cmd_check_equivalence)

    p_grid = sub.add_parser("grid", help="hyperparameter search")
    p_grid.add_argument("--data", required=True)
    p_grid.add_argument(
        "--scheme", choices=("standard", "sparse", "dense"), default="standard"
    )
    p_grid.add_argument("--split", default=None)
    p_grid.add_argument("--split-seed", type=int, default=0)
    p_grid.add_argument("--budget", type=int, default=16,
                        help="random draws; 0 enumerates the whole space")
    p_grid.add_argument("--grid-seed", type=int, default=0)
    p_grid.add_argument("--jobs", type=int, default=1)
    p_grid.add_argument("--space", default=None,
                        help="JSON file {hyperparameter: [choices]}")
    p_grid.add_argument("--out", default="saf_out")
    _add_config_flags(p_grid)
    p_grid.set_defaults(func=cmd_grid)

    p_gen = sub.add_parser("gen-sbm", help="write a synthetic dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--nodes", type=int, default=400)
    p_gen.add_argument("--classes", type=int, default=2)
    p_gen.add_argument("--p-in", type=float, required=True)
    p_gen.add_argument("--p-out", type=float, required=True)
    p_gen.add_argument("--feature-dim", type=int, default=16)
    p_gen.add_argument("--feature-signal", type=float, default=1.0)
    p_gen.add_argument("--noise-std", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen_sbm)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SafError as exc:
        print(
            json.dumps(
                {"error": type(exc).__name__, "message": str(exc)},
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
