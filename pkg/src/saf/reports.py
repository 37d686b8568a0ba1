"""Rendering of analysis artifacts: JSON stats, CSV trends, PNG figures.

Everything here is presentation-only; the numbers come from newgraph and
train.  Figures are rendered with the Agg backend so reports work in
headless environments.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "histogram_to_json",
    "write_newgraph_stats",
    "write_attention_trend",
    "plot_distance_histogram",
    "plot_signed_edges",
    "plot_attention_trend",
    "write_history",
]


def histogram_to_json(hist: dict) -> dict[str, int]:
    """Distance histogram with JSON-safe keys, sorted by distance.

    Integer distances become their decimal strings; the cross-component
    bucket becomes ``"inf"`` and sorts last.
    """
    ordered = sorted(hist.items(), key=lambda kv: (math.isinf(kv[0]), kv[0]))
    return {
        ("inf" if math.isinf(k) else str(int(k))): int(v) for k, v in ordered
    }


def write_history(history: list[dict], path) -> None:
    """One JSON object per epoch, newline-delimited."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_history(path) -> list[dict]:
    """Parse a newline-delimited history file."""
    return [
        json.loads(line)
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]


def write_newgraph_stats(
    histogram: dict, signed: dict | None, epsilon: float, path
) -> dict:
    """Adapted-graph analysis summary as one JSON file; returns the payload.

    ``signed`` may be None when no off-diagonal entry survives the
    threshold (e.g. an identity-response model).
    """
    payload = {
        "epsilon": epsilon,
        "distance_histogram": histogram_to_json(histogram),
        "signed_edges": signed,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return payload


def write_attention_trend(history: list[dict], path) -> None:
    """CSV of per-epoch mean attention weights for the two branches."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "kappa_f_mean", "kappa_a_mean"])
        for row in history:
            writer.writerow(
                [row["epoch"], row["kappa_f_mean"], row["kappa_a_mean"]]
            )


def plot_distance_histogram(hist: dict, path) -> None:
    """Bar chart of surviving links per original-graph distance."""
    data = histogram_to_json(hist)
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(data) or ["(none)"]
    counts = list(data.values()) or [0]
    ax.bar(range(len(labels)), counts, color="#4878a8")
    ax.set_xticks(range(len(labels)), labels)
    ax.set_xlabel("distance in the original graph")
    ax.set_ylabel("surviving links")
    ax.set_title("Adapted-graph links by original distance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_signed_edges(signed: dict | None, path) -> None:
    """Bars for the same-class share of positive and negative links."""
    fig, ax = plt.subplots(figsize=(5, 4))
    if signed is None:
        ax.text(0.5, 0.5, "no surviving links", ha="center", va="center")
        ax.set_axis_off()
    else:
        values = [
            signed["pos_edge_homophily"],
            1.0 - signed["neg_cross_class_fraction"],
        ]
        ax.bar(
            [0, 1],
            values,
            color=["#4878a8", "#a84848"],
            tick_label=[
                f"positive ({signed['pos_count']})",
                f"negative ({signed['neg_count']})",
            ],
        )
        ax.set_ylim(0, 1)
        ax.set_ylabel("same-class fraction")
        ax.set_title("Label agreement of signed adapted-graph links")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_attention_trend(history: list[dict], path) -> None:
    """Lines of the two mean attention weights over training epochs."""
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [row["kappa_f_mean"] for row in history],
            label="spectral branch", color="#4878a8")
    ax.plot(epochs, [row["kappa_a_mean"] for row in history],
            label="spatial branch", color="#a84848")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean attention weight")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.set_title("Branch attention during training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
