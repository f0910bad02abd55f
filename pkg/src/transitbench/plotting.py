"""Static SVG figures for the CLI report paths.

Every function takes the same tables the CLI writes to CSV, draws on a fresh
Figure (no pyplot state) and saves an SVG without a timestamp.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib.collections import LineCollection, PatchCollection
from matplotlib.figure import Figure
from matplotlib.patches import RegularPolygon

matplotlib.rcParams["svg.hashsalt"] = "transitbench"
matplotlib.rcParams["font.size"] = 9


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def fold_scores_boxplot(scores: pd.DataFrame, metric: str, path) -> Path:
    """Per-model distribution of fold scores for one metric."""
    models = list(dict.fromkeys(scores["model"]))
    fig = Figure(figsize=(1.0 + 0.8 * len(models), 3.2))
    ax = fig.add_subplot()
    ax.boxplot([scores.loc[scores.model == m, metric].to_numpy() for m in models])
    ax.set_xticks(range(1, len(models) + 1), models, rotation=30, ha="right")
    ax.set_ylabel(metric)
    ax.set_title(f"{metric} across folds")
    return _save(fig, path)


def pvalue_heatmap(frame: pd.DataFrame, alpha: float, path, title: str = "adjusted p-values") -> Path:
    names = frame["model"].tolist()
    M = frame.drop(columns="model").to_numpy(dtype=float)
    fig = Figure(figsize=(1.5 + 0.55 * len(names), 1.2 + 0.5 * len(names)))
    ax = fig.add_subplot()
    im = ax.imshow(M, vmin=0, vmax=1, cmap="viridis")
    for i in range(len(names)):
        for j in range(len(names)):
            if i != j:
                ax.text(j, i, f"{M[i, j]:.2g}", ha="center", va="center", fontsize=7,
                        color="white" if M[i, j] < alpha else "black")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)


def rank_graph(mean_ranks: dict, edges, path, title: str = "not significantly different") -> Path:
    """Algorithms on a circle ordered by mean rank; edges join indistinguishable pairs."""
    names = sorted(mean_ranks, key=mean_ranks.get)
    ang = {nm: math.pi / 2 - 2 * math.pi * i / len(names) for i, nm in enumerate(names)}
    pos = {nm: (math.cos(a), math.sin(a)) for nm, a in ang.items()}
    fig = Figure(figsize=(4, 4))
    ax = fig.add_subplot()
    ax.add_collection(LineCollection([[pos[u], pos[v]] for u, v in edges], colors="0.5", linewidths=1))
    for nm in names:
        x, y = pos[nm]
        ax.scatter([x], [y], s=300, color="white", edgecolors="black", zorder=3)
        ax.text(1.2 * x, 1.2 * y, f"{nm}\n{mean_ranks[nm]:.1f}", ha="center", va="center")
    ax.set_xlim(-1.6, 1.6)
    ax.set_ylim(-1.6, 1.6)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title(title)
    return _save(fig, path)


def sensitivity_lines(curves: pd.DataFrame, path) -> Path:
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    for model, grp in curves.groupby("model", sort=False):
        ax.plot(grp["delta"] / 1000.0, grp["mean_new_trips"], marker="o", ms=3, label=model)
    ax.set_xlabel("accessibility increase (thousand jobs)")
    ax.set_ylabel("mean new trips per person")
    ax.legend(fontsize=7)
    return _save(fig, path)


def hex_map(frame: pd.DataFrame, size: float, path, title: str = "") -> Path:
    fig = Figure(figsize=(4.5, 4))
    ax = fig.add_subplot()
    R = size / math.sqrt(3)
    patches = [RegularPolygon((x, y), 6, radius=R, orientation=0.0)
               for x, y in zip(frame["center_x"], frame["center_y"])]
    coll = PatchCollection(patches, cmap="magma_r", edgecolor="0.8", linewidth=0.2)
    coll.set_array(frame["value"].to_numpy(dtype=float))
    ax.add_collection(coll)
    if len(frame):
        ax.set_xlim(frame["center_x"].min() - size, frame["center_x"].max() + size)
        ax.set_ylim(frame["center_y"].min() - size, frame["center_y"].max() + size)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(title)
    fig.colorbar(coll, ax=ax, shrink=0.8, label="new trips")
    return _save(fig, path)


def spaef_heatmap(frame: pd.DataFrame, path) -> Path:
    names = frame["model"].tolist()
    M = frame.drop(columns="model").to_numpy(dtype=float)
    fig = Figure(figsize=(1.5 + 0.55 * len(names), 1.2 + 0.5 * len(names)))
    ax = fig.add_subplot()
    im = ax.imshow(M, vmin=min(-1.0, np.nanmin(M)) if np.isfinite(M).any() else -1, vmax=1, cmap="Greys")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_title("SPAEF")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)


def importance_bars(frame: pd.DataFrame, path) -> Path:
    frame = frame.sort_values("importance_mean")
    fig = Figure(figsize=(4.5, 0.8 + 0.3 * len(frame)))
    ax = fig.add_subplot()
    ax.barh(frame["feature"], frame["importance_mean"], xerr=frame["importance_std"], color="tab:blue")
    ax.set_xlabel("loss increase after permutation")
    return _save(fig, path)


def pdp_ice(pdp_frame: pd.DataFrame, ice_frame: pd.DataFrame | None, feature: str, path) -> Path:
    fig = Figure(figsize=(4.5, 3.2))
    ax = fig.add_subplot()
    curve = pdp_frame[pdp_frame.feature == feature]
    labels = [str(v) for v in curve["grid_value"]]
    xs = np.arange(len(labels))
    if ice_frame is not None:
        sub = ice_frame[ice_frame.feature == feature]
        lines = [np.column_stack([xs, g["yhat"].to_numpy()]) for _, g in sub.groupby("row_id", sort=True)]
        ax.add_collection(LineCollection(lines, colors="0.7", linewidths=0.4, alpha=0.5))
    ax.plot(xs, curve["pdp"], color="tab:red", lw=2, label="PDP")
    step = max(1, len(labels) // 6)
    ax.set_xticks(xs[::step], labels[::step], rotation=30, ha="right")
    ax.set_xlabel(feature)
    ax.set_ylabel("prediction")
    ax.legend()
    ax.autoscale_view()
    return _save(fig, path)


def shap_beeswarm(frame: pd.DataFrame, path) -> Path:
    order = frame.groupby("feature")["shap"].apply(lambda s: s.abs().mean()).sort_values().index.tolist()
    fig = Figure(figsize=(5, 0.8 + 0.35 * len(order)))
    ax = fig.add_subplot()
    rng = np.random.default_rng(0)
    for i, feat in enumerate(order):
        sub = frame[frame.feature == feat]
        vals = pd.to_numeric(sub["feature_value"], errors="coerce")
        if vals.isna().any():
            vals = pd.Series(pd.factorize(sub["feature_value"], sort=True)[0], index=sub.index, dtype=float)
        span = vals.max() - vals.min()
        color = (vals - vals.min()) / span if span > 0 else vals * 0 + 0.5
        ax.scatter(sub["shap"], i + rng.uniform(-0.25, 0.25, len(sub)), c=color, cmap="coolwarm", s=6)
    ax.set_yticks(range(len(order)), order)
    ax.axvline(0, color="0.5", lw=0.5)
    ax.set_xlabel("Shapley value")
    return _save(fig, path)


def lime_bars(entry: dict, path) -> Path:
    w = {k: v for k, v in entry["weights"].items() if v != 0}
    names = sorted(w, key=lambda k: abs(w[k]))
    fig = Figure(figsize=(4.5, 0.8 + 0.3 * max(len(names), 1)))
    ax = fig.add_subplot()
    ax.barh(names, [w[n] for n in names], color=["tab:green" if w[n] > 0 else "tab:red" for n in names])
    ax.set_title(f"instance {entry.get('instance', '')}")
    ax.set_xlabel("local weight")
    return _save(fig, path)
