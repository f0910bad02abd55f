"""Regression trees, bagged forests and squared-error gradient boosting.

Trees are grown breadth-first: at each depth every open node is split at
once, scanning each feature in sorted order with cumulative sums. Candidate
thresholds are midpoints between consecutive distinct values, rows with
``x <= threshold`` go left. Among equally good splits the lowest feature
index wins, then the lowest threshold.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DataError
from .base import FittedModel, as_array, feature_names_of, register_predictor

_TIE = 1e-10


def _presort(X: np.ndarray) -> list[np.ndarray]:
    return [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]


def grow_tree(X, y, weight=None, count=None, max_depth=None, min_leaf=1,
              feature_mask_fn=None, presorted=None) -> dict:
    """Grow one tree and return it as a dict of parallel node arrays.

    ``count`` is the per-row multiplicity (bootstrap draws); rows with zero
    count are ignored. ``weight`` multiplies ``count``. ``feature_mask_fn(m, p)``
    returns an (m, p) boolean mask of features eligible at each of m nodes.
    """
    n, p = X.shape
    count = np.ones(n) if count is None else np.asarray(count, dtype=float)
    w = count * (1.0 if weight is None else np.asarray(weight, dtype=float))
    wy = w * y
    wyy = wy * y
    order = presorted if presorted is not None else _presort(X)

    node_of = np.where(count > 0, 0, -1)
    feature, threshold, left, right, value, size = [-1], [np.nan], [-1], [-1], [], []
    W0, S0 = w.sum(), wy.sum()
    if W0 <= 0:
        raise DataError("tree needs at least one row with positive weight")
    value.append(S0 / W0)
    size.append(count.sum())

    frontier = np.array([0])
    depth = 0
    while frontier.size and (max_depth is None or depth < max_depth):
        m = frontier.size
        loc_map = np.full(len(feature), -1)
        loc_map[frontier] = np.arange(m)
        loc = np.where(node_of >= 0, loc_map[np.maximum(node_of, 0)], -1)
        active = loc >= 0
        la = loc[active]
        W = np.bincount(la, w[active], m)
        S = np.bincount(la, wy[active], m)
        Q = np.bincount(la, wyy[active], m)
        C = np.bincount(la, count[active], m)
        sse = Q - S * S / W
        splittable = (C >= 2 * min_leaf) & (sse > 1e-12 * np.maximum(Q, 1e-300))
        if not splittable.any():
            break
        elig = feature_mask_fn(m, p) if feature_mask_fn is not None else None

        best = np.full(m, -np.inf)
        best_f = np.full(m, -1)
        best_t = np.full(m, np.nan)
        for f in range(p):
            o = order[f]
            o = o[active[o]]
            lo = loc[o]
            srt = np.argsort(lo, kind="stable")
            o, lo = o[srt], lo[srt]
            xs = X[o, f]
            cw, cs, cc = np.cumsum(w[o]), np.cumsum(wy[o]), np.cumsum(count[o])
            starts = np.searchsorted(lo, np.arange(m))
            base_w = np.where(starts > 0, cw[starts - 1], 0.0)
            base_s = np.where(starts > 0, cs[starts - 1], 0.0)
            base_c = np.where(starts > 0, cc[starts - 1], 0.0)
            WL = cw[:-1] - base_w[lo[:-1]]
            SL = cs[:-1] - base_s[lo[:-1]]
            CL = cc[:-1] - base_c[lo[:-1]]
            g = lo[:-1]
            WR, SR, CR = W[g] - WL, S[g] - SL, C[g] - CL
            valid = (lo[1:] == g) & (xs[:-1] < xs[1:]) & (CL >= min_leaf) & (CR >= min_leaf) & splittable[g]
            if elig is not None:
                valid &= elig[g, f]
            if not valid.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                score = np.where(valid, SL * SL / WL + SR * SR / WR, -np.inf)
            node_max = np.full(m, -np.inf)
            np.maximum.at(node_max, g[valid], score[valid])
            tol = _TIE * np.maximum(np.abs(node_max), 1.0)
            hit = np.flatnonzero(valid & (score >= node_max[g] - tol[g]))
            nodes, first = np.unique(g[hit], return_index=True)
            pos = hit[first]
            cand = score[pos]
            prev = best[nodes]
            with np.errstate(invalid="ignore"):
                better = np.isneginf(prev) | (cand > prev + _TIE * np.maximum(np.abs(prev), 1.0))
            nodes, pos, cand = nodes[better], pos[better], cand[better]
            best[nodes] = cand
            best_f[nodes] = f
            thr = 0.5 * (xs[pos] + xs[pos + 1])
            thr = np.where(thr >= xs[pos + 1], xs[pos], thr)
            best_t[nodes] = thr

        do_split = np.flatnonzero(best_f >= 0)
        if do_split.size == 0:
            break
        new_frontier = []
        child_of = np.full((m, 2), -1)
        for j in do_split:
            nid = frontier[j]
            feature[nid] = int(best_f[j])
            threshold[nid] = float(best_t[j])
            for side in (0, 1):
                cid = len(feature)
                feature.append(-1)
                threshold.append(np.nan)
                left.append(-1)
                right.append(-1)
                value.append(np.nan)
                size.append(0.0)
                child_of[j, side] = cid
                new_frontier.append(cid)
            left[nid], right[nid] = child_of[j]

        moving = active & (best_f[np.maximum(loc, 0)] >= 0)
        rows = np.flatnonzero(moving)
        lj = loc[rows]
        go_right = X[rows, best_f[lj]] > best_t[lj]
        node_of[rows] = child_of[lj, go_right.astype(int)]

        new_frontier = np.array(new_frontier)
        sel = np.isin(node_of, new_frontier)
        idx = node_of[sel]
        Wc = np.bincount(idx, w[sel], len(feature))
        Sc = np.bincount(idx, wy[sel], len(feature))
        Cc = np.bincount(idx, count[sel], len(feature))
        for cid in new_frontier:
            value[cid] = Sc[cid] / Wc[cid]
            size[cid] = Cc[cid]
        frontier = new_frontier
        depth += 1

    return {
        "feature": np.asarray(feature, dtype=np.int64),
        "threshold": np.asarray(threshold, dtype=float),
        "left": np.asarray(left, dtype=np.int64),
        "right": np.asarray(right, dtype=np.int64),
        "value": np.asarray(value, dtype=float),
        "n_samples": np.asarray(size, dtype=float),
    }


def tree_apply(tree: dict, X: np.ndarray) -> np.ndarray:
    """Leaf node id reached by each row."""
    feat = np.asarray(tree["feature"])
    thr = np.asarray(tree["threshold"])
    lft, rgt = np.asarray(tree["left"]), np.asarray(tree["right"])
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        f = feat[node]
        inner = np.flatnonzero(f >= 0)
        if inner.size == 0:
            return node
        nd = node[inner]
        go_right = X[inner, f[inner]] > thr[nd]
        node[inner] = np.where(go_right, rgt[nd], lft[nd])


def tree_predict(tree: dict, X: np.ndarray) -> np.ndarray:
    return np.asarray(tree["value"])[tree_apply(tree, X)]


def tree_depth(tree: dict) -> int:
    lft, rgt = np.asarray(tree["left"]), np.asarray(tree["right"])
    depth = np.zeros(len(lft), dtype=int)
    for i in range(len(lft)):
        if lft[i] >= 0:
            depth[lft[i]] = depth[rgt[i]] = depth[i] + 1
    return int(depth.max())


def _xy(X, y, sample_weight):
    A = as_array(X)
    y = np.asarray(y, dtype=float)
    if len(y) != len(A):
        raise DataError("X and y lengths differ")
    w = None if sample_weight is None else np.asarray(sample_weight, dtype=float)
    return A, y, w


def fit_cart(X, y, max_depth: int | None = 8, min_leaf: int = 10, sample_weight=None) -> FittedModel:
    A, y, w = _xy(X, y, sample_weight)
    if min_leaf < 1:
        raise ConfigError("min_leaf must be >= 1")
    if len(y) < 2 * min_leaf:
        raise DataError(f"cart needs n >= 2*min_leaf (n={len(y)}, min_leaf={min_leaf})")
    tree = grow_tree(A, y, w, None, max_depth, min_leaf)
    resid = y - tree_predict(tree, A)
    return FittedModel(
        "cart", {"tree": tree}, feature_names_of(X, A.shape[1]),
        {"converged": True, "iterations": 1, "final_loss": float(np.mean(resid**2)),
         "n_leaves": int(np.sum(tree["feature"] < 0)), "depth": tree_depth(tree)},
    )


@register_predictor("cart")
def _predict_cart(model, X):
    return tree_predict(model.params["tree"], X)


def _random_feature_mask(rng: np.random.Generator, mtry: int):
    def fn(m, p):
        if mtry >= p:
            return None
        keys = rng.random((m, p))
        cut = np.sort(keys, axis=1)[:, mtry - 1:mtry]
        return keys <= cut
    return fn


def fit_forest(X, y, n_trees: int = 500, mtry: int | None = None, min_leaf: int = 5,
               seed: int = 0, max_depth: int | None = None, bootstrap: bool = True,
               sample_weight=None) -> FittedModel:
    """Bagged trees with per-node random feature subsets.

    Tree t draws its bootstrap sample and feature subsets from the t-th child
    of ``SeedSequence(seed)``, so results do not depend on evaluation order.
    """
    A, y, w = _xy(X, y, sample_weight)
    n, p = A.shape
    mtry = math.ceil(p / 3) if mtry is None else int(mtry)
    if n_trees < 1:
        raise ConfigError("n_trees must be >= 1")
    if not 1 <= mtry <= p:
        raise ConfigError(f"mtry must be in [1, {p}], got {mtry}")
    presorted = _presort(A)
    trees = []
    oob_sum = np.zeros(n)
    oob_n = np.zeros(n)
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            counts = np.bincount(rng.integers(n, size=n), minlength=n).astype(float)
        else:
            counts = np.ones(n)
        tree = grow_tree(A, y, w, counts, max_depth, min_leaf, _random_feature_mask(rng, mtry), presorted)
        trees.append(tree)
        out = counts == 0
        if out.any():
            oob_sum[out] += tree_predict(tree, A[out])
            oob_n[out] += 1
    with np.errstate(invalid="ignore"):
        oob = np.where(oob_n > 0, oob_sum / np.maximum(oob_n, 1), np.nan)
    have = oob_n > 0
    oob_mse = float(np.mean((y[have] - oob[have]) ** 2)) if have.any() else float("nan")
    fitted = np.mean([tree_predict(t, A) for t in trees], axis=0)
    return FittedModel(
        "forest", {"trees": trees}, feature_names_of(X, p),
        {"converged": True, "iterations": n_trees, "final_loss": float(np.mean((y - fitted) ** 2)),
         "oob_prediction": oob, "oob_mse": oob_mse, "mtry": mtry},
        seed,
    )


def forest_tree_predictions(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return np.stack([tree_predict(t, X) for t in model.params["trees"]])


@register_predictor("forest")
def _predict_forest(model, X):
    return forest_tree_predictions(model, X).mean(axis=0)


def fit_boost(X, y, n_rounds: int = 300, learning_rate: float = 0.1, max_depth: int = 4,
              min_leaf: int = 1, seed: int = 0, sample_weight=None) -> FittedModel:
    """Stagewise least-squares boosting: each round fits a tree to the current residuals."""
    A, y, w = _xy(X, y, sample_weight)
    if not 0 < learning_rate <= 1:
        raise ConfigError(f"learning_rate must be in (0, 1], got {learning_rate}")
    if n_rounds < 1:
        raise ConfigError("n_rounds must be >= 1")
    base = float(np.average(y, weights=w))
    pred = np.full(len(y), base)
    presorted = _presort(A)
    trees, losses = [], []
    for _ in range(n_rounds):
        tree = grow_tree(A, y - pred, w, None, max_depth, min_leaf, presorted=presorted)
        pred = pred + learning_rate * tree_predict(tree, A)
        trees.append(tree)
        losses.append(float(np.sqrt(np.average((y - pred) ** 2, weights=w))))
    return FittedModel(
        "boost", {"base": base, "learning_rate": float(learning_rate), "trees": trees},
        feature_names_of(X, A.shape[1]),
        {"converged": True, "iterations": n_rounds, "final_loss": losses[-1] ** 2,
         "train_rmse": losses},
        seed,
    )


@register_predictor("boost")
def _predict_boost(model, X):
    p = model.params
    out = np.full(len(X), float(p["base"]))
    for tree in p["trees"]:
        out += p["learning_rate"] * tree_predict(tree, X)
    return out
