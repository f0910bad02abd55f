import itertools
import math

import numpy as np
import pytest

from transitbench.dataset import encode
from transitbench.errors import ConfigError, DataError
from transitbench.interpret import (
    GridSpec, beeswarm_frame, ice, lime_explain, make_grid, pdp, permutation_importance, shap_exact,
    shap_many, shap_sampled,
)
from transitbench.models import fit_cart, fit_forest, fit_ols
from transitbench.synth import synth_generate, travel_survey_config


def linear(w, b=0.0):
    w = np.asarray(w, dtype=float)
    return lambda A: b + np.asarray(A) @ w


@pytest.fixture(scope="module")
def survey():
    ds = synth_generate(travel_survey_config(n=300, seed=4))
    return encode(ds), ds.y


# --- permutation importance -------------------------------------------------------------

def test_importance_dummy_and_sole_feature():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 3))
    y = 3 * X[:, 1] + rng.normal(0, 0.1, 400)
    m = fit_ols(X, y)
    rep = permutation_importance(m, X, y, metric="rmse", repeats=8, seed=1)
    assert rep.rank[1] == 1
    assert rep.mean[1] > rep.mean[0] and rep.mean[1] > rep.mean[2]
    for j in (0, 2):
        assert abs(rep.mean[j]) < max(2 * rep.std[j], 1e-3)
    assert sorted(rep.rank) == [1, 2, 3]
    r2 = permutation_importance(m, X, y, metric="r2", repeats=3, seed=1)
    assert r2.mean[1] > 0  # higher-better metrics are flipped so larger = more important


def test_importance_deterministic_and_blocks(survey):
    X, y = survey
    m = fit_ols(X, y)
    a = permutation_importance(m, X, y, repeats=2, seed=3)
    b = permutation_importance(m, X, y, repeats=2, seed=3)
    np.testing.assert_array_equal(a.drops, b.drops)
    assert a.features == tuple(X.schema.feature_names)  # one-hot block is one feature
    assert list(a.to_frame().columns) == ["feature", "importance_mean", "importance_std", "rank"]
    with pytest.raises(ConfigError):
        permutation_importance(m, X, y, repeats=0)


# --- PDP / ICE --------------------------------------------------------------------------

def test_pdp_linear_closed_form():
    X = np.array([[0.0], [1.0], [2.0], [0.5]])
    curve = pdp(linear([2.0], 3.0), X, GridSpec("x0", (0.0, 1.0, 2.0)))
    np.testing.assert_allclose(curve.values, [3, 5, 7])


def test_pdp_additive_slope_and_ice_parallel():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.uniform(0, 1, 100), rng.exponential(3, 100)])
    f = linear([2.0, 5.0])
    g = make_grid(X, "x0", 10)
    curve = pdp(f, X, g)
    np.testing.assert_allclose(np.diff(curve.values) / np.diff(g.values), 2.0, rtol=1e-9)
    bundle = ice(f, X, g)
    offsets = bundle.curves - bundle.curves[:, :1]
    np.testing.assert_allclose(offsets, offsets[:1].repeat(100, axis=0), atol=1e-9)


@pytest.mark.parametrize("family", ["ols", "cart", "forest"])
def test_full_ice_mean_equals_pdp(family, survey):
    X, y = survey
    m = {"ols": lambda: fit_ols(X, y), "cart": lambda: fit_cart(X, y),
         "forest": lambda: fit_forest(X, y, n_trees=10, seed=0)}[family]()
    for feat in ("access", "vehicles_per_adult"):
        g = make_grid(X, feat)
        assert abs(np.max(pdp(m, X, g).values - ice(m, X, g).mean)) <= 1e-12


def test_tree_pdp_matches_per_grid_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 2))
    y = (X[:, 0] > 0.3) * 4.0 + (X[:, 1] > -0.2)
    m = fit_cart(X, y, max_depth=3, min_leaf=2)
    g = make_grid(X, "x0", 15)
    expect = []
    for v in g.values:
        total = 0.0
        for row in X:
            r = row.copy()
            r[0] = v
            total += m.predict(r[None, :])[0]
        expect.append(total / len(X))
    np.testing.assert_allclose(pdp(m, X, g).values, expect, rtol=0, atol=1e-12)
    # piecewise constant: changes only across a split threshold on x0
    tree = m.params["tree"]
    thr = np.asarray(tree["threshold"])[np.asarray(tree["feature"]) == 0]
    vals = np.asarray(g.values)
    curve = pdp(m, X, g).values
    for a, b, ca, cb in zip(vals[:-1], vals[1:], curve[:-1], curve[1:]):
        if not np.any((thr >= a) & (thr < b)):
            assert ca == cb


def test_ice_sampling_and_errors(survey):
    X, y = survey
    m = fit_ols(X, y)
    g = make_grid(X, "age")
    assert len(g.values) == 20
    b = ice(m, X, g, sample=200, seed=5)
    assert b.curves.shape == (200, 20) and len(set(b.row_ids)) == 200
    np.testing.assert_array_equal(b.row_ids, ice(m, X, g, sample=200, seed=5).row_ids)
    with pytest.raises(DataError, match="empty"):
        ice(m, X, g, sample=[])
    with pytest.raises(DataError, match="unknown feature"):
        make_grid(X, "income")
    with pytest.raises(DataError, match="outside"):
        pdp(m, X, GridSpec("age", (0.0, 200.0)))
    assert make_grid(X, "vehicles_per_adult").values == ("0", "0-1", "1+")
    assert set(ice(m, X, g, sample=[1, 2]).to_frame().columns) == {"feature", "row_id", "grid_value", "yhat"}


# --- Shapley ---------------------------------------------------------------------------

def _shap_oracle(f, x, B):
    """Average marginal contribution over all p! orderings."""
    p = len(x)

    def v(S):
        rows = B.copy()
        rows[:, list(S)] = x[list(S)]
        return f(rows).mean()

    phi = np.zeros(p)
    perms = list(itertools.permutations(range(p)))
    for order in perms:
        S = []
        for j in order:
            before = v(S)
            S.append(j)
            phi[j] += v(S) - before
    return phi / len(perms)


def test_exact_matches_ordering_oracle():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(12, 4))
    f = lambda A: np.sin(A[:, 0]) * A[:, 1] + A[:, 2] ** 2 - np.maximum(A[:, 3], 0) * A[:, 0]
    x = rng.normal(size=4)
    ex = shap_exact(f, x, B)
    np.testing.assert_allclose(ex.phi, _shap_oracle(f, x, B), atol=1e-12)
    assert ex.base + ex.phi.sum() == pytest.approx(f(x[None, :])[0], abs=1e-12)


def test_exact_single_feature():
    B = np.array([[0.0], [2.0]])
    f = lambda A: A[:, 0] ** 3
    ex = shap_exact(f, [1.5], B)
    assert ex.phi[0] == pytest.approx(f(np.array([[1.5]]))[0] - ex.base, abs=1e-15)


def test_exact_linear_closed_form_dummy_and_symmetry():
    rng = np.random.default_rng(4)
    B = rng.normal(size=(30, 6))
    B[:, 5] = B[:, 4]
    w = np.array([1.0, -2.0, 0.0, 0.5, 3.0, 3.0])
    x = rng.normal(size=6)
    x[5] = x[4]
    ex = shap_exact(linear(w, 1.0), x, B)
    np.testing.assert_allclose(ex.phi, w * (x - B.mean(axis=0)), atol=1e-9)
    assert ex.phi[2] == 0.0
    assert ex.phi[4] == pytest.approx(ex.phi[5], abs=1e-9)


def test_exact_p_limit_and_empty_background():
    with pytest.raises(ConfigError, match="shap_sampled"):
        shap_exact(linear(np.ones(16)), np.zeros(16), np.zeros((2, 16)))
    with pytest.raises(DataError, match="empty"):
        shap_exact(linear([1.0]), [0.0], np.zeros((3, 1)), background=[])


def test_one_hot_block_is_one_player(survey):
    X, y = survey
    m = fit_ols(X, y)
    ex = shap_exact(m, X.values[0], X, background=np.arange(40))
    assert ex.features == tuple(X.schema.feature_names)
    assert ex.base + ex.phi.sum() == pytest.approx(ex.prediction, abs=1e-9)
    assert ex.feature_values[ex.features.index("vehicles_per_adult")] in ("0", "0-1", "1+")


def test_sampled_close_to_exact_and_deterministic():
    rng = np.random.default_rng(5)
    B = rng.normal(size=(60, 8))
    f = lambda A: A[:, 0] * A[:, 1] + np.tanh(A[:, 2]) * 3 + A[:, 3] ** 2 - A[:, 4] + 0 * A[:, 7]
    std_f = f(B).std()
    x = rng.normal(size=8)
    ex = shap_exact(f, x, B)
    sa = shap_sampled(f, x, B, n_coalitions=5000, seed=1)
    assert np.max(np.abs(ex.phi - sa.phi)) < 0.05 * std_f
    assert sa.phi[7] == 0.0
    assert sa.base + sa.phi.sum() == pytest.approx(sa.prediction, abs=1e-9)
    np.testing.assert_array_equal(sa.phi, shap_sampled(f, x, B, n_coalitions=5000, seed=1).phi)
    with pytest.raises(ConfigError):
        shap_sampled(f, x, B, n_coalitions=15)


def test_beeswarm_frame(survey):
    X, y = survey
    m = fit_ols(X, y)
    exps = shap_many(m, X, [0, 1, 2], background=np.arange(20))
    frame = beeswarm_frame(exps, [0, 1, 2])
    assert list(frame.columns) == ["instance", "feature", "shap", "feature_value"]
    assert len(frame) == 3 * len(X.schema.columns)


# --- LIME -------------------------------------------------------------------------------

def test_lime_recovers_linear_box():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(500, 4)) * [1.0, 2.0, 0.5, 3.0]
    w = np.array([1.5, -0.7, 4.0, 0.2])
    p = 4
    ex = lime_explain(linear(w, 2.0), X[0], X, num_samples=4000, K=p, kernel_width=10 * math.sqrt(p), seed=0)
    np.testing.assert_allclose(ex.weights, w, rtol=0.05)
    assert ex.r2 == pytest.approx(1.0, abs=1e-9)


def test_lime_nested_r2_and_determinism(survey):
    X, y = survey
    m = fit_forest(X, y, n_trees=10, seed=0)
    p = len(X.schema.columns)
    full = lime_explain(m, X.values[3], X, num_samples=1000, K=p, seed=2)
    for k in range(1, p):
        assert full.r2 >= lime_explain(m, X.values[3], X, num_samples=1000, K=k, seed=2).r2 - 1e-12
    again = lime_explain(m, X.values[3], X, num_samples=1000, K=p, seed=2)
    np.testing.assert_array_equal(full.weights, again.weights)
    small = lime_explain(m, X.values[3], X, num_samples=1000, K=2, seed=2)
    assert np.count_nonzero(small.weights) <= 2 and len(small.selected) == 2
    assert full.kernel_width == pytest.approx(0.75 * math.sqrt(p))
    assert set(full.to_dict()) >= {"intercept", "weights", "kernel_width", "surrogate_r2", "num_samples", "seed"}


def test_lime_preconditions():
    X = np.random.default_rng(0).normal(size=(50, 3))
    with pytest.raises(ConfigError, match="10\\*K"):
        lime_explain(linear(np.ones(3)), X[0], X, num_samples=20, K=3)
    const = np.ones((50, 3))
    with pytest.raises(DataError, match="vary"):
        lime_explain(linear(np.ones(3)), const[0], const, num_samples=100, K=1)
