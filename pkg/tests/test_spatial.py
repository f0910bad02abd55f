import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from transitbench.dataset import Column, Schema, encode, make_dataset
from transitbench.errors import ConfigError, DataError
from transitbench.models import fit_cart, fit_ols
from transitbench.spatial import (
    DEFAULT_DELTAS, HexGrid, HexMap, hex_bin, new_trips_map, sensitivity_curve, spaef, spaef_matrix,
    spaef_vectors,
)

GRID = HexGrid(1000.0, (0.0, 0.0))


def _brute_cell(grid, x, y):
    """Nearest center over a generous window of lattice points, ties to lowest (q, r)."""
    R = grid.size / math.sqrt(3)
    r_est = round((y - grid.origin[1]) / (1.5 * R))
    q_est = round((x - grid.origin[0]) / (math.sqrt(3) * R) - r_est / 2)
    best = None
    for q in range(q_est - 3, q_est + 4):
        for r in range(r_est - 3, r_est + 4):
            cx, cy = grid.centers(q, r)
            d = (cx - x) ** 2 + (cy - y) ** 2
            key = (round(d / (R * R), 9), q, r)
            best = key if best is None or key < best else best
    return best[1], best[2]


@settings(max_examples=300)
@given(x=st.floats(-5e4, 5e4), y=st.floats(-5e4, 5e4))
def test_cell_lookup_matches_nearest_center(x, y):
    assert tuple(GRID.cell_of([x, y])[0]) == _brute_cell(GRID, x, y)


def test_centers_map_to_themselves_and_flat_to_flat_width():
    q, r = np.meshgrid(np.arange(-3, 4), np.arange(-3, 4))
    cx, cy = GRID.centers(q.ravel(), r.ravel())
    np.testing.assert_array_equal(GRID.cell_of(np.column_stack([cx, cy])), np.column_stack([q.ravel(), r.ravel()]))
    x1, y1 = GRID.centers(1, 0)
    assert math.hypot(x1, y1) == pytest.approx(1000.0)  # neighbouring centers are one flat-to-flat width apart


def test_edge_tie_goes_to_lowest_axial():
    x1, _ = GRID.centers(1, 0)
    assert tuple(GRID.cell_of([x1 / 2, 0.0])[0]) == (0, 0)
    m = hex_bin([[x1 / 2, 0.0]], [7.0], GRID)
    assert m.cells == {(0, 0): 7.0}


def test_single_and_shared_cell():
    assert hex_bin([[10.0, 20.0]], [5.0], GRID).cells == {(0, 0): 5.0}
    m = hex_bin([[10.0, 20.0], [-30.0, 5.0]], [2.0, 3.0], GRID)
    assert m.cells == {(0, 0): 5.0} and m.counts == {(0, 0): 2}


def test_conservation_on_random_points():
    rng = np.random.default_rng(0)
    xy = rng.uniform(-20000, 20000, size=(10_000, 2))
    ints = rng.integers(0, 50, 10_000).astype(float)
    grid = HexGrid.for_points(xy)
    m = hex_bin(xy, ints, grid)
    assert m.total == ints.sum()
    assert sum(m.counts.values()) == 10_000
    vals = rng.normal(size=10_000)
    assert hex_bin(xy, vals, grid).total == pytest.approx(vals.sum(), abs=1e-9)


def test_nonfinite_coordinates():
    with pytest.raises(DataError, match="finite"):
        hex_bin([[np.nan, 0.0]], [1.0], GRID)


def test_hexmap_csv(tmp_path):
    m = hex_bin([[0.0, 0.0], [5000.0, 3000.0]], [1.0, 2.0], GRID)
    m.to_csv(tmp_path / "h.csv")
    frame = pd.read_csv(tmp_path / "h.csv")
    assert list(frame.columns) == ["q", "r", "center_x", "center_y", "value"]
    assert frame["value"].sum() == 3.0


# --- SPAEF ------------------------------------------------------------------------------

def _direct_spaef(A, B, bins):
    A, B = np.asarray(A, float), np.asarray(B, float)
    alpha = np.sum((A - A.mean()) * (B - B.mean())) / math.sqrt(np.sum((A - A.mean()) ** 2) * np.sum((B - B.mean()) ** 2))
    cv = lambda v: math.sqrt(np.mean((v - v.mean()) ** 2)) / v.mean()
    beta = cv(A) / cv(B)
    za = (A - A.mean()) / A.std()
    zb = (B - B.mean()) / B.std()
    lo, hi = min(za.min(), zb.min()), max(za.max(), zb.max())
    w = (hi - lo) / bins
    K = np.zeros(bins)
    L = np.zeros(bins)
    for v, H in ((za, K), (zb, L)):
        for z in v:
            H[min(int((z - lo) / w), bins - 1)] += 1
    gamma = np.minimum(K, L).sum() / K.sum()
    return 1 - math.sqrt((alpha - 1) ** 2 + (beta - 1) ** 2 + (gamma - 1) ** 2), alpha, beta, gamma


def _map(values):
    return HexMap(GRID, {(i, 0): float(v) for i, v in enumerate(values)})


def test_spaef_self_is_one():
    rng = np.random.default_rng(1)
    m = _map(rng.gamma(2.0, size=50))
    c = spaef(m, m)
    assert (c.alpha, c.beta, c.gamma) == pytest.approx((1, 1, 1), abs=1e-12)
    assert c.score == pytest.approx(1.0, abs=1e-9)


def test_spaef_hand_case():
    c = spaef(_map([1, 2, 3, 4]), _map([4, 3, 2, 1]), bins=4)
    assert c.alpha == pytest.approx(-1.0, abs=1e-12)
    expect, a, b, g = _direct_spaef([1, 2, 3, 4], [4, 3, 2, 1], 4)
    assert (a, b, g) == pytest.approx((-1.0, 1.0, 1.0))
    assert c.score == pytest.approx(expect, abs=1e-9)
    assert c.score == pytest.approx(-1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_spaef_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.gamma(2.0, size=40) + 0.1, rng.gamma(3.0, size=40) + 0.1
    for bins in (4, 10, 100):
        assert spaef_vectors(A, B, bins).score == pytest.approx(_direct_spaef(A, B, bins)[0], abs=1e-9)


def test_spaef_mean_shift():
    A = np.array([1.0, 2.0, 5.0, 3.0])
    c = spaef_vectors(A, A + 2.0)
    assert c.alpha == pytest.approx(1.0) and c.beta != pytest.approx(1.0) and c.score < 1


@settings(max_examples=100)
@given(st.lists(st.floats(0.1, 100), min_size=3, max_size=30), st.integers(0, 1000))
def test_spaef_at_most_one(vals, seed):
    A = np.array(vals)
    B = np.random.default_rng(seed).permutation(A) * 1.7 + 0.3
    if A.std() > 1e-9:
        c = spaef_vectors(A, B)
        assert c.score <= 1 + 1e-12 and 0 <= c.gamma <= 1


def test_spaef_errors_and_union():
    with pytest.raises(DataError, match="variance"):
        spaef(_map([1, 1, 1]), _map([1, 2, 3]))
    with pytest.raises(DataError):
        spaef_vectors([1.0], [2.0])
    a = HexMap(GRID, {(0, 0): 1.0, (1, 0): 2.0})
    b = HexMap(GRID, {(2, 0): 1.0, (3, 0): 3.0})
    assert spaef(a, b).disjoint and spaef(a, b).n_cells == 4
    with pytest.raises(DataError, match="grid"):
        spaef(a, HexMap(HexGrid(500.0), {(0, 0): 1.0, (1, 0): 2.0}))


def test_spaef_matrix_unit_diagonal():
    rng = np.random.default_rng(2)
    maps = {n: _map(rng.gamma(2.0, size=20)) for n in ("ols", "zinb", "forest")}
    frame = spaef_matrix(maps)
    assert frame.shape == (3, 4)
    np.testing.assert_allclose(np.diag(frame.drop(columns="model").to_numpy()), 1.0)


# --- scenarios --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def scenario_data():
    rng = np.random.default_rng(3)
    n = 300
    schema = Schema((Column("access", "numeric"), Column("age", "numeric")), target="trips", coords=("x", "y"))
    access = rng.uniform(0, 300_000, n)
    age = rng.uniform(20, 70, n)
    y = np.clip(np.round(access / 60_000 + rng.normal(0, 1, n)), 0, 25)
    ds = make_dataset({"access": access, "age": age, "trips": y,
                       "x": rng.uniform(0, 5000, n), "y": rng.uniform(0, 5000, n)}, schema)
    return ds, encode(ds)


def test_ols_curve_is_linear_and_scales(scenario_data):
    ds, X = scenario_data
    m = fit_ols(X, ds.y)
    w = m.params["coef"][X.index("access")]
    c = sensitivity_curve(m, X)
    np.testing.assert_array_equal(c.deltas, DEFAULT_DELTAS)
    assert c.mean_new_trips[0] == 0.0
    np.testing.assert_allclose(c.mean_new_trips, w * c.deltas, rtol=1e-9, atol=1e-12)
    c2 = sensitivity_curve(m, X, deltas=np.array(DEFAULT_DELTAS) * 0.5)
    np.testing.assert_allclose(c2.mean_new_trips, 0.5 * c.mean_new_trips, rtol=1e-9, atol=1e-12)


def test_tree_curve_matches_brute_force(scenario_data):
    ds, X = scenario_data
    m = fit_cart(X, ds.y, max_depth=4, min_leaf=5)
    deltas = np.arange(0, 200_001, 25_000)
    c = sensitivity_curve(m, X, deltas=deltas)
    base = m.predict(X)
    for d, got in zip(deltas, c.mean_new_trips):
        A = X.values.copy()
        A[:, 0] += d
        assert got == pytest.approx(np.mean(m.predict(A) - base), abs=1e-12)
    # the curve only steps when some person's shifted access crosses an access split
    tree = m.params["tree"]
    thr = np.asarray(tree["threshold"])[np.asarray(tree["feature"]) == 0]
    acc = X.values[:, 0]
    for d0, d1, v0, v1 in zip(deltas[:-1], deltas[1:], c.mean_new_trips[:-1], c.mean_new_trips[1:]):
        crosses = np.any((acc[:, None] + d0 <= thr[None, :]) & (acc[:, None] + d1 > thr[None, :]))
        if not crosses:
            assert v0 == v1


def test_curve_validation(scenario_data):
    ds, X = scenario_data
    m = fit_ols(X, ds.y)
    with pytest.raises(ConfigError):
        sensitivity_curve(m, X, deltas=[10, 0])
    with pytest.raises(DataError, match="unknown feature"):
        sensitivity_curve(m, X, feature="jobs")
    zero = sensitivity_curve(m, X, deltas=[0])
    assert zero.mean_new_trips.tolist() == [0.0]


def test_new_trips_map(scenario_data):
    ds, X = scenario_data
    m = fit_ols(X, ds.y)
    w = m.params["coef"][0]
    grid = HexGrid.for_points(ds.coords)
    assert all(v == 0 for v in new_trips_map(m, X, ds.coords, "access", 0, grid).cells.values())
    two = np.array([[100.0, 100.0], [120.0, 90.0]])
    mm = new_trips_map(m, X.take([0, 1]), two, "access", 50_000, HexGrid.for_points(two))
    assert list(mm.cells.values()) == [pytest.approx(2 * w * 50_000, rel=1e-9)]
    with pytest.raises(DataError, match="coordinates"):
        new_trips_map(m, X, None, "access", 1.0, grid)
