import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transitbench.dataset import stratified_kfold
from transitbench.errors import DataError
from transitbench.metrics import (
    FoldError, cv_score, score, score_matrix_frame, scores_frame, summary_frame, weighted_median,
)
from transitbench.models import RegressorSpec


def test_hand_triple():
    s = score([0, 0, 4], [1, 0, 2])
    assert s.rmse == pytest.approx(math.sqrt(5 / 3), abs=1e-12)
    assert s.medae == 1.0
    assert s.r2 == pytest.approx(17 / 32, abs=1e-12)
    assert s.rrse == pytest.approx(math.sqrt(15 / 32), abs=1e-12)


def test_perfect_and_mean_predictors():
    y = np.array([1.0, 3.0, 2.0, 7.0])
    p = score(y, y)
    assert (p.r2, p.rmse, p.medae, p.rrse) == (1.0, 0.0, 0.0, 0.0)
    m = score(y, np.full(4, y.mean()))
    assert m.r2 == pytest.approx(0, abs=1e-15) and m.rrse == pytest.approx(1, abs=1e-15)


def test_errors():
    with pytest.raises(DataError, match="length"):
        score([1, 2], [1, 2, 3])
    with pytest.raises(DataError, match="variance"):
        score([2, 2, 2], [1, 2, 3])
    with pytest.raises(DataError):
        score([1], [1])


pairs = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-50, 50), min_size=n, max_size=n),
        st.lists(st.floats(-50, 50), min_size=n, max_size=n),
    )
).filter(lambda t: np.ptp(t[0]) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(pairs, st.randoms(use_true_random=False))
def test_identities_and_permutation_invariance(t, rnd):
    y, yhat = np.array(t[0]), np.array(t[1])
    s = score(y, yhat)
    assert s.r2 + s.rrse**2 == pytest.approx(1.0, abs=1e-12)
    msd = np.mean((y - y.mean()) ** 2)
    assert s.rrse == pytest.approx(s.rmse / math.sqrt(msd), rel=1e-9)
    assert min(s.rmse, s.medae, s.rrse) >= 0
    perm = list(range(len(y)))
    rnd.shuffle(perm)
    q = score(y[perm], yhat[perm])
    assert q.r2 == pytest.approx(s.r2, abs=1e-12) and q.medae == s.medae


def test_medae_robust_to_minority_corruption():
    rng = np.random.default_rng(0)
    y = rng.normal(size=21)
    yhat = y + rng.uniform(-0.1, 0.1, 21)
    bad = yhat.copy()
    bad[:10] += 1e6
    assert score(y, bad).medae <= np.abs(y - yhat)[10:].max()


def test_even_length_median_and_weighted_median():
    assert weighted_median([1, 2, 3, 10]) == 2.5
    assert weighted_median([1, 2, 3, 10], [1, 1, 1, 1]) == 2.5
    assert weighted_median([1, 2, 3], [1, 1, 5]) == 3
    assert weighted_median([5, 1], [3, 1]) == 5


def test_weighted_score_matches_replication():
    y, yhat = np.array([0.0, 1, 4, 2]), np.array([0.5, 1, 3, 3])
    w = np.array([1, 2, 1, 3])
    rep = score(np.repeat(y, w), np.repeat(yhat, w))
    ws = score(y, yhat, w)
    for m in ("r2", "rmse", "medae", "rrse"):
        assert ws[m] == pytest.approx(rep[m], abs=1e-12)


@pytest.fixture
def linear_data():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 2))
    y = np.r_[np.zeros(40), rng.integers(1, 9, 60)].astype(float)
    y = 1 + X @ [2.0, -1.0] + y * 0  # exact linear target
    strat = np.r_[np.zeros(40), np.ones(60)]
    return X, y, stratified_kfold(strat, 10, seed=0)


def test_cv_ols_exact_linear(linear_data):
    X, y, folds = linear_data
    scores = cv_score(RegressorSpec("ols"), X, y, folds)
    assert len(scores) == 10
    assert [s.fold for s in scores] == list(range(10))
    assert all(s.r2 == pytest.approx(1.0, abs=1e-10) for s in scores)


def test_cv_constant_target_error_names_fold(linear_data):
    X, _, folds = linear_data
    with pytest.raises(FoldError, match="fold 0") as exc:
        cv_score(RegressorSpec("ols"), X, np.ones(100), folds)
    assert exc.value.exit_code == 3


def test_cv_external_prediction_vector(linear_data):
    X, y, folds = linear_data
    scores = cv_score(y + 0.1, X, y, folds)
    assert all(s.rmse == pytest.approx(0.1) for s in scores)


def test_frames(linear_data):
    X, y, folds = linear_data
    res = {"ols": cv_score(RegressorSpec("ols"), X, y, folds), "const": cv_score(np.full(100, y.mean()), X, y, folds)}
    long = scores_frame(res)
    assert len(long) == 20 and list(long.columns[:3]) == ["fold", "model", "r2"]
    wide = score_matrix_frame(res)
    assert wide.shape == (10, 1 + 2 * 4) and "ols:rmse" in wide
    summ = summary_frame(res)
    assert summ.loc[summ.model == "ols", "r2_mean"].item() == pytest.approx(100.0)
