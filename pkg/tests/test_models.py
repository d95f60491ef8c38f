import json

import numpy as np
import pandas as pd
import pytest

from teamshock.base import NotFittedError, rng_for
from teamshock.models import (GradientBoostedTrees, RandomForest, bin_columns,
                              evaluate, fit_tree, kfold_indices, kfold_tune,
                              load_model, model_from_dict, model_to_dict,
                              save_model, seasonal_naive_predict,
                              train_test_split_indices)


def _brute_force_best_split(X, y, min_samples_leaf=1):
    """O(n^2 p) oracle: scan every (feature, midpoint) pair, minimize SSE."""
    n, p = X.shape
    best = None
    for j in range(p):
        for thr in sorted(set(0.5 * (a + b) for a, b in
                              zip(sorted(X[:, j])[:-1], sorted(X[:, j])[1:])
                              if a != b)):
            left = y[X[:, j] <= thr]
            right = y[X[:, j] > thr]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            sse = (np.sum((left - left.mean()) ** 2)
                   + np.sum((right - right.mean()) ** 2))
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, thr)
    return best


def test_tree_stump_matches_brute_force_split():
    rng = np.random.default_rng(0)
    for trial in range(50):
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        tree = fit_tree(X, y, max_depth=1)
        oracle = _brute_force_best_split(X, y)
        assert tree.feature[0] == oracle[1]
        assert tree.threshold[0] == pytest.approx(oracle[2], abs=1e-12)


def test_tree_single_leaf_when_min_samples_leaf_is_n():
    X = np.arange(10, dtype=float).reshape(-1, 1)
    y = np.arange(10, dtype=float)
    tree = fit_tree(X, y, min_samples_leaf=10)
    assert tree.n_nodes == 1
    np.testing.assert_allclose(tree.predict(X), np.full(10, y.mean()))


def test_tree_fits_constant_target_with_single_leaf():
    X = np.random.default_rng(1).normal(size=(20, 2))
    tree = fit_tree(X, np.full(20, 3.0))
    assert tree.n_nodes == 1


def test_tree_interpolates_training_data_when_unrestricted():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    tree = fit_tree(X, y)
    np.testing.assert_allclose(tree.predict(X), y, atol=1e-12)


def test_tree_tie_breaks_lowest_feature_index():
    # duplicated feature columns: identical gains must pick column 0
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    tree = fit_tree(X, y, max_depth=1)
    assert tree.feature[0] == 0


def test_tree_serialization_roundtrip_identical_predictions():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 4))
    y = rng.normal(size=60)
    tree = fit_tree(X, y, max_depth=4, min_samples_leaf=2)
    clone = type(tree).from_dict(json.loads(json.dumps(tree.to_dict())))
    np.testing.assert_array_equal(tree.predict(X), clone.predict(X))


def test_tree_feature_subsampling_requires_rng():
    X = np.random.default_rng(0).normal(size=(10, 4))
    with pytest.raises(ValueError, match="rng"):
        fit_tree(X, X[:, 0], max_features="sqrt")


def test_bin_columns_reduces_distinct_values():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(1000, 2))
    binned = bin_columns(X, max_bins=16)
    assert len(np.unique(binned[:, 0])) <= 16
    # small column untouched
    X2 = np.column_stack([np.repeat([1.0, 2.0], 500), X[:, 1]])
    assert len(np.unique(bin_columns(X2, 16)[:, 0])) == 2


# ---------------------------------------------------------------------------
# GBDT

def _signal_data(n=400, seed=0, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 5))
    y = 2.0 * X[:, 0] + np.sin(2 * X[:, 1]) + rng.normal(0, noise, n)
    return X, y


def test_gbdt_training_mse_path_nonincreasing():
    X, y = _signal_data()
    model = GradientBoostedTrees(n_trees=60, learning_rate=0.3).fit(X, y)
    path = np.array(model.train_mse_path_)
    assert len(path) == 60
    assert np.all(np.diff(path) <= 1e-12)


def test_gbdt_prediction_structure():
    # prediction = initial mean + lr * sum of tree outputs
    X, y = _signal_data(n=100)
    model = GradientBoostedTrees(n_trees=10).fit(X, y)
    manual = np.full(len(X), model.initial_)
    for tree in model.trees_:
        manual += model.learning_rate * tree.predict(X)
    np.testing.assert_allclose(model.predict(X), manual, atol=1e-12)
    assert model.initial_ == pytest.approx(y.mean())


def test_gbdt_beats_mean_on_signal():
    X, y = _signal_data()
    Xt, yt = _signal_data(seed=1)
    model = GradientBoostedTrees(n_trees=100).fit(X, y)
    assert evaluate(yt, model.predict(Xt)).r2 > 0.7


def test_gbdt_is_deterministic():
    X, y = _signal_data(n=150)
    a = GradientBoostedTrees(n_trees=20).fit(X, y).predict(X)
    b = GradientBoostedTrees(n_trees=20).fit(X, y).predict(X)
    np.testing.assert_array_equal(a, b)


def test_gbdt_requires_fit_before_predict():
    with pytest.raises(NotFittedError):
        GradientBoostedTrees().predict(np.zeros((2, 2)))


def test_gbdt_dataframe_column_contract():
    X, y = _signal_data(n=80)
    cols = [f"f{i}" for i in range(5)]
    df = pd.DataFrame(X, columns=cols)
    model = GradientBoostedTrees(n_trees=5).fit(df, y)
    shuffled = df[cols[::-1]]
    np.testing.assert_allclose(model.predict(shuffled), model.predict(df))
    with pytest.raises(ValueError, match="lacks columns"):
        model.predict(df.drop(columns=["f0"]))


# ---------------------------------------------------------------------------
# Random forest

def test_rf_predictions_bounded_by_tree_extremes():
    X, y = _signal_data(n=200)
    model = RandomForest(n_trees=15, random_state=0).fit(X, y)
    per_tree = np.stack([t.predict(X) for t in model.trees_])
    pred = model.predict(X)
    assert np.all(pred >= per_tree.min(axis=0) - 1e-12)
    assert np.all(pred <= per_tree.max(axis=0) + 1e-12)


def test_rf_seeded_determinism_and_seed_sensitivity():
    X, y = _signal_data(n=150)
    a = RandomForest(n_trees=10, random_state=7).fit(X, y).predict(X)
    b = RandomForest(n_trees=10, random_state=7).fit(X, y).predict(X)
    c = RandomForest(n_trees=10, random_state=8).fit(X, y).predict(X)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rf_max_features_sqrt_runs():
    X, y = _signal_data(n=120)
    model = RandomForest(n_trees=8, max_features="sqrt", random_state=1)
    assert evaluate(y, model.fit(X, y).predict(X)).r2 > 0.3


# ---------------------------------------------------------------------------
# Baseline, splitting, tuning, evaluation

def test_seasonal_naive_passthrough_and_missing_count():
    prior = np.array([1.0, np.nan, 3.0])
    pred, n_missing = seasonal_naive_predict(prior)
    np.testing.assert_array_equal(pred[[0, 2]], [1.0, 3.0])
    assert np.isnan(pred[1]) and n_missing == 1


def test_train_test_split_disjoint_exhaustive():
    train, test = train_test_split_indices(100, 0.2, seed=0)
    assert len(test) == 20 and len(train) == 80
    assert set(train) | set(test) == set(range(100))
    assert not set(train) & set(test)
    train2, test2 = train_test_split_indices(100, 0.2, seed=0)
    np.testing.assert_array_equal(test, test2)


def test_kfold_partition_properties():
    folds = kfold_indices(23, 5, seed=0)
    sizes = [len(f) for f in folds]
    assert sum(sizes) == 23 and max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate(folds)) == list(range(23))
    with pytest.raises(ValueError):
        kfold_indices(3, 5)


def test_kfold_tune_selects_better_params():
    X, y = _signal_data(n=300)
    grid = [{"n_trees": 1, "max_depth": 1},
            {"n_trees": 60, "max_depth": 3}]
    best, results = kfold_tune(X, y, grid,
                               lambda p: GradientBoostedTrees(**p), k=3)
    assert best == grid[1]
    assert len(results) == 2
    assert results[1]["mean_mse"] < results[0]["mean_mse"]


def test_evaluate_matches_definitions():
    y = np.array([1.0, 2.0, 3.0])
    pred = np.array([1.0, 2.0, 5.0])
    rep = evaluate(y, pred)
    # [DERIVED] SSE=4, SST=2, MSE=4/3, R2=1-4/2=-1
    assert rep.mse == pytest.approx(4 / 3)
    assert rep.r2 == pytest.approx(-1.0)
    assert np.isnan(evaluate(np.ones(3), pred).r2)
    rep2 = evaluate(np.array([1.0, np.nan]), np.array([1.0, 1.0]))
    assert rep2.n == 1


# ---------------------------------------------------------------------------
# Serialization

def test_model_save_load_identical_predictions(tmp_path):
    X, y = _signal_data(n=120)
    for model in (GradientBoostedTrees(n_trees=8).fit(X, y),
                  RandomForest(n_trees=6, random_state=3).fit(X, y)):
        path = tmp_path / "m.json"
        save_model(model, path)
        clone = load_model(path)
        np.testing.assert_array_equal(model.predict(X), clone.predict(X))
        assert clone.get_params() == model.get_params()


def test_model_format_guards():
    with pytest.raises(ValueError, match="not a model file"):
        model_from_dict({"format": "something-else"})
    X, y = _signal_data(n=50)
    d = model_to_dict(GradientBoostedTrees(n_trees=2).fit(X, y))
    d["version"] = 99
    with pytest.raises(ValueError, match="version"):
        model_from_dict(d)


def test_model_serialization_rejects_unfitted():
    with pytest.raises(NotFittedError):
        model_to_dict(GradientBoostedTrees())
