"""Counterfactual outcome predictors: CART trees, gradient boosting,
random forests, and the seasonal-naive baseline.

Everything here is deterministic given (data, params, seed): split ties
break toward the lowest feature index then the lowest threshold, forests
derive per-tree seeds from a named seed stream, and models serialize to a
versioned JSON schema so training and prediction can run as separate
invocations.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .base import BaseEstimator, check_array, check_is_fitted, check_X_y, rng_for

MODEL_FORMAT = "teamshock-model"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# CART regression tree

@dataclass
class RegressionTree:
    """Binary regression tree over array-encoded nodes.

    ``feature[i] == -1`` marks a leaf whose prediction is ``value[i]``;
    internal nodes route ``x[feature] <= threshold`` to ``left``.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: object = None
    min_samples_leaf: int = 1

    @property
    def n_nodes(self):
        return len(self.feature)

    def predict(self, X):
        X = check_array(X)
        idx = np.zeros(len(X), dtype=np.intp)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                break
            rows = np.where(active)[0]
            node = idx[rows]
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            idx[rows] = np.where(go_left, self.left[node], self.right[node])
        return self.value[idx].copy()

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            value=np.asarray(d["value"], dtype=float),
            max_depth=d.get("max_depth"),
            min_samples_leaf=d.get("min_samples_leaf", 1),
        )


def _best_split(X, y, rows, feature_ids, min_samples_leaf):
    """Greedy variance-reduction split over exact midpoint candidates.

    Returns (feature, threshold, left_rows, right_rows) or None.  Gain ties
    resolve to the lowest feature index, then the lowest threshold (first
    maximum in ascending threshold order).
    """
    y_node = y[rows]
    n = len(rows)
    total = y_node.sum()
    best_gain = -np.inf
    best = None
    positions = np.arange(1, n)
    for j in feature_ids:
        xj = X[rows, j]
        order = np.argsort(xj, kind="mergesort")
        xs = xj[order]
        csum = np.cumsum(y_node[order])
        valid = (
            (xs[1:] > xs[:-1])
            & (positions >= min_samples_leaf)
            & (n - positions >= min_samples_leaf)
        )
        if not valid.any():
            continue
        nl = positions[valid].astype(float)
        sl = csum[:-1][valid]
        gain = sl**2 / nl + (total - sl) ** 2 / (n - nl)
        k = int(np.argmax(gain))
        if gain[k] > best_gain + 1e-12:
            best_gain = gain[k]
            cut = positions[valid][k]
            threshold = 0.5 * (xs[cut - 1] + xs[cut])
            best = (j, threshold, rows[order[:cut]], rows[order[cut:]])
    return best


def fit_tree(X, y, max_depth=None, min_samples_leaf=1, max_features=None,
             rng=None) -> RegressionTree:
    """Fit a CART regression tree (mean leaves, SSE splits).

    ``max_features`` enables per-split feature subsampling ("sqrt" or an
    int); it requires ``rng``.  Deterministic given input order and rng
    state.
    """
    X, y = check_X_y(X, y)
    n, p = X.shape
    if n < 1:
        raise ValueError("cannot fit a tree on an empty dataset")

    if max_features in (None, "all"):
        n_candidates = p
    elif max_features == "sqrt":
        n_candidates = max(1, int(np.sqrt(p)))
    else:
        n_candidates = max(1, min(int(max_features), p))
    if n_candidates < p and rng is None:
        raise ValueError("feature subsampling requires an rng")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n, dtype=np.intp), 0)]
    while stack:
        node, rows, depth = stack.pop()
        y_node = y[rows]
        value[node] = float(y_node.mean())
        if (
            (max_depth is not None and depth >= max_depth)
            or len(rows) < 2 * min_samples_leaf
            or np.ptp(y_node) == 0.0
        ):
            continue
        if n_candidates < p:
            candidates = np.sort(rng.choice(p, size=n_candidates, replace=False))
        else:
            candidates = np.arange(p)
        split = _best_split(X, y, rows, candidates, min_samples_leaf)
        if split is None:
            continue
        j, thr, rows_l, rows_r = split
        feature[node] = int(j)
        threshold[node] = float(thr)
        node_l, node_r = new_node(), new_node()
        left[node], right[node] = node_l, node_r
        stack.append((node_r, rows_r, depth + 1))
        stack.append((node_l, rows_l, depth + 1))

    return RegressionTree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        value=np.asarray(value, dtype=float),
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )


def bin_columns(X, max_bins=256):
    """Quantile-bin each column to at most ``max_bins`` representative
    values; a cheaper split search for large n at slight fidelity cost."""
    X = check_array(X)
    out = X.copy()
    for j in range(X.shape[1]):
        col = X[:, j]
        if len(np.unique(col)) <= max_bins:
            continue
        edges = np.quantile(col, np.linspace(0, 1, max_bins + 1))
        edges = np.unique(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        idx = np.clip(np.searchsorted(edges, col, side="right") - 1,
                      0, len(mids) - 1)
        out[:, j] = mids[idx]
    return out


def _resolve_matrix(X, feature_names):
    """Validate prediction input against the training feature registry."""
    if isinstance(X, pd.DataFrame):
        if feature_names is not None:
            missing = [c for c in feature_names if c not in X.columns]
            if missing:
                raise ValueError(f"prediction input lacks columns {missing}")
            X = X[list(feature_names)]
        return check_array(X.to_numpy(dtype=float))
    arr = check_array(X)
    if feature_names is not None and arr.shape[1] != len(feature_names):
        raise ValueError(
            f"prediction input has {arr.shape[1]} columns, model expects "
            f"{len(feature_names)}"
        )
    return arr


def _capture_names(X):
    return list(X.columns) if isinstance(X, pd.DataFrame) else None


class GradientBoostedTrees(BaseEstimator):
    """Stagewise least-squares boosting of CART trees.

    prediction = initial mean + learning_rate * sum(tree outputs); training
    MSE is non-increasing per stage for learning_rate in (0, 1].
    """

    def __init__(self, n_trees=100, learning_rate=0.1, max_depth=3,
                 min_samples_leaf=5, max_bins=None):
        self.n_trees = n_trees
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_bins = max_bins

    def fit(self, X, y):
        self.feature_names_ = _capture_names(X)
        X, y = check_X_y(np.asarray(X, dtype=float), y)
        if self.max_bins:
            X = bin_columns(X, self.max_bins)
        self.initial_ = float(y.mean())
        pred = np.full(len(y), self.initial_)
        self.trees_ = []
        self.train_mse_path_ = []
        for _ in range(self.n_trees):
            residual = y - pred
            tree = fit_tree(X, residual, max_depth=self.max_depth,
                            min_samples_leaf=self.min_samples_leaf)
            pred = pred + self.learning_rate * tree.predict(X)
            self.trees_.append(tree)
            self.train_mse_path_.append(float(np.mean((y - pred) ** 2)))
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = _resolve_matrix(X, self.feature_names_)
        pred = np.full(len(X), self.initial_)
        for tree in self.trees_:
            pred += self.learning_rate * tree.predict(X)
        return pred


class RandomForest(BaseEstimator):
    """Bootstrap-aggregated CART trees with per-split feature subsampling.

    The prediction is the mean over trees, hence always bounded by the
    per-tree extremes.  Per-tree seeds come from the named seed stream, so
    fits are reproducible regardless of execution order.
    """

    def __init__(self, n_trees=200, max_depth=None, min_samples_leaf=5,
                 max_features="all", bootstrap=True, random_state=0,
                 max_bins=None):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.max_bins = max_bins

    def fit(self, X, y):
        self.feature_names_ = _capture_names(X)
        X, y = check_X_y(np.asarray(X, dtype=float), y)
        if self.max_bins:
            X = bin_columns(X, self.max_bins)
        n = len(y)
        self.trees_ = []
        for t in range(self.n_trees):
            rng = rng_for(self.random_state, "rf-tree", t)
            if self.bootstrap:
                rows = rng.integers(0, n, size=n)
                Xt, yt = X[rows], y[rows]
            else:
                Xt, yt = X, y
            self.trees_.append(
                fit_tree(Xt, yt, max_depth=self.max_depth,
                         min_samples_leaf=self.min_samples_leaf,
                         max_features=self.max_features, rng=rng)
            )
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = _resolve_matrix(X, self.feature_names_)
        preds = np.stack([tree.predict(X) for tree in self.trees_])
        return preds.mean(axis=0)


def seasonal_naive_predict(prior_year_values):
    """Baseline: the same team's same-month value from the prior year.

    NaN entries (team absent in the prior year) stay NaN and are excluded
    from baseline evaluation; the count is returned alongside.
    """
    prior = np.asarray(prior_year_values, dtype=float)
    n_missing = int(np.isnan(prior).sum())
    return prior.copy(), n_missing


# ---------------------------------------------------------------------------
# Splitting, tuning, evaluation

def train_test_split_indices(n, test_fraction=0.2, seed=0):
    """Disjoint, exhaustive train/test index split by seeded shuffle."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    perm = rng_for(seed, "train-test-split").permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def kfold_indices(n, k, seed=0):
    """k disjoint folds covering all indices, sizes differing by at most 1."""
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = rng_for(seed, "kfold").permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def kfold_tune(X, y, grid, factory, k=5, seed=0):
    """Exhaustive grid search by mean validation MSE over k folds.

    ``grid`` is a list of parameter dicts; ``factory(params)`` builds a
    fresh estimator.  Ties keep the earlier grid entry.
    """
    if not grid:
        raise ValueError("empty parameter grid")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = kfold_indices(len(y), k, seed)
    all_idx = np.arange(len(y))
    results = []
    best = None
    for params in grid:
        fold_mses = []
        for fold in folds:
            train = np.setdiff1d(all_idx, fold, assume_unique=True)
            model = factory(params)
            model.fit(X[train], y[train])
            pred = model.predict(X[fold])
            fold_mses.append(float(np.mean((y[fold] - pred) ** 2)))
        mean_mse = float(np.mean(fold_mses))
        results.append({"params": params, "mean_mse": mean_mse,
                        "fold_mses": fold_mses})
        if best is None or mean_mse < best[0]:
            best = (mean_mse, params)
    return best[1], results


@dataclass
class EvalReport:
    model: str
    outcome: str
    month: int
    r2: float
    mse: float
    n: int


def evaluate(y_true, y_pred, model="", outcome="", month=0) -> EvalReport:
    """Test-set R-squared and MSE; R-squared is NaN when the targets are
    constant (SST = 0), MSE stays valid."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    keep = ~(np.isnan(y_true) | np.isnan(y_pred))
    y_true, y_pred = y_true[keep], y_pred[keep]
    if len(y_true) == 0:
        raise ValueError("no finite pairs to evaluate")
    sse = float(np.sum((y_true - y_pred) ** 2))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    mse = sse / len(y_true)
    r2 = 1.0 - sse / sst if sst > 0 else float("nan")
    return EvalReport(model=model, outcome=outcome, month=month,
                      r2=r2, mse=mse, n=len(y_true))


# ---------------------------------------------------------------------------
# Serialization

def model_to_dict(model) -> dict:
    if not isinstance(model, (GradientBoostedTrees, RandomForest)):
        raise TypeError(f"cannot serialize {type(model).__name__}")
    check_is_fitted(model, "trees_")
    if isinstance(model, GradientBoostedTrees):
        kind = "gbdt"
        extra = {"initial": model.initial_}
    else:
        kind = "rf"
        extra = {}
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": kind,
        "params": model.get_params(),
        "feature_names": model.feature_names_,
        "trees": [t.to_dict() for t in model.trees_],
        **extra,
    }


def model_from_dict(d):
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    if d["kind"] == "gbdt":
        model = GradientBoostedTrees(**d["params"])
        model.initial_ = float(d["initial"])
    elif d["kind"] == "rf":
        model = RandomForest(**d["params"])
    else:
        raise ValueError(f"unknown model kind {d['kind']!r}")
    model.feature_names_ = d["feature_names"]
    model.trees_ = [RegressionTree.from_dict(t) for t in d["trees"]]
    return model


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, separators=(",", ":"), sort_keys=True)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
