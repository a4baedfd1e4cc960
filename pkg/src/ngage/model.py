"""Leaf-wise gradient-boosted regression trees on squared error, a linear
least-squares baseline, and the average/random predictors.

Trees grow by repeatedly splitting the leaf whose best split gives the
largest variance reduction; split search is exact over sorted values.
Everything is deterministic given input order.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class GbmParams:
    num_leaves: int = 31
    learning_rate: float = 0.1
    n_rounds: int = 100
    min_samples_leaf: int = 5
    seed: int = 0  # reserved for stochastic variants; default fit is exact

    def __post_init__(self):
        if self.num_leaves < 2:
            raise ValidationError("num_leaves must be >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.n_rounds < 1:
            raise ValidationError("n_rounds must be >= 1")


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_internal(self):
        return int(np.count_nonzero(self.feature >= 0))


@dataclass
class GbmModel:
    params: GbmParams
    base_score: float
    trees: list
    medians: np.ndarray  # per-column imputation values
    feature_names: tuple

    @property
    def feature_importance_counts(self):
        counts = np.zeros(len(self.feature_names), dtype=np.int64)
        for tree in self.trees:
            internal = tree.feature[tree.feature >= 0]
            counts += np.bincount(internal, minlength=len(self.feature_names))
        return counts


def _impute(X, medians):
    X = np.array(X, dtype=np.float64)
    mask = np.isnan(X)
    if mask.any():
        X[mask] = np.take(medians, np.nonzero(mask)[1])
    return X


def _column_medians(X):
    medians = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        col = col[~np.isnan(col)]
        # a column with no observed values imputes to zero
        medians[j] = np.median(col) if col.size else 0.0
    return medians


class _Leaf:
    __slots__ = ("node_id", "order", "rows", "split", "created")

    def __init__(self, node_id, order, rows, created):
        self.node_id = node_id
        self.order = order  # (n_l, p) row indices, per-feature sorted
        self.rows = rows  # (n_l,) row indices in original order
        self.split = None  # (gain, feature, pos, threshold) or None
        self.created = created


def _best_split(X, residual, leaf, min_samples_leaf):
    order = leaf.order
    n_l, p = order.shape
    if n_l < 2 * min_samples_leaf:
        return None
    cols = np.arange(p)
    xs = X[order, cols[None, :]]
    ys = residual[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1]
    n_left = np.arange(1, n_l, dtype=np.float64)
    s_left = csum[:-1]
    with np.errstate(invalid="ignore"):
        gain = (s_left ** 2 / n_left[:, None]
                + (total - s_left) ** 2 / (n_l - n_left)[:, None]
                - total ** 2 / n_l)
    valid = xs[1:] > xs[:-1]
    size_ok = (n_left >= min_samples_leaf) & (n_l - n_left >= min_samples_leaf)
    gain = np.where(valid & size_ok[:, None], gain, -np.inf)
    # first max along the sorted axis = smallest threshold; across
    # features, first max = lowest feature index
    best_pos = np.argmax(gain, axis=0)
    best_gain = gain[best_pos, cols]
    j = int(np.argmax(best_gain))
    if not best_gain[j] > 0.0:
        return None
    i = int(best_pos[j])
    threshold = (xs[i, j] + xs[i + 1, j]) / 2.0
    return float(best_gain[j]), j, i, float(threshold)


def _partition(order, left_rows, n_total):
    mark = np.zeros(n_total, dtype=bool)
    mark[left_rows] = True
    sel = mark[order]
    n_left = left_rows.shape[0]
    p = order.shape[1]
    left = order.T[sel.T].reshape(p, n_left).T
    right = order.T[~sel.T].reshape(p, order.shape[0] - n_left).T
    return left, right


def _grow_tree(X, residual, root_order, params):
    n, p = X.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = _Leaf(new_node(), root_order, root_order[:, 0].copy(), 0)
    root.split = _best_split(X, residual, root, params.min_samples_leaf)
    leaves = [root]
    counter = 1
    while len(leaves) < params.num_leaves:
        best = None
        for leaf in leaves:
            if leaf.split is None:
                continue
            # ties keep the earliest-created leaf
            if best is None or leaf.split[0] > best.split[0]:
                best = leaf
        if best is None:
            break
        gain, j, pos, thr = best.split
        left_rows = best.order[:pos + 1, j]
        order_l, order_r = _partition(best.order, left_rows, n)
        child_l = _Leaf(new_node(), order_l, order_l[:, 0].copy(), counter)
        child_r = _Leaf(new_node(), order_r, order_r[:, 0].copy(), counter + 1)
        counter += 2
        child_l.split = _best_split(X, residual, child_l, params.min_samples_leaf)
        child_r.split = _best_split(X, residual, child_r, params.min_samples_leaf)
        feature[best.node_id] = j
        threshold[best.node_id] = thr
        left[best.node_id] = child_l.node_id
        right[best.node_id] = child_r.node_id
        leaves.remove(best)
        leaves.extend([child_l, child_r])

    if len(leaves) == 1 and leaves[0].node_id == 0 and feature[0] == -1:
        return None, None  # no usable split anywhere
    pred = np.zeros(n)
    for leaf in leaves:
        leaf_value = float(residual[leaf.rows].mean())
        value[leaf.node_id] = leaf_value
        pred[leaf.rows] = leaf_value
    tree = Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value))
    return tree, pred


def fit_gbm(X, y, params=None, feature_names=None):
    """Fit the boosted ensemble on squared error.

    NaN cells are imputed with training-column medians (stored on the
    model). Boosting stops early once no leaf admits a positive-gain
    split, which also covers constant targets.
    """
    params = params or GbmParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("X must be (n, p) aligned with y")
    n, p = X.shape
    if n < 2 * params.min_samples_leaf:
        raise ValidationError(
            f"need at least {2 * params.min_samples_leaf} rows, got {n}")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(p))
    if len(feature_names) != p:
        raise ValidationError("feature_names length mismatch")

    medians = _column_medians(X)
    X = _impute(X, medians)
    base = float(y.mean())
    model = GbmModel(params, base, [], medians, tuple(feature_names))
    if p == 0:
        return model
    root_order = np.argsort(X, axis=0, kind="stable")
    pred = np.full(n, base)
    for _ in range(params.n_rounds):
        tree, tree_pred = _grow_tree(X, y - pred, root_order, params)
        if tree is None:
            break
        model.trees.append(tree)
        pred += params.learning_rate * tree_pred
    return model


def _route(tree, X):
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if tree.feature[node] < 0:
            out[rows] = tree.value[node]
            continue
        go_left = X[rows, tree.feature[node]] <= tree.threshold[node]
        stack.append((tree.left[node], rows[go_left]))
        stack.append((tree.right[node], rows[~go_left]))
    return out


def predict_gbm(model, X, n_rounds=None, feature_names=None):
    """Deterministic routing; missing cells use the stored medians.

    n_rounds truncates the ensemble to its first n_rounds trees, which
    reproduces a shorter fit exactly.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ValidationError("column count does not match the trained registry")
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        raise ValidationError("feature names do not match the trained registry")
    X = _impute(X, model.medians)
    out = np.full(X.shape[0], model.base_score)
    trees = model.trees if n_rounds is None else model.trees[:n_rounds]
    for tree in trees:
        out += model.params.learning_rate * _route(tree, X)
    return out


def feature_importance(model):
    """(name, split_count) pairs, descending count, ties by column order."""
    counts = model.feature_importance_counts
    order = np.lexsort((np.arange(counts.shape[0]), -counts))
    return [(model.feature_names[j], int(counts[j])) for j in order]


def top_features(model, k=10):
    """Names of the top-k features that were actually used."""
    ranked = feature_importance(model)
    return [name for name, count in ranked if count > 0][:k]


@dataclass
class LinearModel:
    beta: np.ndarray  # intercept first
    mu: np.ndarray
    sigma: np.ndarray
    medians: np.ndarray
    feature_names: tuple


def fit_linear(X, y, feature_names=None, ridge=1e-8):
    """Least squares on standardized columns with a tiny ridge.

    The ridge term only stabilizes rank-deficient designs (duplicated
    columns split their coefficient symmetrically).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValidationError("need at least 2 rows")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(X.shape[1]))
    medians = _column_medians(X)
    X = _impute(X, medians)
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma = np.where(sigma == 0.0, 1.0, sigma)
    Xs = (X - mu) / sigma
    A = np.column_stack([np.ones(X.shape[0]), Xs])
    reg = ridge * np.eye(A.shape[1])
    reg[0, 0] = 0.0  # leave the intercept unpenalized
    beta = np.linalg.solve(A.T @ A + reg, A.T @ y)
    return LinearModel(beta, mu, sigma, medians, tuple(feature_names))


def predict_linear(model, X):
    X = _impute(np.asarray(X, dtype=np.float64), model.medians)
    Xs = (X - model.mu) / model.sigma
    return model.beta[0] + Xs @ model.beta[1:]


class AverageBaseline:
    """Predicts the training-target mean for every row."""

    def __init__(self, y_train):
        y = np.asarray(y_train, dtype=np.float64)
        if y.size == 0:
            raise ValidationError("empty training targets")
        self.mean = float(y.mean())

    def predict(self, X):
        n = X if isinstance(X, int) else np.asarray(X).shape[0]
        return np.full(n, self.mean)


class RandomBaseline:
    """Resamples uniformly from the empirical training targets."""

    def __init__(self, y_train, seed):
        self.y = np.array(y_train, dtype=np.float64)
        if self.y.size == 0:
            raise ValidationError("empty training targets")
        self.rng = np.random.default_rng(seed)

    def predict(self, X):
        n = X if isinstance(X, int) else np.asarray(X).shape[0]
        return self.y[self.rng.integers(0, self.y.size, size=n)]


def baseline_average(y_train):
    return AverageBaseline(y_train)


def baseline_random(y_train, seed):
    return RandomBaseline(y_train, seed)


def _tree_to_dict(tree, node=0):
    if tree.feature[node] < 0:
        return {"value": float(tree.value[node])}
    return {"feature": int(tree.feature[node]),
            "threshold": float(tree.threshold[node]),
            "left": _tree_to_dict(tree, int(tree.left[node])),
            "right": _tree_to_dict(tree, int(tree.right[node]))}


def _tree_from_dict(data):
    feature, threshold, left, right, value = [], [], [], [], []

    def walk(node):
        idx = len(feature)
        if "value" in node:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(node["value"]))
            return idx
        feature.append(int(node["feature"]))
        threshold.append(float(node["threshold"]))
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        left[idx] = walk(node["left"])
        right[idx] = walk(node["right"])
        return idx

    walk(data)
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value))


def save_model(model, path):
    """Self-describing JSON: registry, params, trees, imputation medians."""
    payload = {
        "kind": "gbm-regressor",
        "params": {"num_leaves": model.params.num_leaves,
                   "learning_rate": model.params.learning_rate,
                   "n_rounds": model.params.n_rounds,
                   "min_samples_leaf": model.params.min_samples_leaf,
                   "seed": model.params.seed},
        "base_score": model.base_score,
        "feature_names": list(model.feature_names),
        "medians": [float(v) for v in model.medians],
        "trees": [_tree_to_dict(t) for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "gbm-regressor":
        raise ValidationError(f"{path} is not a saved regressor")
    params = GbmParams(**payload["params"])
    model = GbmModel(params, float(payload["base_score"]),
                     [_tree_from_dict(t) for t in payload["trees"]],
                     np.array(payload["medians"], dtype=np.float64),
                     tuple(payload["feature_names"]))
    return model
