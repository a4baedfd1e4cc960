"""Grouped nested cross-validation, LOSO, and regime sweeps.

Folds partition participant groups, never rows, so no participant
contributes to both sides of any split. Every split is audited at run
time rather than trusted.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import (GbmParams, baseline_average, baseline_random, fit_gbm,
                    fit_linear, predict_gbm, predict_linear, top_features)

DEFAULT_GRID = {
    "num_leaves": [7, 15, 31],
    "learning_rate": [0.05, 0.1],
    "n_rounds": [100, 300],
}


@dataclass(frozen=True)
class FoldPlan:
    outer: tuple  # k tuples of group labels
    inner: tuple  # per outer fold, L tuples partitioning the train groups
    seed: object

    def __post_init__(self):
        seen = set()
        for fold in self.outer:
            for g in fold:
                if g in seen:
                    raise ValidationError(f"group {g} appears in two folds")
                seen.add(g)


def make_group_folds(group_ids, k, seed):
    """Deal the shuffled distinct groups round-robin into k folds."""
    distinct = sorted(set(group_ids))
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > len(distinct):
        raise ValidationError(f"k={k} exceeds {len(distinct)} distinct groups")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(distinct))
    folds = [[] for _ in range(k)]
    for j, idx in enumerate(perm):
        folds[j % k].append(distinct[idx])
    return [tuple(f) for f in folds]


def build_fold_plan(group_ids, k, inner_l, seed):
    outer = make_group_folds(group_ids, k, [seed, 0])
    inner = []
    for i, test_groups in enumerate(outer):
        held = set(test_groups)
        train_groups = [g for g in sorted(set(group_ids)) if g not in held]
        inner.append(tuple(make_group_folds(train_groups, inner_l, [seed, 1 + i])))
    return FoldPlan(tuple(outer), tuple(inner), seed)


def score_predictions(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValidationError("length mismatch between targets and predictions")
    if y.size < 1:
        raise ValidationError("need at least one prediction")
    err = y_hat - y
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    return mae, rmse


def expand_grid(grid):
    """All (num_leaves, learning_rate, n_rounds) combos, deterministic order."""
    combos = []
    for rounds in sorted(grid["n_rounds"]):
        for leaves in sorted(grid["num_leaves"]):
            for lr in sorted(grid["learning_rate"]):
                combos.append((leaves, float(lr), rounds))
    return combos


@dataclass
class EvalReport:
    target: str
    seed: object
    families: tuple
    subject: object
    n_rows: int
    n_groups: int
    metrics: dict  # predictor -> {"mae", "rmse"}
    folds: list  # per outer fold breakdown
    per_participant: dict
    rows: list  # one record per evaluated response

    def to_dict(self):
        return {
            "target": self.target,
            "seed": self.seed,
            "families": list(self.families),
            "subject": self.subject,
            "n_rows": self.n_rows,
            "n_groups": self.n_groups,
            "metrics": {k: dict(v) for k, v in sorted(self.metrics.items())},
            "folds": self.folds,
            "per_participant": {k: dict(v) for k, v in sorted(self.per_participant.items())},
            "rows": self.rows,
        }


def _rows_for_groups(dataset, groups):
    member = np.isin(dataset.groups, list(groups))
    return np.nonzero(member)[0]


def _audit_disjoint(train_groups, test_groups):
    overlap = set(train_groups) & set(test_groups)
    if overlap:
        raise ValidationError(f"group leakage across a split: {sorted(overlap)}")


def _check_fold_size(n_rows, min_samples_leaf, what):
    if n_rows < 2 * min_samples_leaf:
        raise ValidationError(
            f"{what} has {n_rows} rows, fewer than {2 * min_samples_leaf}")


def _tune_inner(dataset, y, train_groups, inner_folds, grid_combos,
                min_samples_leaf):
    """Mean validation MAE per combo over the inner folds.

    Combos sharing (num_leaves, learning_rate) are served by one fit at
    the largest round count; truncated prediction reproduces the shorter
    fits exactly, so every grid cell is still evaluated.
    """
    by_pair = {}
    for leaves, lr, rounds in grid_combos:
        by_pair.setdefault((leaves, lr), []).append(rounds)
    maes = {combo: [] for combo in grid_combos}
    for val_groups in inner_folds:
        fit_groups = [g for g in train_groups if g not in set(val_groups)]
        _audit_disjoint(fit_groups, val_groups)
        fit_rows = _rows_for_groups(dataset, fit_groups)
        val_rows = _rows_for_groups(dataset, val_groups)
        _check_fold_size(fit_rows.size, min_samples_leaf, "inner training fold")
        if val_rows.size == 0:
            raise ValidationError("empty inner validation fold")
        X_fit, y_fit = dataset.X[fit_rows], y[fit_rows]
        X_val, y_val = dataset.X[val_rows], y[val_rows]
        for (leaves, lr), round_list in sorted(by_pair.items()):
            params = GbmParams(num_leaves=leaves, learning_rate=lr,
                               n_rounds=max(round_list),
                               min_samples_leaf=min_samples_leaf)
            model = fit_gbm(X_fit, y_fit, params, dataset.feature_names)
            for rounds in round_list:
                pred = predict_gbm(model, X_val, n_rounds=rounds)
                mae, _ = score_predictions(y_val, pred)
                maes[(leaves, lr, rounds)].append(mae)
    return {combo: float(np.mean(vals)) for combo, vals in maes.items()}


def _select_params(mean_maes):
    # ties prefer fewer rounds, then fewer leaves, then smaller rate
    def sort_key(item):
        (leaves, lr, rounds), mae = item
        return (mae, rounds, leaves, lr)

    (leaves, lr, rounds), _ = min(mean_maes.items(), key=sort_key)
    return leaves, lr, rounds


def nested_cv(dataset, target, grid=None, k=5, inner_l=3, seed=7,
              min_samples_leaf=5, top_k=10, families=None, subject=None):
    """Outer folds estimate error; inner folds pick hyperparameters, then
    the outer-train model's top-10 features are kept for the final fit."""
    grid = grid or DEFAULT_GRID
    if target not in dataset.targets:
        raise ValidationError(f"unknown target {target!r}")
    y = dataset.targets[target]
    combos = expand_grid(grid)
    plan = build_fold_plan(dataset.groups, k, inner_l, seed)
    families = tuple(families) if families is not None else tuple(dataset.families)

    row_records = []
    fold_records = []
    collected = {"model": [], "linear": [], "average": [], "random": []}
    collected_truth = []
    for i, test_groups in enumerate(plan.outer):
        train_groups = [g for g in sorted(set(dataset.groups))
                        if g not in set(test_groups)]
        _audit_disjoint(train_groups, test_groups)
        train_rows = _rows_for_groups(dataset, train_groups)
        test_rows = _rows_for_groups(dataset, test_groups)
        _check_fold_size(train_rows.size, min_samples_leaf, "outer training fold")
        if test_rows.size == 0:
            raise ValidationError("empty outer test fold")

        mean_maes = _tune_inner(dataset, y, train_groups, plan.inner[i],
                                combos, min_samples_leaf)
        leaves, lr, rounds = _select_params(mean_maes)
        params = GbmParams(num_leaves=leaves, learning_rate=lr,
                           n_rounds=rounds, min_samples_leaf=min_samples_leaf)

        X_train, y_train = dataset.X[train_rows], y[train_rows]
        X_test, y_test = dataset.X[test_rows], y[test_rows]
        full_model = fit_gbm(X_train, y_train, params, dataset.feature_names)
        keep_names = top_features(full_model, top_k)
        if not keep_names:
            keep_names = list(dataset.feature_names[:1])
        keep_idx = [dataset.feature_names.index(name) for name in keep_names]
        final = fit_gbm(X_train[:, keep_idx], y_train, params,
                        tuple(keep_names))
        pred = predict_gbm(final, X_test[:, keep_idx])

        lin = fit_linear(X_train, y_train, dataset.feature_names)
        pred_lin = predict_linear(lin, X_test)
        pred_avg = baseline_average(y_train).predict(len(test_rows))
        pred_rnd = baseline_random(y_train, [seed, 100 + i]).predict(len(test_rows))

        mae, rmse = score_predictions(y_test, pred)
        fold_records.append({
            "fold": i,
            "test_groups": list(test_groups),
            "n_train": int(train_rows.size),
            "n_test": int(test_rows.size),
            "params": {"num_leaves": leaves, "learning_rate": lr,
                       "n_rounds": rounds},
            "top_features": list(keep_names),
            "inner_cells_evaluated": len(combos) * len(plan.inner[i]),
            "mae": mae,
            "rmse": rmse,
        })
        for j, row in enumerate(test_rows):
            row_records.append({
                "participant_id": dataset.groups[row],
                "class_id": dataset.keys[row][1],
                "fold": i,
                "y": float(y_test[j]),
                "pred": float(pred[j]),
                "pred_linear": float(pred_lin[j]),
                "pred_average": float(pred_avg[j]),
                "pred_random": float(pred_rnd[j]),
            })
        collected["model"].append(pred)
        collected["linear"].append(pred_lin)
        collected["average"].append(pred_avg)
        collected["random"].append(pred_rnd)
        collected_truth.append(y_test)

    truth = np.concatenate(collected_truth)
    metrics = {}
    for name, chunks in collected.items():
        mae, rmse = score_predictions(truth, np.concatenate(chunks))
        metrics[name] = {"mae": mae, "rmse": rmse}

    per_participant = _participant_breakdown(row_records)
    return EvalReport(
        target=target, seed=seed, families=families, subject=subject,
        n_rows=int(truth.size), n_groups=len(set(dataset.groups)),
        metrics=metrics, folds=fold_records,
        per_participant=per_participant, rows=row_records)


def _participant_breakdown(row_records):
    grouped = {}
    for rec in row_records:
        grouped.setdefault(rec["participant_id"], []).append(
            abs(rec["pred"] - rec["y"]))
    out = {}
    for pid in sorted(grouped):
        errs = np.array(grouped[pid])
        out[pid] = {"n": int(errs.size),
                    "mae": float(errs.mean()),
                    "median_abs_error": float(np.median(errs))}
    return out


def loso_eval(dataset, target, params=None, seed=7):
    """One iteration per participant with fixed hyperparameters."""
    if target not in dataset.targets:
        raise ValidationError(f"unknown target {target!r}")
    groups = sorted(set(dataset.groups))
    if len(groups) < 2:
        raise ValidationError("leave-one-subject-out needs at least 2 groups")
    params = params or GbmParams()
    y = dataset.targets[target]
    folds = make_group_folds(dataset.groups, len(groups), [seed, 0])
    row_records = []
    fold_records = []
    preds, truth = [], []
    for i, test_groups in enumerate(folds):
        train_groups = [g for g in groups if g not in set(test_groups)]
        _audit_disjoint(train_groups, test_groups)
        train_rows = _rows_for_groups(dataset, train_groups)
        test_rows = _rows_for_groups(dataset, test_groups)
        if test_rows.size == 0:
            continue
        model = fit_gbm(dataset.X[train_rows], y[train_rows], params,
                        dataset.feature_names)
        pred = predict_gbm(model, dataset.X[test_rows])
        mae, rmse = score_predictions(y[test_rows], pred)
        fold_records.append({"fold": i, "test_groups": list(test_groups),
                             "n_test": int(test_rows.size),
                             "mae": mae, "rmse": rmse})
        for j, row in enumerate(test_rows):
            row_records.append({
                "participant_id": dataset.groups[row],
                "class_id": dataset.keys[row][1],
                "fold": i,
                "y": float(y[test_rows][j]),
                "pred": float(pred[j]),
            })
        preds.append(pred)
        truth.append(y[test_rows])
    mae, rmse = score_predictions(np.concatenate(truth), np.concatenate(preds))
    return EvalReport(
        target=target, seed=seed, families=tuple(dataset.families),
        subject=None, n_rows=int(sum(len(t) for t in truth)),
        n_groups=len(groups),
        metrics={"model": {"mae": mae, "rmse": rmse}},
        folds=fold_records,
        per_participant=_participant_breakdown(row_records),
        rows=row_records)


def regime_sweep(dataset, regimes, grid=None, k=5, inner_l=3, seed=7,
                 min_samples_leaf=5, top_k=10, min_subject_sessions=30):
    """One nested CV per (families, subject filter, target) regime.

    Subject-filtered regimes below the session floor are skipped with a
    notice instead of producing an unstable report.
    """
    if not regimes:
        raise ValidationError("empty regime list")
    results = []
    for families, subject, target in regimes:
        tag = {"families": list(families), "subject": subject, "target": target}
        ds = dataset.restrict(families)
        if subject is not None:
            ds = ds.filter_subject(subject)
            if ds.X.shape[0] < min_subject_sessions:
                results.append({
                    "regime": tag, "skipped": True,
                    "reason": (f"only {ds.X.shape[0]} sessions, fewer than "
                               f"{min_subject_sessions}")})
                continue
        report = nested_cv(ds, target, grid=grid, k=k, inner_l=inner_l,
                           seed=seed, min_samples_leaf=min_samples_leaf,
                           top_k=top_k, families=families, subject=subject)
        results.append({"regime": tag, "skipped": False, "report": report})
    return results
