"""Shipping gates: one test per acceptance criterion, budgets included.

Each test prints a single `criterion N: PASS` line (visible with -s or in
the captured output) and enforces its own runtime budget, so `pytest -v
tests/test_acceptance.py` reads as a ten-line scorecard.
"""

import functools
import itertools
import json
import math
import shutil
import time

import numpy as np
import pytest

from ngage.cli import main
from ngage.core import SensorTrace
from ngage.eda import cvxeda_decompose
from ngage.evaluation import build_fold_plan
from ngage.features import dtw_distance, engagement_scores
from ngage.hrv import (
    IbiSeries,
    detect_beats,
    hrv_freq_features,
    hrv_time_features,
    ibi_from_beats,
)
from ngage.model import (
    GbmParams,
    fit_gbm,
    fit_linear,
    predict_gbm,
    predict_linear,
)
from ngage.segment import igts_topdown


class _Survey:
    def __init__(self, *qs):
        self.qs = qs

    def items(self):
        return self.qs


def _done(n, t0, budget, detail=""):
    dt = time.perf_counter() - t0
    assert dt < budget, f"criterion {n} took {dt:.2f} s, budget {budget:.0f} s"
    print(f"criterion {n}: PASS ({dt:.2f} s{', ' + detail if detail else ''})")


def test_criterion_01_score_arithmetic_exhaustive():
    t0 = time.perf_counter()
    scores = {}
    for qs in itertools.product(range(-2, 3), repeat=5):
        s = engagement_scores(_Survey(*qs))
        scores[qs] = s
        for v in (s.behavioural, s.emotional, s.cognitive, s.overall):
            assert 1.0 <= v <= 5.0
    assert len(scores) == 3125

    dims = ("behavioural", "emotional", "cognitive", "overall")
    for qs, lo in scores.items():
        for idx in range(5):
            if qs[idx] == 2:
                continue
            bumped = list(qs)
            bumped[idx] += 1
            hi = scores[tuple(bumped)]
            sign = -1.0 if idx in (1, 3) else 1.0  # q2/q4 reverse-coded
            for dim in dims:
                assert sign * (getattr(hi, dim) - getattr(lo, dim)) >= -1e-12

    best = scores[(2, -2, 2, -2, 2)]
    assert (best.behavioural, best.emotional, best.cognitive, best.overall) \
        == (5.0, 5.0, 5.0, 5.0)
    mid = scores[(0, 0, 0, 0, 0)]
    assert (mid.behavioural, mid.emotional, mid.cognitive, mid.overall) \
        == (3.0, 3.0, 3.0, 3.0)
    mixed = scores[(1, 0, -1, 1, 2)]
    assert (mixed.behavioural, mixed.emotional, mixed.cognitive) \
        == (3.5, 2.0, 5.0)
    assert mixed.overall == pytest.approx(3.2)
    _done(1, t0, 1.0, "3125 surveys")


def _dtw_oracle(a, b):
    @functools.lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0 and j == 0:
            return 0.0
        if i == 0 or j == 0:
            return math.inf
        return abs(a[i - 1] - b[j - 1]) + min(rec(i - 1, j), rec(i, j - 1),
                                              rec(i - 1, j - 1))
    return rec(len(a), len(b))


def test_criterion_02_dtw_matches_recursive_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(200):
        a = rng.normal(size=int(rng.integers(1, 51)))
        b = rng.normal(size=int(rng.integers(1, 51)))
        got = dtw_distance(a, b, band=None)
        want = _dtw_oracle(tuple(a), tuple(b))
        worst = max(worst, abs(got - want))
    assert worst <= 1e-12
    _done(2, t0, 10.0, f"max |diff| {worst:.2e}")


def _bateman(t, tau0=2.0, tau1=0.7):
    h = np.exp(-t / tau0) - np.exp(-t / tau1)
    return np.where(t >= 0, h, 0.0)


def test_criterion_03_eda_decomposition_contracts():
    t0 = time.perf_counter()
    rate, seconds = 4.0, 600.0
    n = int(rate * seconds)

    const = cvxeda_decompose(SensorTrace("EDA", 0.0, rate, np.full(n, 2.0)))
    assert np.max(np.abs(const.tonic - 2.0)) <= 1e-3

    impulses = ((60.0, 0.8), (150.0, 0.5), (240.0, 0.65),
                (330.0, 0.45), (420.0, 0.7), (540.0, 0.55))
    driver = np.zeros(n)
    for when, amp in impulses:
        driver[int(when * rate)] = amp
    kernel = _bateman(np.arange(0.0, 20.0, 1.0 / rate))
    phasic = np.convolve(driver, kernel)[:n]
    tr = SensorTrace("EDA", 0.0, rate, 1.5 + phasic)
    d = cvxeda_decompose(tr)

    near = np.zeros(n, dtype=bool)
    half = int(0.5 * rate)
    for when, _amp in impulses:
        i = int(when * rate)
        near[max(0, i - half):i + half + 1] = True
    mass = np.abs(d.driver)
    localized = mass[near].sum() / mass.sum()
    assert localized >= 0.9

    signal_rms = float(np.sqrt(np.mean(tr.values ** 2)))
    residual_rms = float(np.sqrt(np.mean(d.residual ** 2)))
    assert residual_rms <= 0.05 * signal_rms
    _done(3, t0, 30.0, f"driver mass near impulses {localized:.3f}")


def test_criterion_04_igts_boundary_recovery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    for trial in range(50):
        T = int(rng.integers(100, 601))
        t_star = int(rng.integers(20, T - 20))
        X = np.empty((2, T))
        X[0] = np.where(np.arange(T) < t_star, 1.0, 0.05)
        X[1] = np.where(np.arange(T) < t_star, 0.05, 1.0)
        X += np.abs(rng.normal(0.0, 0.005, X.shape))
        res = igts_topdown(X, 1)
        assert abs(res.boundaries[0] - t_star) <= 2, (trial, T, t_star)
        if trial < 10:
            gains = [igts_topdown(X, k).information_gain for k in range(1, 5)]
            for lo, hi in zip(gains, gains[1:]):
                assert hi >= lo - 1e-12
    _done(4, t0, 5.0, "50 instances")


def test_criterion_05_hrv_closed_forms():
    t0 = time.perf_counter()
    iv = np.full(200, 1000.0)
    beats = np.r_[0.0, np.cumsum(iv) / 1000.0]
    const = hrv_time_features(IbiSeries(beats, iv, ("detected",) * iv.size))
    assert const.bpm == 60.0
    assert const.sdnn == 0.0
    assert const.rmssd == 0.0

    iv = np.tile([800.0, 850.0], 100)
    beats = np.r_[0.0, np.cumsum(iv) / 1000.0]
    alt = hrv_time_features(IbiSeries(beats, iv, ("detected",) * iv.size))
    assert alt.pnn50 == 0.0
    assert alt.pnn20 == 100.0
    assert alt.rmssd == pytest.approx(50.0)

    def modulated(f_mod, seconds=300.0, base=0.8, depth=0.05):
        t, events = 0.0, [0.0]
        while t < seconds:
            t += base + depth * np.sin(2 * np.pi * f_mod * t)
            events.append(t)
        ev = np.array(events)
        return IbiSeries(ev, np.diff(ev) * 1000.0,
                         ("detected",) * (ev.size - 1))

    lf = hrv_freq_features(modulated(0.1))
    assert lf.lf_power / (lf.lf_power + lf.hf_power) >= 0.8
    hf = hrv_freq_features(modulated(0.3))
    assert hf.hf_power / (hf.lf_power + hf.hf_power) >= 0.8
    _done(5, t0, 5.0)


def test_criterion_06_beat_detection_with_amplitude_noise():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    rate, seconds, bpm = 64.0, 120.0, 72.0
    rr = 60.0 / bpm
    beats = np.arange(0.0, seconds, rr)
    tau = np.arange(int(seconds * rate)) / rate
    seg = np.clip(np.searchsorted(beats, tau, "right") - 1, 0, len(beats) - 2)
    phase = (tau - beats[seg]) / rr
    sig = 50.0 * np.cos(2 * np.pi * phase)
    sig = sig + rng.normal(0.0, 0.05 * 50.0, sig.shape)  # 5% amplitude noise

    detected = detect_beats(SensorTrace("BVP", 0.0, rate, sig))
    feats = hrv_time_features(ibi_from_beats(detected))
    assert abs(feats.bpm - bpm) <= 2.0
    _done(6, t0, 2.0, f"bpm {feats.bpm:.2f}")


def test_criterion_07_boosting_beats_linear_on_friedman():
    t0 = time.perf_counter()
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 5))
        y = X[:, 0] - 1.5 * X[:, 1] ** 2 + np.sin(X[:, 2]) \
            + rng.normal(0, 0.3, 60)
        model = fit_gbm(X, y, GbmParams(num_leaves=7, learning_rate=0.2,
                                        n_rounds=30))
        losses = [float(np.mean((predict_gbm(model, X, n_rounds=r) - y) ** 2))
                  for r in range(len(model.trees) + 1)]
        for later, earlier in zip(losses[1:], losses):
            assert later <= earlier + 1e-12

    rng = np.random.default_rng(107)
    X = rng.uniform(size=(1500, 10))
    y = (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
         + 20.0 * (X[:, 2] - 0.5) ** 2 + 10.0 * X[:, 3] + 5.0 * X[:, 4]
         + rng.normal(0.0, 1.0, 1500))
    Xtr, ytr, Xte, yte = X[:1000], y[:1000], X[1000:], y[1000:]
    gbm = fit_gbm(Xtr, ytr, GbmParams(num_leaves=31, learning_rate=0.1,
                                      n_rounds=300))
    gbm_rmse = float(np.sqrt(np.mean((predict_gbm(gbm, Xte) - yte) ** 2)))
    lin = fit_linear(Xtr, ytr)
    lin_rmse = float(np.sqrt(np.mean((predict_linear(lin, Xte) - yte) ** 2)))
    assert gbm_rmse <= 0.7 * lin_rmse, (gbm_rmse, lin_rmse)
    _done(7, t0, 60.0, f"rmse ratio {gbm_rmse / lin_rmse:.3f}")


def test_criterion_08_fold_hygiene_1000_plans():
    t0 = time.perf_counter()
    groups = [f"g{i:02d}" for i in range(23)]
    universe = set(groups)
    for seed in range(1000):
        plan = build_fold_plan(groups, 5, 3, seed=seed)
        assert sorted(len(f) for f in plan.outer) == [4, 4, 5, 5, 5]
        seen = []
        for outer_test, inner_folds in zip(plan.outer, plan.inner):
            held_out = set(outer_test)
            pool = universe - held_out
            inner_union = set()
            for inner_test in inner_folds:
                inner_set = set(inner_test)
                assert not inner_set & held_out  # leakage
                assert inner_set <= pool
                assert not inner_union & inner_set
                inner_union |= inner_set
            assert inner_union == pool
            seen.extend(outer_test)
        assert sorted(seen) == groups
    _done(8, t0, 60.0, "1000 plans")


def test_criterion_09_end_to_end_default_cohort(tmp_path):
    t0 = time.perf_counter()
    data = tmp_path / "data"
    assert main(["synth", "--config", "default", "--seed", "42",
                 "--out", str(data)]) == 0
    bounds = tmp_path / "boundaries.csv"
    assert main(["segment", "--data", str(data), "--out", str(bounds)]) == 0
    feats = tmp_path / "features.csv"
    assert main(["features", "--data", str(data), "--boundaries", str(bounds),
                 "--out", str(feats)]) == 0
    regimes = tmp_path / "regimes.json"
    regimes.write_text('[{"families": ["EDA"], "target": "overall"}]')
    report = tmp_path / "report.json"
    assert main(["eval", "--features", str(feats), "--target", "overall",
                 "--regimes", str(regimes), "--seed", "42",
                 "--out", str(report)]) == 0
    shutil.rmtree(data)  # ~1.3 GB of wearable CSVs, no longer needed

    payload = json.loads(report.read_text())
    metrics = payload["targets"]["overall"]["metrics"]
    model_mae = metrics["model"]["mae"]
    random_mae = metrics["random"]["mae"]
    assert model_mae <= 0.75 * random_mae, (model_mae, random_mae)

    eda_entry = payload["regimes"][0]
    assert not eda_entry["skipped"]
    eda_mae = eda_entry["report"]["metrics"]["model"]["mae"]
    assert model_mae <= eda_mae, (model_mae, eda_mae)
    _done(9, t0, 600.0,
          f"model {model_mae:.3f} vs random {random_mae:.3f}, "
          f"EDA-only {eda_mae:.3f}")


def test_criterion_10_identical_seeds_identical_reports(tmp_path):
    t0 = time.perf_counter()
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({
        "synth": {"n_students": 8, "n_teachers": 2, "days": 3,
                  "classes_per_day": 3, "survey_rate": 0.9},
        "grid": {"num_leaves": [7, 15], "learning_rate": [0.1],
                 "n_rounds": [40]},
        "cv": {"outer_k": 4, "inner_l": 2},
    }))

    def run(tag):
        root = tmp_path / tag
        data = root / "data"
        assert main(["synth", "--config", str(cfg_path), "--seed", "13",
                     "--out", str(data)]) == 0
        bounds = root / "boundaries.csv"
        assert main(["segment", "--config", str(cfg_path),
                     "--data", str(data), "--out", str(bounds)]) == 0
        feats = root / "features.csv"
        assert main(["features", "--config", str(cfg_path),
                     "--data", str(data), "--boundaries", str(bounds),
                     "--out", str(feats)]) == 0
        report = root / "report.json"
        assert main(["eval", "--config", str(cfg_path),
                     "--features", str(feats), "--target", "all",
                     "--seed", "13", "--out", str(report)]) == 0
        shutil.rmtree(data)
        return root

    a, b = run("a"), run("b")
    for name in ("boundaries.csv", "features.csv", "report.json",
                 "table6.csv", "table7.csv", "regime_table.csv",
                 "per_participant_errors.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    _done(10, t0, 600.0, "two runs byte-identical")
