"""Per-session feature assembly: EDA summary statistics and arousal
profile, synchrony with teacher and peer-average signals, context
statistics, engagement-score labels, and the model-ready dataset.
"""

import math
from dataclasses import dataclass

import numpy as np

from .eda import arousal_profile, detect_scr_peaks, normalize_eda
from .errors import ValidationError

_EDA_SIGNALS = ("eda", "tonic", "phasic")


def feature_registry(arousal_levels=4):
    """Ordered feature names per family."""
    eda = []
    for stat in ("avg", "std", "n_p", "a_p", "auc"):
        eda += [f"{s}_{stat}" for s in _EDA_SIGNALS]
    eda += ["num_arouse", "ratio_arouse"]
    eda += [f"level_{k}" for k in range(arousal_levels)]
    for suffix in ("pcct", "pccs", "dtwt", "dtws"):
        eda += [f"{s}_{suffix}" for s in _EDA_SIGNALS]
    hrv = [f"hrv_{name}" for name in
           ("bpm", "meani", "sdnn", "lf_power", "hf_power", "ratio_lf_hf",
            "rmssd", "sdsd", "pnn50", "pnn20")]
    acc = ["acc_avg", "acc_std", "acc_dtw_t", "acc_dtw_s", "acc_pcc_t", "acc_pcc_s"]
    st = ["sktemp_avg", "sktemp_max", "sktemp_min"]
    env = [f"{stat}_{var}" for var in ("co2", "temp", "humid", "sound")
           for stat in ("mean", "max", "min")]
    return {"EDA": eda, "HRV": hrv, "ACC": acc, "ST": st, "ENV": env}


def all_feature_names(arousal_levels=4):
    registry = feature_registry(arousal_levels)
    return [name for family in ("EDA", "HRV", "ACC", "ST", "ENV")
            for name in registry[family]]


@dataclass(frozen=True)
class EngagementScores:
    behavioural: float
    emotional: float
    cognitive: float
    overall: float

    def as_dict(self):
        return {"behavioural": self.behavioural, "emotional": self.emotional,
                "cognitive": self.cognitive, "overall": self.overall}


TARGETS = ("behavioural", "emotional", "cognitive", "overall")


def engagement_scores(survey):
    """Map the five Likert items onto the four [1, 5] engagement scores.

    Items 2 and 4 are reverse-coded; each dimension is the mean of its
    post-reversal items shifted from [-2, 2] onto [1, 5].
    """
    q1, q2, q3, q4, q5 = survey.items()
    r2, r4 = -q2, -q4
    return EngagementScores(
        behavioural=(q1 + r2) / 2.0 + 3.0,
        emotional=(q3 + r4) / 2.0 + 3.0,
        cognitive=float(q5) + 3.0,
        overall=(q1 + r2 + q3 + r4 + q5) / 5.0 + 3.0,
    )


def pearson_sync(a, b):
    """Pearson correlation, or None when either side has zero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("series must share a grid")
    if a.shape[0] < 3:
        raise ValidationError("need at least 3 samples")
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return None
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


def sakoe_chiba_width(n, m, fraction=0.1):
    return max(math.ceil(fraction * max(n, m)), abs(n - m))


def dtw_distance(a, b, band="sakoe_chiba", band_fraction=0.1):
    """Dynamic time warping distance with |a_i - b_j| local cost.

    Steps are (1,0), (0,1), (1,1). The default band constrains |i - j|
    to max(ceil(band_fraction*max(n,m)), |n-m|); band=None runs the exact
    unconstrained program (the oracle-comparison mode).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = a.shape[0], b.shape[0]
    if n < 1 or m < 1:
        raise ValidationError("dtw needs non-empty series")
    if band == "sakoe_chiba":
        w = sakoe_chiba_width(n, m, band_fraction)
    elif band is None:
        w = n + m
    else:
        raise ValidationError(f"unknown band {band!r}")

    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        keep = np.abs(i - j) <= w
        if not keep.any():
            continue
        i, j = i[keep], j[keep]
        cost = np.abs(a[i - 1] - b[j - 1])
        D[i, j] = cost + np.minimum(np.minimum(D[i - 1, j], D[i, j - 1]), D[i - 1, j - 1])
    return float(D[n, m])


def peer_average(signals, exclude):
    """Pointwise mean of the other students' aligned series.

    `signals` maps participant_id -> 1 Hz array on the class grid.
    Returns None when no peer remains.
    """
    keys = [k for k in sorted(signals) if k != exclude]
    if not keys:
        return None
    stack = np.vstack([signals[k] for k in keys])
    if stack.ndim != 2 or np.unique([signals[k].shape[0] for k in keys]).size != 1:
        raise ValidationError("peer series must share a grid")
    return stack.mean(axis=0)


def znorm(x):
    """Population z-score; constant series map to zeros."""
    x = np.asarray(x, dtype=np.float64)
    sigma = float(np.std(x))
    if sigma == 0.0:
        return np.zeros_like(x)
    return (x - float(np.mean(x))) / sigma


def eda_session_features(decomp, profile, *, scr_min_amplitude=0.01,
                         normalization="zscore", normalized=None):
    """Summary features of one class-window decomposition.

    avg/std and peak statistics are computed on the normalized signals;
    the area under the curve stays on the raw microsiemens scale
    (sample sum times the sampling period). `normalized` optionally
    supplies signals normalized over a wider span (the whole recording)
    and sliced to this window, so window means stay informative; when
    omitted the window itself is normalized.
    """
    norm = normalized if normalized is not None else normalize_eda(
        decomp, normalization)
    if len(norm.mixed) != len(decomp.mixed):
        raise ValidationError("normalized signals must match the window")
    dt = 1.0 / decomp.sample_rate
    out = {}
    pairs = (("eda", decomp.mixed, norm.mixed),
             ("tonic", decomp.tonic, norm.tonic),
             ("phasic", decomp.phasic, norm.phasic))
    for label, raw, normed in pairs:
        peaks = detect_scr_peaks(normed, scr_min_amplitude)
        out[f"{label}_avg"] = float(np.mean(normed))
        out[f"{label}_std"] = float(np.std(normed))
        out[f"{label}_n_p"] = float(len(peaks))
        out[f"{label}_a_p"] = (float(np.mean([p[1] for p in peaks]))
                               if peaks else None)
        out[f"{label}_auc"] = float(np.sum(raw) * dt)
    out["num_arouse"] = float(profile.num_arouse)
    out["ratio_arouse"] = float(profile.ratio_arouse)
    for k, frac in enumerate(profile.level_fractions):
        out[f"level_{k}"] = float(frac)
    return out


def context_features(env, st, acc_mag, t0, t1):
    """Environment, skin-temperature and activity statistics in a window.

    `env` is an EnvTrace or None; `st` and `acc_mag` are SensorTraces
    (already median-filtered) or None. Absent data yields missing values.
    """
    out = {}
    stats = (("mean", np.mean), ("max", np.max), ("min", np.min))
    if env is not None:
        mask = env.in_window(t0, t1)
        columns = (("co2", env.co2), ("temp", env.temperature),
                   ("humid", env.humidity), ("sound", env.sound))
        for var, column in columns:
            vals = column[mask]
            for stat, fn in stats:
                out[f"{stat}_{var}"] = float(fn(vals)) if vals.size else None
    else:
        for var in ("co2", "temp", "humid", "sound"):
            for stat, _fn in stats:
                out[f"{stat}_{var}"] = None

    st_win = st.clip(t0, t1) if st is not None else None
    for stat, fn in (("avg", np.mean), ("max", np.max), ("min", np.min)):
        out[f"sktemp_{stat}"] = (float(fn(st_win.values))
                                 if st_win is not None and len(st_win) else None)

    acc_win = acc_mag.clip(t0, t1) if acc_mag is not None else None
    if acc_win is not None and len(acc_win):
        out["acc_avg"] = float(np.mean(acc_win.values))
        out["acc_std"] = float(np.std(acc_win.values))
    else:
        out["acc_avg"] = None
        out["acc_std"] = None
    return out


@dataclass(frozen=True)
class SessionRecord:
    participant_id: str
    class_id: str
    subject: str
    features: dict  # name -> float | None
    scores: EngagementScores


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (n, p), NaN = missing
    targets: dict  # dimension -> (n,) float array
    groups: np.ndarray  # participant id per row
    subjects: np.ndarray  # class subject per row
    keys: tuple  # (participant_id, class_id) per row
    feature_names: tuple
    families: dict  # family -> tuple of column names present

    def __len__(self):
        return self.X.shape[0]

    def restrict(self, families):
        """Column subset keeping only the named feature families."""
        unknown = set(families) - set(self.families)
        if unknown:
            raise ValidationError(f"unknown sensor families {sorted(unknown)}")
        if not families:
            raise ValidationError("empty sensor-family selection")
        keep_names = [n for fam in self.families
                      if fam in families for n in self.families[fam]]
        if not keep_names:
            raise ValidationError("selection matched no feature columns")
        idx = [self.feature_names.index(n) for n in keep_names]
        return Dataset(self.X[:, idx], self.targets, self.groups, self.subjects,
                       self.keys, tuple(keep_names),
                       {f: self.families[f] for f in self.families if f in families})

    def filter_subject(self, subject):
        mask = self.subjects == subject
        return Dataset(self.X[mask], {k: v[mask] for k, v in self.targets.items()},
                       self.groups[mask], self.subjects[mask],
                       tuple(k for k, keep in zip(self.keys, mask) if keep),
                       self.feature_names, self.families)


def assemble_dataset(records, families=("EDA", "HRV", "ACC", "ST", "ENV"),
                     arousal_levels=4):
    """Stack session records into a model-ready matrix.

    Rows are sorted by (participant_id, class_id); missing features become
    NaN and are imputed later with training-split medians at fit time.
    """
    if not records:
        raise ValidationError("no sessions to assemble")
    registry = feature_registry(arousal_levels)
    unknown = set(families) - set(registry)
    if unknown:
        raise ValidationError(f"unknown sensor families {sorted(unknown)}")
    if not families:
        raise ValidationError("empty sensor-family selection")
    families = tuple(f for f in ("EDA", "HRV", "ACC", "ST", "ENV") if f in families)
    names = [n for f in families for n in registry[f]]
    records = sorted(records, key=lambda r: (r.participant_id, r.class_id))
    X = np.full((len(records), len(names)), np.nan)
    for i, rec in enumerate(records):
        for j, name in enumerate(names):
            value = rec.features.get(name)
            if value is not None:
                X[i, j] = value
    targets = {dim: np.array([getattr(r.scores, dim) for r in records])
               for dim in TARGETS}
    return Dataset(X, targets,
                   np.array([r.participant_id for r in records]),
                   np.array([r.subject for r in records]),
                   tuple((r.participant_id, r.class_id) for r in records),
                   tuple(names),
                   {f: tuple(registry[f]) for f in families})
