"""File-based pipeline stages: boundary estimation, quality screening,
feature extraction, training, evaluation, and report emission.

Each stage reads and writes plain CSV/JSON so runs are resumable and
the intermediate products are inspectable. All float serialization uses
repr round-tripping, which keeps repeated runs byte-identical.
"""

import csv
import json
import os

import numpy as np

from .config import DEFAULTS
from .core import (load_e4_day, load_env_csv, load_schedule_and_surveys)
from .eda import arousal_profile, cvxeda_decompose, detect_scr_peaks, normalize_eda
from .errors import DataIOError, DecompositionError, EmptySliceError, ValidationError
from .evaluation import nested_cv, regime_sweep
from .features import (SessionRecord, all_feature_names, assemble_dataset,
                       context_features, dtw_distance, engagement_scores,
                       eda_session_features, peer_average, pearson_sync,
                       EngagementScores, TARGETS)
from .hrv import detect_beats, hrv_freq_features, hrv_time_features, ibi_from_beats
from .model import GbmParams, fit_gbm, save_model
from .preprocess import acc_magnitude, eda_quality_gate, median_filter
from .segment import class_boundary


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_rows(path, header, rows):
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _e4_root(data_dir):
    nested = os.path.join(data_dir, "e4")
    return nested if os.path.isdir(nested) else data_dir


def _day_dir(data_dir, pid, date):
    return os.path.join(_e4_root(data_dir), pid, date.isoformat())


def _load_day(data_dir, pid, role, date, config):
    path = _day_dir(data_dir, pid, date)
    if not os.path.isdir(path):
        return None
    window = config["window"]
    return load_e4_day(path, pid, role,
                       tz_offset_hours=config["timezone_offset_hours"],
                       school_start=window["school_start"],
                       school_end=window["school_end"],
                       min_segment_seconds=window["min_segment_seconds"])


def _classes_by_date(classes):
    by_date = {}
    for info in classes:
        by_date.setdefault(info.date, []).append(info)
    for infos in by_date.values():
        infos.sort(key=lambda c: c.scheduled_start)
    return by_date


def _covering_trace(day, channel, t0, t1):
    """The one segment trace that spans [t0, t1], or None."""
    if day is None:
        return None
    for segment in day.segments:
        trace = segment.get(channel)
        if (trace is not None and trace.start_time <= t0 + 1e-6
                and trace.end_time >= t1 - 1e-6):
            return trace
    return None


def stage_segment(data_dir, schedule_path, surveys_path, config, out_path):
    """Estimate actual class boundaries from collective movement."""
    classes, _surveys = load_schedule_and_surveys(schedule_path, surveys_path)
    margin = config["window"]["boundary_margin_seconds"]
    rate = config["sync"]["rate_hz"]
    rows = []
    for date, day_classes in sorted(_classes_by_date(classes).items()):
        pids = sorted({pid for info in day_classes for pid in info.enrolled})
        mags = []
        for pid in pids:
            day = _load_day(data_dir, pid, "student", date, config)
            if day is None:
                continue
            for segment in day.segments:
                ax = [segment.get(c) for c in ("ACC_X", "ACC_Y", "ACC_Z")]
                if all(t is not None for t in ax):
                    mags.append(acc_magnitude(
                        *ax, median_seconds=config["filters"]["acc_median_seconds"]))
        for info in day_classes:
            start = class_boundary(mags, info.scheduled_start, "start",
                                   margin_seconds=margin, rate_hz=rate)
            end = class_boundary(mags, info.scheduled_end, "end",
                                 margin_seconds=margin, rate_hz=rate)
            rows.append((info.class_id, start.time_utc, end.time_utc,
                         min(start.n_used, end.n_used)))
    rows.sort(key=lambda r: r[0])
    _write_rows(out_path, ["class_id", "actual_start", "actual_end",
                           "n_participants_used"], rows)
    return {"n_classes": len(rows)}


def read_boundaries(path):
    expected = ["class_id", "actual_start", "actual_end", "n_participants_used"]
    out = {}
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ValidationError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            if row:
                out[row[0]] = (float(row[1]), float(row[2]))
    return out


def _class_window(info, boundaries):
    if boundaries and info.class_id in boundaries:
        return boundaries[info.class_id]
    return info.scheduled_start, info.scheduled_end


def stage_clean(data_dir, schedule_path, surveys_path, config, out_path,
                boundaries_path=None):
    """Per-session EDA quality decisions, one row per (participant, class)."""
    classes, _surveys = load_schedule_and_surveys(schedule_path, surveys_path)
    boundaries = read_boundaries(boundaries_path) if boundaries_path else None
    gate = config["gate"]
    rows = []
    for date, day_classes in sorted(_classes_by_date(classes).items()):
        pids = sorted({pid for info in day_classes for pid in info.enrolled})
        days = {pid: _load_day(data_dir, pid, "student", date, config)
                for pid in pids}
        for info in day_classes:
            t0, t1 = _class_window(info, boundaries)
            for pid in info.enrolled:
                trace = _covering_trace(days.get(pid), "EDA", t0, t1)
                if trace is None:
                    rows.append((pid, info.class_id, None, None, False, False,
                                 "no_eda_coverage"))
                    continue
                report = eda_quality_gate(
                    trace.clip(t0, t1),
                    flat_level_us=gate["flat_level_us"],
                    flat_run_seconds=gate["flat_run_seconds"],
                    theta_flat=gate["theta_flat"],
                    drop_us=gate["drop_us"],
                    theta_drop=gate["theta_drop"],
                    quant_window_seconds=gate["quant_window_seconds"],
                    quant_min_distinct=gate["quant_min_distinct"])
                rows.append((pid, info.class_id, report.flat_fraction,
                             report.n_abrupt_drops, report.quantization_flag,
                             report.accepted, ";".join(report.reasons)))
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_rows(out_path, ["participant_id", "class_id", "flat_fraction",
                           "n_abrupt_drops", "quantization", "accepted",
                           "reasons"], rows)
    accepted = sum(1 for r in rows if r[5])
    return {"n_sessions": len(rows), "n_accepted": accepted}


def _to_1hz(values, rate):
    """Mean over consecutive one-second blocks (windows align to the
    slice start, which sits on an integer second)."""
    step = int(round(rate))
    n = (values.shape[0] // step) * step
    return values[:n].reshape(-1, step).mean(axis=1)


class _SegmentEda:
    """Decomposition of one full recording segment plus its normalization."""

    def __init__(self, trace, eda_cfg):
        self.trace = trace
        self.decomp = cvxeda_decompose(
            trace,
            tau0=eda_cfg["tau0"], tau1=eda_cfg["tau1"],
            delta_knot_seconds=eda_cfg["delta_knot_seconds"],
            alpha=eda_cfg["alpha"], gamma=eda_cfg["gamma"],
            reltol=eda_cfg["reltol"], max_iter=eda_cfg["max_iter"])
        self.norm = normalize_eda(self.decomp, eda_cfg["normalization"])


def _decompose_covering(day, t0, t1, eda_cfg, cache):
    """Segment-level decomposition reused across the day's class windows."""
    if day is None:
        return None
    for seg_idx, segment in enumerate(day.segments):
        trace = segment.get("EDA")
        if (trace is None or trace.start_time > t0 + 1e-6
                or trace.end_time < t1 - 1e-6):
            continue
        key = (day.participant_id, day.date, seg_idx)
        if key not in cache:
            try:
                cache[key] = _SegmentEda(trace, eda_cfg)
            except (DecompositionError, ValidationError):
                cache[key] = None
        return cache[key]
    return None


def _session_eda_block(seg_eda, t0, t1, eda_cfg):
    raw = seg_eda.decomp.slice(t0, t1)
    norm = seg_eda.norm.slice(t0, t1)
    peaks = detect_scr_peaks(norm.phasic, eda_cfg["scr_min_amplitude"])
    profile = arousal_profile(
        norm.phasic, peaks, sample_rate=raw.sample_rate,
        K=eda_cfg["arousal_levels"],
        window_seconds=eda_cfg["arousal_window_seconds"])
    feats = eda_session_features(
        raw, profile, scr_min_amplitude=eda_cfg["scr_min_amplitude"],
        normalization=eda_cfg["normalization"], normalized=norm)
    signals = {name: _to_1hz(arr, raw.sample_rate)
               for name, arr in (("eda", norm.mixed), ("tonic", norm.tonic),
                                 ("phasic", norm.phasic))}
    return feats, signals


def _session_hrv(bvp_trace, t0, t1, hrv_cfg):
    out = {f"hrv_{n}": None for n in
           ("bpm", "meani", "sdnn", "lf_power", "hf_power", "ratio_lf_hf",
            "rmssd", "sdsd", "pnn50", "pnn20")}
    if bvp_trace is None:
        return out
    window = bvp_trace.clip(t0, t1)
    if window is None or len(window) < 2 * window.sample_rate:
        return out
    try:
        beats = detect_beats(window,
                             window_seconds=hrv_cfg["beat_window_seconds"],
                             refractory_ms=hrv_cfg["refractory_ms"])
        ibi = ibi_from_beats(beats, rr_min_ms=hrv_cfg["rr_min_ms"],
                             rr_max_ms=hrv_cfg["rr_max_ms"])
        time_f = hrv_time_features(ibi)
    except (ValidationError, EmptySliceError):
        return out
    for name in ("bpm", "meani", "sdnn", "rmssd", "sdsd", "pnn50", "pnn20"):
        out[f"hrv_{name}"] = getattr(time_f, name)
    try:
        freq_f = hrv_freq_features(
            ibi, resample_hz=hrv_cfg["resample_hz"],
            welch_segment_seconds=hrv_cfg["welch_segment_seconds"],
            min_span_seconds=hrv_cfg["min_span_seconds"])
        for name in ("lf_power", "hf_power", "ratio_lf_hf"):
            out[f"hrv_{name}"] = getattr(freq_f, name)
    except ValidationError:
        pass
    return out


def _sync_features(own, other, prefix_map, band_fraction):
    out = {}
    for key, (pcc_name, dtw_name) in prefix_map.items():
        a = own.get(key)
        b = other.get(key) if other else None
        if a is None or b is None or a.shape[0] != b.shape[0] or a.shape[0] < 3:
            out[pcc_name] = None
            out[dtw_name] = None
            continue
        out[pcc_name] = pearson_sync(a, b)
        out[dtw_name] = dtw_distance(a, b, band="sakoe_chiba",
                                     band_fraction=band_fraction)
    return out


def stage_features(data_dir, schedule_path, surveys_path, env_path, config,
                   out_path, boundaries_path=None):
    """Extract the full per-session feature table.

    Emits one row per session that both passed the quality gate and has
    a survey response; missing feature cells stay empty.
    """
    classes, surveys = load_schedule_and_surveys(schedule_path, surveys_path)
    boundaries = read_boundaries(boundaries_path) if boundaries_path else None
    env_by_room = {}
    if env_path:
        for trace in load_env_csv(env_path):
            env_by_room[trace.room_id] = trace
    survey_by_key = {(s.participant_id, s.class_id): s for s in surveys}
    gate_cfg = config["gate"]
    eda_cfg = config["eda"]
    hrv_cfg = config["hrv"]
    sync_cfg = config["sync"]
    teacher_ids = sorted({info.teacher for info in classes if info.teacher})

    eda_prefixes = {
        "eda": ("eda_pcct", "eda_dtwt"), "tonic": ("tonic_pcct", "tonic_dtwt"),
        "phasic": ("phasic_pcct", "phasic_dtwt")}
    eda_prefixes_peer = {
        "eda": ("eda_pccs", "eda_dtws"), "tonic": ("tonic_pccs", "tonic_dtws"),
        "phasic": ("phasic_pccs", "phasic_dtws")}

    records = []
    n_sessions = 0
    n_accepted = 0
    for date, day_classes in sorted(_classes_by_date(classes).items()):
        pids = sorted({pid for info in day_classes for pid in info.enrolled})
        days = {pid: _load_day(data_dir, pid, "student", date, config)
                for pid in pids}
        teacher_days = {tid: _load_day(data_dir, tid, "teacher", date, config)
                        for tid in teacher_ids}
        decomp_cache = {}
        acc_cache = {}
        st_cache = {}

        def _acc_mag(day, pid, t0, t1):
            if day is None:
                return None
            for seg_idx, segment in enumerate(day.segments):
                ax = [segment.get(c) for c in ("ACC_X", "ACC_Y", "ACC_Z")]
                if any(t is None for t in ax):
                    continue
                if ax[0].start_time > t0 + 1e-6 or ax[0].end_time < t1 - 1e-6:
                    continue
                key = (pid, seg_idx)
                if key not in acc_cache:
                    acc_cache[key] = acc_magnitude(
                        *ax, median_seconds=config["filters"]["acc_median_seconds"])
                return acc_cache[key]
            return None

        def _st_trace(day, pid, t0, t1):
            if day is None:
                return None
            for seg_idx, segment in enumerate(day.segments):
                trace = segment.get("ST")
                if (trace is None or trace.start_time > t0 + 1e-6
                        or trace.end_time < t1 - 1e-6):
                    continue
                key = (pid, seg_idx)
                if key not in st_cache:
                    st_cache[key] = median_filter(
                        trace, config["filters"]["st_median_seconds"])
                return st_cache[key]
            return None

        for info in day_classes:
            t0, t1 = _class_window(info, boundaries)
            env_trace = env_by_room.get(info.room_id)

            sessions = {}
            sync_signals = {}
            acc_signals = {}
            for pid in info.enrolled:
                n_sessions += 1
                day = days.get(pid)
                eda_trace = _covering_trace(day, "EDA", t0, t1)
                if eda_trace is None:
                    continue
                window_trace = eda_trace.clip(t0, t1)
                report = eda_quality_gate(
                    window_trace,
                    flat_level_us=gate_cfg["flat_level_us"],
                    flat_run_seconds=gate_cfg["flat_run_seconds"],
                    theta_flat=gate_cfg["theta_flat"],
                    drop_us=gate_cfg["drop_us"],
                    theta_drop=gate_cfg["theta_drop"],
                    quant_window_seconds=gate_cfg["quant_window_seconds"],
                    quant_min_distinct=gate_cfg["quant_min_distinct"])
                if not report.accepted:
                    continue
                seg_eda = _decompose_covering(day, t0, t1, eda_cfg, decomp_cache)
                if seg_eda is None:
                    continue
                try:
                    feats, signals = _session_eda_block(seg_eda, t0, t1, eda_cfg)
                except ValidationError:
                    # window too short for the arousal profile
                    continue
                n_accepted += 1
                acc_mag = _acc_mag(day, pid, t0, t1)
                feats.update(_session_hrv(_covering_trace(day, "BVP", t0, t1),
                                          t0, t1, hrv_cfg))
                feats.update(context_features(
                    env_trace, _st_trace(day, pid, t0, t1), acc_mag, t0, t1))
                sessions[pid] = feats
                sync_signals[pid] = signals
                if acc_mag is not None:
                    win = acc_mag.clip(t0, t1)
                    acc_signals[pid] = (_to_1hz(win.values, win.sample_rate)
                                        if win is not None else None)

            teacher_sync = None
            teacher_acc = None
            if info.teacher:
                t_day = teacher_days.get(info.teacher)
                t_eda = _decompose_covering(t_day, t0, t1, eda_cfg, decomp_cache)
                if t_eda is not None:
                    try:
                        _t_feats, teacher_sync = _session_eda_block(
                            t_eda, t0, t1, eda_cfg)
                    except ValidationError:
                        teacher_sync = None
                t_mag = _acc_mag(t_day, info.teacher, t0, t1)
                if t_mag is not None:
                    win = t_mag.clip(t0, t1)
                    teacher_acc = (_to_1hz(win.values, win.sample_rate)
                                   if win is not None else None)

            for pid in sorted(sessions):
                survey = survey_by_key.get((pid, info.class_id))
                if survey is None:
                    continue
                feats = sessions[pid]
                own = sync_signals[pid]
                feats.update(_sync_features(own, teacher_sync, eda_prefixes,
                                            sync_cfg["band_fraction"]))
                peers = {k: v for k, v in sync_signals.items() if k != pid}
                peer_sig = {key: peer_average({k: v[key] for k, v in peers.items()}, None)
                            if peers else None for key in ("eda", "tonic", "phasic")}
                feats.update(_sync_features(own, peer_sig, eda_prefixes_peer,
                                            sync_cfg["band_fraction"]))

                own_acc = acc_signals.get(pid)
                feats["acc_pcc_t"] = feats["acc_dtw_t"] = None
                feats["acc_pcc_s"] = feats["acc_dtw_s"] = None
                if own_acc is not None and teacher_acc is not None \
                        and own_acc.shape == teacher_acc.shape:
                    feats["acc_pcc_t"] = pearson_sync(own_acc, teacher_acc)
                    feats["acc_dtw_t"] = dtw_distance(
                        own_acc, teacher_acc, band="sakoe_chiba",
                        band_fraction=sync_cfg["band_fraction"])
                peer_acc_pool = {k: v for k, v in acc_signals.items()
                                 if k != pid and v is not None}
                if own_acc is not None and peer_acc_pool:
                    peer_acc = peer_average(peer_acc_pool, None)
                    if peer_acc.shape == own_acc.shape:
                        feats["acc_pcc_s"] = pearson_sync(own_acc, peer_acc)
                        feats["acc_dtw_s"] = dtw_distance(
                            own_acc, peer_acc, band="sakoe_chiba",
                            band_fraction=sync_cfg["band_fraction"])

                records.append(SessionRecord(
                    participant_id=pid, class_id=info.class_id,
                    subject=info.subject, features=feats,
                    scores=engagement_scores(survey)))

    records.sort(key=lambda r: (r.participant_id, r.class_id))
    names = all_feature_names(eda_cfg["arousal_levels"])
    header = ["participant_id", "class_id", "subject"] + names + list(TARGETS)
    rows = []
    for rec in records:
        row = [rec.participant_id, rec.class_id, rec.subject]
        row += [rec.features.get(name) for name in names]
        row += [getattr(rec.scores, t) for t in TARGETS]
        rows.append(row)
    _write_rows(out_path, header, rows)
    return {"n_sessions": n_sessions, "n_accepted": n_accepted,
            "n_rows": len(records)}


def read_features_csv(path, arousal_levels=4):
    """Parse a features table back into SessionRecords."""
    names = all_feature_names(arousal_levels)
    expected = ["participant_id", "class_id", "subject"] + names + list(TARGETS)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    records = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ValidationError(
                f"{path}: header does not match the feature registry")
        for row in reader:
            if not row:
                continue
            feats = {}
            for name, cell in zip(names, row[3:3 + len(names)]):
                feats[name] = float(cell) if cell != "" else None
            scores = [float(c) for c in row[3 + len(names):]]
            records.append(SessionRecord(
                participant_id=row[0], class_id=row[1], subject=row[2],
                features=feats, scores=EngagementScores(*scores)))
    if not records:
        raise ValidationError(f"{path} holds no feature rows")
    return records


def stage_train(features_path, target, config, out_path, params=None):
    if target not in TARGETS:
        raise ValidationError(
            f"invalid target {target!r}; valid targets are "
            f"{{behavioural, emotional, cognitive, overall}}")
    records = read_features_csv(features_path, config["eda"]["arousal_levels"])
    dataset = assemble_dataset(records,
                               arousal_levels=config["eda"]["arousal_levels"])
    params = params or GbmParams(min_samples_leaf=config["model"]["min_samples_leaf"])
    model = fit_gbm(dataset.X, dataset.targets[target], params,
                    dataset.feature_names)
    save_model(model, out_path)
    return {"n_rows": len(dataset), "n_trees": len(model.trees)}


def read_regimes(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: expected a JSON list of regimes")
    regimes = []
    for item in raw:
        families = tuple(item.get("families", ("EDA", "HRV", "ACC", "ST", "ENV")))
        subject = item.get("subject")
        target = item.get("target", "overall")
        if target not in TARGETS:
            raise ValidationError(f"{path}: invalid regime target {target!r}")
        regimes.append((families, subject, target))
    return regimes


def stage_eval(features_path, targets, config, seed, out_path,
               regimes_path=None):
    """Nested CV per requested dimension plus the optional regime sweep."""
    records = read_features_csv(features_path, config["eda"]["arousal_levels"])
    dataset = assemble_dataset(records,
                               arousal_levels=config["eda"]["arousal_levels"])
    grid = config["grid"]
    cv_cfg = config["cv"]
    payload = {
        "seed": seed,
        "grid": {k: list(v) for k, v in sorted(grid.items())},
        "n_rows": len(dataset),
        "n_features": len(dataset.feature_names),
        "targets": {},
        "regimes": [],
        "notices": [],
        "metadata": {
            "outer_k": cv_cfg["outer_k"],
            "inner_l": cv_cfg["inner_l"],
            "inner_cells_per_outer_fold": (
                len(grid["num_leaves"]) * len(grid["learning_rate"])
                * len(grid["n_rounds"]) * cv_cfg["inner_l"]),
            "top_k_features": config["model"]["top_k_features"],
            "selection": "tune on inner MAE, then keep the top features "
                         "of the outer-train fit, then retrain",
        },
    }
    for target in targets:
        report = nested_cv(
            dataset, target, grid=grid, k=cv_cfg["outer_k"],
            inner_l=cv_cfg["inner_l"], seed=seed,
            min_samples_leaf=config["model"]["min_samples_leaf"],
            top_k=config["model"]["top_k_features"])
        payload["targets"][target] = report.to_dict()
    if regimes_path:
        regimes = read_regimes(regimes_path)
        results = regime_sweep(
            dataset, regimes, grid=grid, k=cv_cfg["outer_k"],
            inner_l=cv_cfg["inner_l"], seed=seed,
            min_samples_leaf=config["model"]["min_samples_leaf"],
            top_k=config["model"]["top_k_features"],
            min_subject_sessions=cv_cfg["min_subject_sessions"])
        for item in results:
            entry = {"regime": item["regime"], "skipped": item["skipped"]}
            if item["skipped"]:
                entry["reason"] = item["reason"]
                payload["notices"].append(
                    f"regime {item['regime']} skipped: {item['reason']}")
            else:
                entry["report"] = item["report"].to_dict()
            payload["regimes"].append(entry)
    emit_report(payload, out_path)
    return payload


def emit_report(payload, report_path):
    """Write report.json and its plot-ready CSV companions."""
    out_dir = os.path.dirname(os.path.abspath(report_path))
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {report_path}: {exc}") from exc

    table6 = []
    for target in TARGETS:
        entry = payload["targets"].get(target)
        if entry is None:
            continue
        for predictor in ("model", "linear", "average", "random"):
            metrics = entry["metrics"].get(predictor)
            if metrics:
                table6.append((target, predictor, metrics["mae"], metrics["rmse"]))
    _write_rows(os.path.join(out_dir, "table6.csv"),
                ["dimension", "predictor", "mae", "rmse"], table6)

    table7 = []
    for entry in payload.get("regimes", []):
        regime = entry["regime"]
        families = "+".join(regime["families"])
        if entry["skipped"]:
            table7.append((families, regime["subject"], regime["target"],
                           True, None, None, None, entry["reason"]))
        else:
            rep = entry["report"]
            table7.append((families, regime["subject"], regime["target"],
                           False, rep["n_rows"],
                           rep["metrics"]["model"]["mae"],
                           rep["metrics"]["model"]["rmse"], ""))
    header7 = ["families", "subject", "target", "skipped", "n_rows",
               "mae", "rmse", "reason"]
    _write_rows(os.path.join(out_dir, "table7.csv"), header7, table7)
    # the regime table is also published under its descriptive name
    _write_rows(os.path.join(out_dir, "regime_table.csv"), header7, table7)

    per_rows = []
    for target in TARGETS:
        entry = payload["targets"].get(target)
        if entry is None:
            continue
        for row in entry["rows"]:
            per_rows.append((row["participant_id"], row["class_id"], target,
                             row["y"], row["pred"],
                             abs(row["pred"] - row["y"])))
    _write_rows(os.path.join(out_dir, "per_participant_errors.csv"),
                ["participant_id", "class_id", "dimension", "y", "pred",
                 "abs_error"], per_rows)


def reemit_report(report_path, out_dir):
    """Regenerate the CSV companions from an existing report.json."""
    try:
        with open(report_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read {report_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{report_path}: invalid JSON: {exc}") from exc
    os.makedirs(out_dir, exist_ok=True)
    emit_report(payload, os.path.join(out_dir, os.path.basename(report_path)))


def resolve_session(session_id, classes):
    """'<participant>:<class_id>' -> (participant_id, ClassInfo)."""
    if ":" not in session_id:
        raise ValidationError(
            f"session id must look like participant:class, got {session_id!r}")
    pid, class_id = session_id.split(":", 1)
    for info in classes:
        if info.class_id == class_id:
            if pid not in info.enrolled and pid != info.teacher:
                raise ValidationError(
                    f"participant {pid!r} is not part of class {class_id!r}")
            return pid, info
    raise ValidationError(f"unknown class_id {class_id!r}")


def stage_eda_session(data_dir, schedule_path, surveys_path, session_id,
                      config, out_path, boundaries_path=None):
    """Decompose one session window and dump the component series."""
    classes, _surveys = load_schedule_and_surveys(schedule_path, surveys_path)
    boundaries = read_boundaries(boundaries_path) if boundaries_path else None
    pid, info = resolve_session(session_id, classes)
    role = "teacher" if pid == info.teacher else "student"
    day = _load_day(data_dir, pid, role, info.date, config)
    if day is None:
        raise DataIOError(f"no recordings for {pid} on {info.date.isoformat()}")
    t0, t1 = _class_window(info, boundaries)
    cache = {}
    seg_eda = _decompose_covering(day, t0, t1, config["eda"], cache)
    if seg_eda is None:
        raise ValidationError(f"no decomposable EDA covering {session_id}")
    window = seg_eda.decomp.slice(t0, t1)
    times = window.start_time + np.arange(len(window.mixed)) / window.sample_rate
    rows = zip(times, window.mixed, window.tonic, window.phasic,
               window.driver, window.residual)
    _write_rows(out_path, ["t", "mixed", "tonic", "phasic", "driver",
                           "residual"],
                [[float(v) for v in row] for row in rows])
    return {"n_samples": len(window.mixed)}


def stage_hrv_session(data_dir, schedule_path, surveys_path, session_id,
                      config, out_path, boundaries_path=None):
    """One row of the ten pulse-variability features for a session."""
    classes, _surveys = load_schedule_and_surveys(schedule_path, surveys_path)
    boundaries = read_boundaries(boundaries_path) if boundaries_path else None
    pid, info = resolve_session(session_id, classes)
    role = "teacher" if pid == info.teacher else "student"
    day = _load_day(data_dir, pid, role, info.date, config)
    if day is None:
        raise DataIOError(f"no recordings for {pid} on {info.date.isoformat()}")
    t0, t1 = _class_window(info, boundaries)
    feats = _session_hrv(_covering_trace(day, "BVP", t0, t1), t0, t1,
                         config["hrv"])
    header = list(feats)
    _write_rows(out_path, header, [[feats[k] for k in header]])
    return feats
