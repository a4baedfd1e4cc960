"""Seeded synthetic classroom cohort with known per-session engagement.

Latent (behavioural, emotional, cognitive) vectors drive the generated
channels through fixed couplings: emotional engagement raises the SCR
rate, cognitive engagement deepens respiratory sinus modulation of the
pulse, behavioural engagement suppresses in-class movement bursts, and
room CO2 accumulates with occupancy. Surveys are the latents mapped back
to Likert items with one-step noise, thinned to the target response
rate. Everything is a pure function of the configuration.
"""

import csv
import datetime
import math
import os
from dataclasses import dataclass

import numpy as np

from .config import DEFAULTS, local_seconds
from .core import ClassInfo, ParticipantDay, RecordingSegment, SensorTrace, write_e4_day
from .errors import DataIOError, ValidationError

_EPOCH = datetime.date(1970, 1, 1)


@dataclass(frozen=True)
class SynthConfig:
    n_students: int = 23
    n_teachers: int = 6
    days: int = 16
    classes_per_day: int = 5
    class_minutes: float = 6.0
    gap_minutes: float = 5.0
    first_class_local: str = "09:30"
    start_date: str = "2019-09-09"
    n_rooms: int = 3
    survey_rate: float = 0.353
    c_eda: float = 0.35
    c_hrv: float = 12.0
    c_acc: float = -0.35
    c_env: float = 2.0
    trait_std: float = 0.6
    class_latent_std: float = 0.35
    likert_noise_prob: float = 0.25
    scr_rate_per_min: float = 4.0
    acc_burst_rate_per_min: float = 3.0
    artifact_prob: float = 0.03
    noise_eda: float = 0.005
    noise_bvp: float = 0.01
    noise_acc: float = 0.02
    noise_st: float = 0.01
    seed: int = 7
    tz_offset_hours: float = 10.0

    def __post_init__(self):
        for field in ("n_students", "n_teachers", "days", "classes_per_day",
                      "n_rooms"):
            if getattr(self, field) < 1:
                raise ValidationError(f"{field} must be >= 1")
        if self.c_acc > 0:
            raise ValidationError("c_acc must be <= 0 (movement falls with engagement)")
        if not 0.0 < self.survey_rate <= 1.0:
            raise ValidationError("survey_rate must be in (0, 1]")

    @classmethod
    def from_config(cls, config):
        """Build from a full pipeline configuration dict."""
        synth = dict(config.get("synth", {}))
        synth.setdefault("seed", config.get("seed", DEFAULTS["seed"]))
        synth.setdefault("tz_offset_hours",
                         config.get("timezone_offset_hours",
                                    DEFAULTS["timezone_offset_hours"]))
        return cls(**synth)

    @property
    def students(self):
        return [f"s{i:02d}" for i in range(1, self.n_students + 1)]

    @property
    def teachers(self):
        return [f"t{i:02d}" for i in range(1, self.n_teachers + 1)]

    @property
    def rooms(self):
        return [f"r{i}" for i in range(1, self.n_rooms + 1)]


# relative class frequency; the last three stay below the per-subject
# session floor so the regime-skip path gets exercised
_SUBJECT_WEIGHTS = (
    ("Maths", 18), ("English", 18), ("Language", 14), ("Science", 14),
    ("Politics", 9), ("PE", 3), ("Health", 2), ("Chapel", 2))


def _subject_counts(n_classes):
    total_w = sum(w for _, w in _SUBJECT_WEIGHTS)
    raw = [(name, n_classes * w / total_w) for name, w in _SUBJECT_WEIGHTS]
    counts = {name: int(x) for name, x in raw}
    remainder = n_classes - sum(counts.values())
    for name, _x in sorted(raw, key=lambda kv: kv[1] - int(kv[1]), reverse=True):
        if remainder == 0:
            break
        counts[name] += 1
        remainder -= 1
    return counts


def _school_days(start_date, n):
    date = datetime.date.fromisoformat(start_date)
    out = []
    while len(out) < n:
        if date.weekday() < 5:
            out.append(date)
        date += datetime.timedelta(days=1)
    return out


def _day_start_utc(date, cfg):
    return (date - _EPOCH).days * 86400.0 - cfg.tz_offset_hours * 3600.0


def build_schedule(cfg):
    """All ClassInfo records in chronological order, actual times set."""
    rng = np.random.default_rng([cfg.seed, 0])
    dates = _school_days(cfg.start_date, cfg.days)
    n_classes = cfg.days * cfg.classes_per_day
    counts = _subject_counts(n_classes)
    pool = [name for name, _w in _SUBJECT_WEIGHTS for _ in range(counts[name])]
    pool = [pool[i] for i in rng.permutation(len(pool))]
    teacher_of = {name: cfg.teachers[i % cfg.n_teachers]
                  for i, (name, _w) in enumerate(_SUBJECT_WEIGHTS)}
    first = local_seconds(cfg.first_class_local)
    stride = (cfg.class_minutes + cfg.gap_minutes) * 60.0
    classes = []
    idx = 0
    for d, date in enumerate(dates):
        base = _day_start_utc(date, cfg)
        for j in range(cfg.classes_per_day):
            start = base + first + j * stride
            end = start + cfg.class_minutes * 60.0
            jitter = float(rng.uniform(-45.0, 45.0))
            classes.append(ClassInfo(
                class_id=f"c{idx:04d}",
                room_id=cfg.rooms[(d + j) % cfg.n_rooms],
                subject=pool[idx],
                date=date,
                scheduled_start=start,
                scheduled_end=end,
                enrolled=tuple(cfg.students),
                teacher=teacher_of[pool[idx]],
                actual_start=start + jitter,
                actual_end=end + jitter))
            idx += 1
    return classes


def draw_latents(cfg, classes):
    """Per-student traits and per-(student, class) latent vectors."""
    rng = np.random.default_rng([cfg.seed, 4])
    traits = {}
    for sid in cfg.students:
        traits[sid] = np.round(np.clip(rng.normal(3.4, cfg.trait_std, 3), 1.0, 5.0), 4)
    latents = {}
    for sid in cfg.students:
        for info in classes:
            vec = traits[sid] + rng.normal(0.0, cfg.class_latent_std, 3)
            latents[(sid, info.class_id)] = np.round(np.clip(vec, 1.0, 5.0), 4)
    return traits, latents


def _likert(value, rng, noise_prob):
    step = int(rng.choice([-1, 0, 1],
                          p=[noise_prob / 2, 1 - noise_prob, noise_prob / 2]))
    return int(np.clip(int(np.round(value)) + step, -2, 2))


def draw_surveys(cfg, classes, latents):
    """(pid, class_id, submitted_at, q1..q5, completion) rows, thinned."""
    rng = np.random.default_rng([cfg.seed, 2])
    rows = []
    for sid in cfg.students:
        for info in classes:
            responded = rng.random() < cfg.survey_rate
            if not responded:
                continue
            b, e, c = latents[(sid, info.class_id)]
            q1 = _likert(b - 3.0, rng, cfg.likert_noise_prob)
            q2 = _likert(3.0 - b, rng, cfg.likert_noise_prob)
            q3 = _likert(e - 3.0, rng, cfg.likert_noise_prob)
            q4 = _likert(3.0 - e, rng, cfg.likert_noise_prob)
            q5 = _likert(c - 3.0, rng, cfg.likert_noise_prob)
            submitted = round(info.scheduled_end + float(rng.uniform(10.0, 120.0)), 1)
            completion = round(float(rng.uniform(15.0, 90.0)), 1)
            rows.append((sid, info.class_id, submitted, q1, q2, q3, q4, q5, completion))
    return rows


def simulate_env(cfg, classes):
    """Minute-level room dynamics sampled every 5 minutes.

    CO2 relaxes toward outdoor baseline with a 15-minute constant and
    rises by c_env ppm per occupant-minute while a class is in the room.
    """
    rng = np.random.default_rng([cfg.seed, 3])
    by_day = {}
    for info in classes:
        by_day.setdefault(info.date, []).append(info)
    rows = []
    occupants = cfg.n_students + 1
    for date in sorted(by_day):
        day_classes = by_day[date]
        t_lo = min(c.scheduled_start for c in day_classes) - 1500.0
        t_hi = max(c.scheduled_end for c in day_classes) + 1500.0
        minutes = np.arange(t_lo, t_hi + 1.0, 60.0)
        for r, room in enumerate(cfg.rooms):
            occupied = np.zeros(minutes.shape[0], dtype=bool)
            for info in day_classes:
                if info.room_id == room:
                    occupied |= ((minutes >= info.scheduled_start)
                                 & (minutes < info.scheduled_end))
            co2 = 420.0 + float(rng.uniform(0.0, 15.0))
            decay = math.exp(-1.0 / 15.0)
            series = []
            for occ in occupied:
                co2 = 420.0 + (co2 - 420.0) * decay
                if occ:
                    co2 += cfg.c_env * occupants
                series.append(co2)
            series = np.asarray(series)
            hours = ((minutes + cfg.tz_offset_hours * 3600.0) % 86400.0) / 3600.0
            temp = (21.5 + 0.4 * r + 0.8 * np.sin((hours - 9.0) / 8.0 * math.pi)
                    + 0.2 * occupied + rng.normal(0.0, 0.05, minutes.shape[0]))
            humid = np.clip(47.0 + 0.6 * r
                            + np.cumsum(rng.normal(0.0, 0.05, minutes.shape[0])),
                            0.0, 100.0)
            sound = np.where(occupied,
                             54.0 + rng.normal(0.0, 2.0, minutes.shape[0]),
                             38.0 + rng.normal(0.0, 1.0, minutes.shape[0]))
            for k in range(0, minutes.shape[0], 5):
                rows.append((minutes[k], room, temp[k], humid[k], series[k], sound[k]))
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


def _per_second_profile(t0, n_sec, classes, latents_of, margin_behavior=3.0):
    """Per-second latent tracks and the in-class/walking masks.

    Behavior switches at the actual class times; outside any class the
    latents sit at neutral and the participant is walking.
    """
    sec = t0 + np.arange(n_sec, dtype=np.float64)
    in_class = np.zeros(n_sec, dtype=bool)
    lat = np.full((n_sec, 3), margin_behavior)
    for info, vec in latents_of:
        start = info.scheduled_start if info.actual_start is None else info.actual_start
        end = info.scheduled_end if info.actual_end is None else info.actual_end
        mask = (sec >= start) & (sec < end)
        in_class |= mask
        lat[mask] = vec
    return lat, in_class


def _bateman_kernel(rate_hz, tau0=2.0, tau1=0.7, length_s=12.0):
    t = np.arange(0.0, length_s, 1.0 / rate_hz)
    k = np.exp(-t / tau0) - np.exp(-t / tau1)
    return k / k.max()


def _gen_eda(rng, cfg, lat, in_class, n_sec, artifact_windows):
    rate_hz = 4.0
    n = int(n_sec * rate_hz)
    e_sec = lat[:, 1]
    tonic = (float(rng.uniform(1.2, 3.5))
             + np.cumsum(rng.normal(0.0, 0.0015, n))
             + 0.15 * np.sin(2.0 * math.pi * np.arange(n) / (rate_hz * 1800.0)
                             + float(rng.uniform(0.0, 2.0 * math.pi))))
    scr_rate = (cfg.scr_rate_per_min / 60.0) * (1.0 + cfg.c_eda * (e_sec - 3.0))
    scr_rate = np.maximum(scr_rate, 0.02)
    per_sample = np.repeat(scr_rate, int(rate_hz)) / rate_hz
    hits = rng.poisson(per_sample)
    amps = rng.lognormal(math.log(0.25), 0.45, n)
    impulses = hits * amps
    phasic = np.convolve(impulses, _bateman_kernel(rate_hz))[:n]
    eda = tonic + phasic + rng.normal(0.0, cfg.noise_eda, n)
    eda = np.maximum(eda, 0.02)
    for kind, sec_lo, sec_hi in artifact_windows:
        i0 = int(sec_lo * rate_hz)
        i1 = int(sec_hi * rate_hz)
        if kind == "flat":
            eda[i0:i1] = 0.005
        else:  # spike train of abrupt conductance drops
            drops = np.linspace(i0, i1 - 1, 16).astype(int)
            eda[drops] = np.maximum(eda[drops] - 0.8, 0.001)
    return np.round(eda, 6)


def _gen_bvp(rng, cfg, lat, n_sec):
    rate_hz = 64.0
    n = int(n_sec * rate_hz)
    c_sec = lat[:, 2]
    hf_amp = np.clip(20.0 + cfg.c_hrv * (c_sec - 3.0), 2.0, 60.0)
    base_rr = float(rng.uniform(750.0, 950.0))
    beat_rel = []
    t = float(rng.uniform(0.1, 0.6))
    jitter = rng.normal(0.0, 3.0, int(n_sec * 2.5) + 16)
    k = 0
    while t < n_sec - 0.5:
        beat_rel.append(t)
        rr_ms = (base_rr
                 + hf_amp[min(int(t), n_sec - 1)] * math.sin(2.0 * math.pi * 0.25 * t)
                 + 10.0 * math.sin(2.0 * math.pi * 0.10 * t)
                 + jitter[k % jitter.shape[0]])
        t += max(rr_ms, 300.0) / 1000.0
        k += 1
    beat_rel = np.asarray(beat_rel)
    # continuous waveform, crest exactly at each beat: cosine of a phase
    # that advances one cycle per interval, so there is no flat span for
    # baseline noise to fake peaks in
    tau = np.arange(n) / rate_hz
    seg = np.clip(np.searchsorted(beat_rel, tau, "right") - 1, 0,
                  max(beat_rel.shape[0] - 2, 0))
    rr_s = np.diff(beat_rel)[seg] if beat_rel.shape[0] > 1 else np.full(n, 0.85)
    phase = (tau - beat_rel[seg]) / rr_s
    amp = rng.uniform(0.9, 1.1, beat_rel.shape[0])
    sig = 50.0 * amp[seg] * np.cos(2.0 * math.pi * phase)
    sig += rng.normal(0.0, cfg.noise_bvp * 50.0, n)
    return np.round(sig - sig.mean(), 2)


def _gen_acc(rng, cfg, lat, in_class, classes_rel, n_sec):
    rate_hz = 32.0
    n = int(n_sec * rate_hz)
    axes = rng.normal(0.0, cfg.noise_acc, (3, n))
    axes[2] += 1.0  # gravity on z in g units
    tau = np.arange(n) / rate_hz

    walking = np.repeat(~in_class, int(rate_hz))
    step_f = float(rng.uniform(1.7, 2.1))
    gait = np.sin(2.0 * math.pi * step_f * tau + float(rng.uniform(0, 2 * math.pi)))
    for axis, amp in enumerate((0.40, 0.25, 0.35)):
        axes[axis] += walking * amp * (1.0 + 0.2 * gait ** 2) * gait

    b_of = {}
    for (rel_lo, rel_hi), vec in classes_rel:
        rate = cfg.acc_burst_rate_per_min * max(0.0, 1.0 + cfg.c_acc * (vec[0] - 3.0))
        n_bursts = rng.poisson(rate * (rel_hi - rel_lo) / 60.0)
        for _ in range(n_bursts):
            t_b = rng.uniform(rel_lo, rel_hi - 4.0)
            dur = float(rng.uniform(1.0, 3.5))
            i0 = int(t_b * rate_hz)
            i1 = min(int((t_b + dur) * rate_hz), n)
            seg = np.arange(i1 - i0)
            window = np.sin(math.pi * seg / max(seg.shape[0], 1)) ** 2
            f = float(rng.uniform(1.5, 4.0))
            for axis in range(3):
                amp = float(rng.uniform(0.2, 0.6))
                axes[axis, i0:i1] += amp * window * np.sin(
                    2.0 * math.pi * f * seg / rate_hz)
    axes = np.clip(axes, -2.0, 2.0)
    return [np.round(a, 2) for a in axes]


def _gen_st(rng, cfg, n_sec):
    rate_hz = 4.0
    n = int(n_sec * rate_hz)
    base = 33.0 + float(rng.uniform(-0.5, 0.8))
    slow = 0.3 * np.sin(2.0 * math.pi * np.arange(n) / (rate_hz * 3600.0)
                        + float(rng.uniform(0.0, 2.0 * math.pi)))
    return np.round(base + slow + rng.normal(0.0, cfg.noise_st, n), 2)


def _make_segment(rng, cfg, t0, t1, classes, latents_of, with_artifacts):
    n_sec = int(round(t1 - t0))
    lat, in_class = _per_second_profile(t0, n_sec, classes, latents_of)
    artifact_windows = []
    classes_rel = []
    for info, vec in latents_of:
        start = info.scheduled_start if info.actual_start is None else info.actual_start
        end = info.scheduled_end if info.actual_end is None else info.actual_end
        classes_rel.append(((start - t0, end - t0), vec))
        # artifacts anchor to the scheduled window (the one the quality
        # gate inspects) so an injected fault always trips it
        sched_lo = info.scheduled_start - t0
        sched_hi = info.scheduled_end - t0
        if with_artifacts and rng.random() < cfg.artifact_prob:
            if rng.random() < 0.5:
                artifact_windows.append(("flat", sched_lo + 30.0, sched_lo + 150.0))
            else:
                artifact_windows.append(("drops", sched_lo + 15.0, sched_hi - 15.0))
    eda = _gen_eda(rng, cfg, lat, in_class, n_sec, artifact_windows)
    bvp = _gen_bvp(rng, cfg, lat, n_sec)
    ax, ay, az = _gen_acc(rng, cfg, lat, in_class, classes_rel, n_sec)
    st = _gen_st(rng, cfg, n_sec)
    traces = {
        "EDA": SensorTrace("EDA", t0, 4.0, eda),
        "BVP": SensorTrace("BVP", t0, 64.0, bvp),
        "ST": SensorTrace("ST", t0, 4.0, st),
        "ACC_X": SensorTrace("ACC_X", t0, 32.0, ax),
        "ACC_Y": SensorTrace("ACC_Y", t0, 32.0, ay),
        "ACC_Z": SensorTrace("ACC_Z", t0, 32.0, az),
    }
    return RecordingSegment(t0, traces)


def simulate_participant_day(trait, day_classes, latents, cfg, seed,
                             role="student", participant_id=""):
    """One ParticipantDay: a single covering segment for students, one
    segment per taught class for teachers (latents pinned to neutral)."""
    rng = np.random.default_rng(seed)
    for vec in (latents or {}).values():
        if np.any(np.asarray(vec) < 1.0) or np.any(np.asarray(vec) > 5.0):
            raise ValidationError("latents must lie in [1, 5]")
    day_classes = sorted(day_classes, key=lambda c: c.scheduled_start)
    date = day_classes[0].date
    if role == "student":
        pairs = [(info, np.asarray(latents[info.class_id], dtype=np.float64))
                 for info in day_classes]
        t0 = day_classes[0].scheduled_start - 300.0
        t1 = day_classes[-1].scheduled_end + 300.0
        segment = _make_segment(rng, cfg, t0, t1, day_classes, pairs, True)
        segments = (segment,)
    else:
        neutral = np.array([3.0, 3.0, 3.0])
        segments = []
        for info in day_classes:
            t0 = info.scheduled_start - 120.0
            t1 = info.scheduled_end + 120.0
            segments.append(_make_segment(rng, cfg, t0, t1, [info],
                                          [(info, neutral)], False))
        segments = tuple(segments)
    return ParticipantDay(participant_id, role, date, segments)


def _write_csv(path, header, rows, formatters):
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for fmt, v in zip(formatters, row)])


def _num(x):
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def generate_cohort(config, out_dir):
    """Emit the full on-disk dataset and the latent truth file.

    Layout: schedule.csv, surveys.csv, env.csv, latents.csv and
    e4/<participant>/<date>/ trees in the wearable export format.
    """
    cfg = config if isinstance(config, SynthConfig) else SynthConfig.from_config(config)
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise DataIOError(f"output directory not writable: {out_dir}: {exc}") from exc

    classes = build_schedule(cfg)
    traits, latents = draw_latents(cfg, classes)
    survey_rows = draw_surveys(cfg, classes, latents)
    env_rows = simulate_env(cfg, classes)

    _write_csv(os.path.join(out_dir, "schedule.csv"),
               ["class_id", "room_id", "subject", "date", "scheduled_start",
                "scheduled_end", "teacher_id", "participant_ids"],
               [(c.class_id, c.room_id, c.subject, c.date.isoformat(),
                 c.scheduled_start, c.scheduled_end, c.teacher,
                 ";".join(c.enrolled)) for c in classes],
               [str, str, str, str, _num, _num, str, str])
    _write_csv(os.path.join(out_dir, "surveys.csv"),
               ["participant_id", "class_id", "submitted_at",
                "q1", "q2", "q3", "q4", "q5", "completion_seconds"],
               survey_rows,
               [str, str, _num, str, str, str, str, str, _num])
    _write_csv(os.path.join(out_dir, "env.csv"),
               ["timestamp", "room_id", "temp_c", "humidity_pct", "co2_ppm",
                "sound_db"],
               [(ts, room, f"{temp:.2f}", f"{hum:.1f}", f"{co2:.1f}",
                 f"{snd:.1f}") for ts, room, temp, hum, co2, snd in env_rows],
               [_num, str, str, str, str, str])
    latent_rows = [(sid, info.class_id, *latents[(sid, info.class_id)])
                   for sid in cfg.students for info in classes]
    latent_rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(os.path.join(out_dir, "latents.csv"),
               ["participant_id", "class_id", "behavioural", "emotional",
                "cognitive"],
               latent_rows, [str, str, _num, _num, _num])

    by_date = {}
    for info in classes:
        by_date.setdefault(info.date, []).append(info)
    e4_root = os.path.join(out_dir, "e4")
    for p_idx, sid in enumerate(cfg.students):
        for d_idx, date in enumerate(sorted(by_date)):
            lat_of_day = {info.class_id: latents[(sid, info.class_id)]
                          for info in by_date[date]}
            day = simulate_participant_day(
                traits[sid], by_date[date], lat_of_day, cfg,
                [cfg.seed, 1, p_idx, d_idx], role="student")
            write_e4_day(day, os.path.join(e4_root, sid, date.isoformat()))
    for t_idx, tid in enumerate(cfg.teachers):
        for d_idx, date in enumerate(sorted(by_date)):
            taught = [info for info in by_date[date] if info.teacher == tid]
            if not taught:
                continue
            day = simulate_participant_day(
                None, taught, None, cfg,
                [cfg.seed, 1, 100 + t_idx, d_idx], role="teacher")
            write_e4_day(day, os.path.join(e4_root, tid, date.isoformat()))

    return {
        "out_dir": out_dir,
        "n_classes": len(classes),
        "n_students": cfg.n_students,
        "n_teachers": cfg.n_teachers,
        "n_surveys": len(survey_rows),
        "n_latent_rows": len(latent_rows),
    }
