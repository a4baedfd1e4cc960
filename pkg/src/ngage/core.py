"""Data model and file ingestion for wearable, environment, schedule and
survey data, plus time alignment utilities.

Wearable recordings follow the per-channel CSV export convention of wrist
devices: line 1 is the UTC start time in seconds, line 2 the sample rate
in Hz, then one value per line (three comma-separated columns for ACC).
"""

import csv
import datetime
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import polars as pl

from .errors import (
    DataIOError,
    EmptySliceError,
    ParseError,
    ValidationError,
)

CHANNELS = ("EDA", "BVP", "ACC_X", "ACC_Y", "ACC_Z", "ACC_MAG", "ST")

# channel -> export file name; ACC.csv carries the three axes together
_E4_FILES = {"EDA": "EDA.csv", "BVP": "BVP.csv", "ST": "TEMP.csv"}
_ACC_FILE = "ACC.csv"


@dataclass(frozen=True)
class SensorTrace:
    """Uniformly sampled single-channel series anchored to UTC seconds.

    Sample i sits at start_time + i / sample_rate. Construction validates
    the rate and rejects NaN/Inf values; the array is frozen afterwards.
    """

    channel: str
    start_time: float
    sample_rate: float
    values: np.ndarray

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}")
        if not (self.sample_rate > 0):
            raise ValidationError(f"sample_rate must be > 0, got {self.sample_rate}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValidationError("trace values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"{self.channel} trace contains NaN/Inf")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]

    @property
    def end_time(self):
        """Exclusive end: timestamp one period past the last sample."""
        return self.start_time + len(self) / self.sample_rate

    def times(self):
        return self.start_time + np.arange(len(self)) / self.sample_rate

    def clip(self, t0, t1):
        """Samples with timestamps in [t0, t1), or None if none remain."""
        i0 = max(0, int(math.ceil((t0 - self.start_time) * self.sample_rate - 1e-9)))
        i1 = min(len(self), int(math.ceil((t1 - self.start_time) * self.sample_rate - 1e-9)))
        if i1 <= i0:
            return None
        return SensorTrace(self.channel, self.start_time + i0 / self.sample_rate,
                           self.sample_rate, self.values[i0:i1])


@dataclass(frozen=True)
class RecordingSegment:
    """One continuous power-on interval: traces share a start_time."""

    start_time: float
    traces: dict

    def __post_init__(self):
        for name, trace in self.traces.items():
            if trace.channel != name:
                raise ValidationError("segment trace keyed under wrong channel")

    @property
    def end_time(self):
        return max(t.end_time for t in self.traces.values())

    @property
    def duration(self):
        return self.end_time - self.start_time

    def get(self, channel):
        return self.traces.get(channel)


@dataclass(frozen=True)
class ParticipantDay:
    participant_id: str
    role: str  # student | teacher
    date: datetime.date
    segments: tuple

    def __post_init__(self):
        if self.role not in ("student", "teacher"):
            raise ValidationError(f"role must be student or teacher, got {self.role!r}")
        starts = [s.start_time for s in self.segments]
        if starts != sorted(starts):
            raise ValidationError("segments must be time-ordered")

    def channel_traces(self, channel):
        return [s.traces[channel] for s in self.segments if channel in s.traces]

    def covering_segment(self, t0, t1):
        """Segment whose span contains [t0, t1], or None."""
        for seg in self.segments:
            if seg.start_time <= t0 and seg.end_time >= t1:
                return seg
        return None


@dataclass(frozen=True)
class ClassInfo:
    class_id: str
    room_id: str
    subject: str
    date: datetime.date
    scheduled_start: float
    scheduled_end: float
    enrolled: tuple
    teacher: str | None = None
    actual_start: float | None = None
    actual_end: float | None = None

    SUBJECTS = ("Maths", "English", "Language", "Science", "Politics", "PE", "Health", "Chapel")

    def __post_init__(self):
        if self.subject not in self.SUBJECTS:
            raise ValidationError(f"unknown subject {self.subject!r}")
        if not self.scheduled_end > self.scheduled_start:
            raise ValidationError(f"class {self.class_id}: scheduled_end must exceed scheduled_start")
        for side, actual, sched in (("start", self.actual_start, self.scheduled_start),
                                    ("end", self.actual_end, self.scheduled_end)):
            if actual is not None and abs(actual - sched) > 300.0 + 1e-9:
                raise ValidationError(
                    f"class {self.class_id}: actual {side} deviates more than 300 s from schedule")

    def window(self):
        """Actual boundaries when known, otherwise the schedule."""
        start = self.scheduled_start if self.actual_start is None else self.actual_start
        end = self.scheduled_end if self.actual_end is None else self.actual_end
        return start, end


@dataclass(frozen=True)
class EnvTrace:
    """Indoor readings for one room: 5-minute nominal period."""

    room_id: str
    timestamps: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    co2: np.ndarray
    sound: np.ndarray

    def __post_init__(self):
        for name in ("timestamps", "temperature", "humidity", "co2", "sound"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValidationError(f"room {self.room_id}: timestamps not strictly increasing")
        if np.any(self.co2 < 0):
            raise ValidationError(f"room {self.room_id}: negative co2")
        if np.any((self.humidity < 0) | (self.humidity > 100)):
            raise ValidationError(f"room {self.room_id}: humidity outside [0, 100]")

    def in_window(self, t0, t1):
        """Row mask for samples with timestamp in [t0, t1)."""
        return (self.timestamps >= t0) & (self.timestamps < t1)


@dataclass(frozen=True)
class SurveyResponse:
    participant_id: str
    class_id: str
    submitted_at: float
    q1: int
    q2: int
    q3: int
    q4: int
    q5: int
    completion_seconds: float

    def __post_init__(self):
        for name in ("q1", "q2", "q3", "q4", "q5"):
            v = getattr(self, name)
            if not isinstance(v, int) or not -2 <= v <= 2:
                raise ValidationError(f"survey item {name}={v!r} outside {{-2..2}}")

    def items(self):
        return (self.q1, self.q2, self.q3, self.q4, self.q5)


def _read_e4_file(path, n_columns):
    """Parse one export file: two header lines then value rows."""
    try:
        with open(path, "rb") as fh:
            start_line = fh.readline().decode("ascii", "replace").strip()
            rate_line = fh.readline().decode("ascii", "replace").strip()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    try:
        start_time = float(start_line.split(",")[0])
    except ValueError:
        raise ParseError(path, 1, f"bad start time {start_line!r}")
    try:
        rate = float(rate_line.split(",")[0])
    except ValueError:
        raise ParseError(path, 2, f"bad sample rate {rate_line!r}")
    if rate <= 0:
        raise ParseError(path, 2, f"declared rate must be positive, got {rate}")
    try:
        df = pl.read_csv(path, has_header=False, skip_rows=2,
                         new_columns=[f"c{i}" for i in range(n_columns)],
                         schema_overrides={f"c{i}": pl.Float64 for i in range(n_columns)})
    except Exception as exc:  # polars raises its own ComputeError family
        raise ParseError(path, 3, f"bad value rows: {exc}") from exc
    if df.width != n_columns:
        raise ParseError(path, 3, f"expected {n_columns} columns, found {df.width}")
    values = df.to_numpy()
    if not np.all(np.isfinite(values)):
        raise ParseError(path, 3, "non-finite value in data rows")
    return start_time, rate, values


def _segment_from_dir(seg_dir):
    traces = {}
    for channel, fname in _E4_FILES.items():
        path = os.path.join(seg_dir, fname)
        if not os.path.exists(path):
            raise DataIOError(f"missing {fname} in {seg_dir}")
        start, rate, values = _read_e4_file(path, 1)
        traces[channel] = SensorTrace(channel, start, rate, values[:, 0])
    acc_path = os.path.join(seg_dir, _ACC_FILE)
    if not os.path.exists(acc_path):
        raise DataIOError(f"missing {_ACC_FILE} in {seg_dir}")
    start, rate, values = _read_e4_file(acc_path, 3)
    for i, channel in enumerate(("ACC_X", "ACC_Y", "ACC_Z")):
        traces[channel] = SensorTrace(channel, start, rate, values[:, i])
    seg_start = min(t.start_time for t in traces.values())
    return RecordingSegment(seg_start, traces)


def _clip_segment(segment, t0, t1):
    clipped = {}
    for name, trace in segment.traces.items():
        part = trace.clip(t0, t1)
        if part is not None:
            clipped[name] = part
    if not clipped:
        return None
    return RecordingSegment(min(t.start_time for t in clipped.values()), clipped)


def load_e4_day(directory_path, participant_id, role, *,
                tz_offset_hours=10.0,
                school_start="09:00", school_end="15:35",
                min_segment_seconds=15.0):
    """Load one participant-day of wearable recordings.

    The directory either holds the channel files directly (one segment) or
    one subdirectory per segment, read in sorted name order. Segments are
    clipped to the school window in local time and dropped when shorter
    than `min_segment_seconds`.
    """
    if not os.path.isdir(directory_path):
        raise DataIOError(f"not a directory: {directory_path}")
    seg_dirs = []
    if os.path.exists(os.path.join(directory_path, "EDA.csv")):
        seg_dirs.append(directory_path)
    else:
        for name in sorted(os.listdir(directory_path)):
            sub = os.path.join(directory_path, name)
            if os.path.isdir(sub) and os.path.exists(os.path.join(sub, "EDA.csv")):
                seg_dirs.append(sub)
    if not seg_dirs:
        raise DataIOError(f"no wearable export found under {directory_path}")

    from .config import local_seconds
    w0 = local_seconds(school_start)
    w1 = local_seconds(school_end)
    offset = tz_offset_hours * 3600.0

    segments = []
    day_date = None
    for seg_dir in seg_dirs:
        segment = _segment_from_dir(seg_dir)
        local_start = segment.start_time + offset
        day_origin = math.floor(local_start / 86400.0) * 86400.0
        clip0 = day_origin + w0 - offset
        clip1 = day_origin + w1 - offset
        if day_date is None:
            day_date = datetime.date(1970, 1, 1) + datetime.timedelta(
                days=int(day_origin // 86400))
        segment = _clip_segment(segment, clip0, clip1)
        if segment is None or segment.duration < min_segment_seconds:
            continue
        segments.append(segment)
    segments.sort(key=lambda s: s.start_time)
    return ParticipantDay(participant_id, role, day_date, tuple(segments))


def write_e4_day(day, directory_path):
    """Write a ParticipantDay back to the export layout.

    Single-segment days are written flat; multi-segment days get one
    zero-padded subdirectory per segment. Floats are written in shortest
    round-trip form so re-loading reproduces values bit-for-bit.
    """
    os.makedirs(directory_path, exist_ok=True)
    multi = len(day.segments) > 1
    for i, segment in enumerate(day.segments):
        seg_dir = os.path.join(directory_path, f"{i:02d}") if multi else directory_path
        os.makedirs(seg_dir, exist_ok=True)
        for channel, fname in _E4_FILES.items():
            trace = segment.get(channel)
            if trace is None:
                continue
            _write_channel(os.path.join(seg_dir, fname), trace.start_time,
                           trace.sample_rate, trace.values[:, None])
        ax = [segment.get(c) for c in ("ACC_X", "ACC_Y", "ACC_Z")]
        if all(t is not None for t in ax):
            _write_channel(os.path.join(seg_dir, _ACC_FILE), ax[0].start_time,
                           ax[0].sample_rate, np.column_stack([t.values for t in ax]))


def _format_header_number(x):
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def _write_channel(path, start_time, rate, columns):
    df = pl.DataFrame({f"c{i}": columns[:, i] for i in range(columns.shape[1])})
    with open(path, "wb") as fh:
        fh.write(f"{_format_header_number(start_time)}\n".encode())
        fh.write(f"{_format_header_number(rate)}\n".encode())
        df.write_csv(fh, include_header=False)


def load_env_csv(path):
    """Read indoor-environment rows into one EnvTrace per room."""
    rows_by_room = {}
    expected = ["timestamp", "room_id", "temp_c", "humidity_pct", "co2_ppm", "sound_db"]
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ParseError(path, 1, f"expected header {','.join(expected)}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ParseError(path, ln, f"expected 6 fields, got {len(row)}")
            try:
                ts = float(row[0])
                vals = [float(x) for x in row[2:]]
            except ValueError as exc:
                raise ParseError(path, ln, f"bad numeric field: {exc}") from exc
            rows_by_room.setdefault(row[1], []).append((ln, ts, *vals))
    traces = []
    for room_id in sorted(rows_by_room):
        rows = rows_by_room[room_id]
        ts = [r[1] for r in rows]
        for prev, cur in zip(rows, rows[1:]):
            if cur[1] <= prev[1]:
                raise ParseError(path, cur[0],
                                 f"room {room_id}: timestamp {cur[1]} not after {prev[1]}")
        traces.append(EnvTrace(room_id,
                               np.array(ts),
                               np.array([r[2] for r in rows]),
                               np.array([r[3] for r in rows]),
                               np.array([r[4] for r in rows]),
                               np.array([r[5] for r in rows])))
    return traces


def _parse_date(text, path, ln):
    try:
        return datetime.date.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(path, ln, f"bad date {text!r}") from exc


def load_schedule_and_surveys(schedule_path, survey_path=None):
    """Load and cross-validate the class schedule and survey responses.

    `survey_path=None` skips surveys (stages that only need the schedule).
    """
    classes = []
    seen_ids = set()
    expected = ["class_id", "room_id", "subject", "date", "scheduled_start",
                "scheduled_end", "teacher_id", "participant_ids"]
    try:
        fh = open(schedule_path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read {schedule_path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ParseError(schedule_path, 1, f"expected header {','.join(expected)}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise ParseError(schedule_path, ln, f"expected 8 fields, got {len(row)}")
            class_id, room_id, subject, date_s, t0_s, t1_s, teacher, pids = row
            if class_id in seen_ids:
                raise ParseError(schedule_path, ln, f"duplicate class_id {class_id!r}")
            seen_ids.add(class_id)
            try:
                t0, t1 = float(t0_s), float(t1_s)
            except ValueError as exc:
                raise ParseError(schedule_path, ln, f"bad time field: {exc}") from exc
            enrolled = tuple(p for p in pids.split(";") if p)
            try:
                classes.append(ClassInfo(class_id, room_id, subject,
                                         _parse_date(date_s, schedule_path, ln),
                                         t0, t1, enrolled, teacher or None))
            except ValidationError as exc:
                raise ParseError(schedule_path, ln, str(exc)) from exc

    surveys = []
    if survey_path is None:
        return classes, surveys
    seen_keys = set()
    expected = ["participant_id", "class_id", "submitted_at",
                "q1", "q2", "q3", "q4", "q5", "completion_seconds"]
    try:
        fh = open(survey_path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read {survey_path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ParseError(survey_path, 1, f"expected header {','.join(expected)}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                raise ParseError(survey_path, ln, f"expected 9 fields, got {len(row)}")
            pid, class_id = row[0], row[1]
            if class_id not in seen_ids:
                raise ParseError(survey_path, ln, f"unknown class_id {class_id!r}")
            if (pid, class_id) in seen_keys:
                raise ParseError(survey_path, ln, f"duplicate survey for {pid}:{class_id}")
            seen_keys.add((pid, class_id))
            try:
                items = []
                for q in row[3:8]:
                    qv = float(q)
                    if qv != int(qv):
                        raise ValueError(f"non-integer item {q!r}")
                    items.append(int(qv))
                submitted = float(row[2])
                completion = float(row[8])
            except ValueError as exc:
                raise ParseError(survey_path, ln, f"bad field: {exc}") from exc
            try:
                surveys.append(SurveyResponse(pid, class_id, submitted, *items, completion))
            except ValidationError as exc:
                raise ParseError(survey_path, ln, str(exc)) from exc
    return classes, surveys


def slice_resample(trace, t0, t1, out_rate, aggregator="mean", max_gap_seconds=5.0):
    """Aggregate a trace onto a uniform [t0, t1) grid at out_rate.

    Each output bin j covers [t0 + j/out_rate, t0 + (j+1)/out_rate) and
    takes the mean (or last) of the source samples inside it. Empty bins
    are filled by linear interpolation between neighbouring non-empty
    bins; bins before the first (after the last) covered bin hold the
    nearest value. Interior gaps longer than max_gap_seconds are refused.
    """
    if out_rate <= 0:
        raise ValidationError("out_rate must be > 0")
    if aggregator not in ("mean", "last"):
        raise ValidationError(f"unknown aggregator {aggregator!r}")
    if t1 <= t0:
        raise EmptySliceError(f"empty window [{t0}, {t1})")
    if trace.end_time <= t0 or trace.start_time >= t1:
        raise EmptySliceError(
            f"window [{t0}, {t1}) does not overlap trace "
            f"[{trace.start_time}, {trace.end_time})")

    n_out = int(round((t1 - t0) * out_rate))
    if n_out < 1:
        raise EmptySliceError("window shorter than one output period")
    times = trace.times()
    inside = (times >= t0) & (times < t1)
    src_t = times[inside]
    src_v = trace.values[inside]
    if src_t.size == 0:
        raise EmptySliceError("no source samples inside window")
    bins = np.floor((src_t - t0) * out_rate + 1e-9).astype(np.int64)
    bins = np.clip(bins, 0, n_out - 1)

    counts = np.bincount(bins, minlength=n_out)
    out = np.empty(n_out)
    filled = counts > 0
    if aggregator == "mean":
        sums = np.bincount(bins, weights=src_v, minlength=n_out)
        out[filled] = sums[filled] / counts[filled]
    else:
        # source samples are time-ordered, so the last write per bin wins
        out[filled] = 0.0
        out[bins] = src_v
    if not np.all(filled):
        idx = np.flatnonzero(filled)
        gaps = np.diff(idx) - 1
        if gaps.size and gaps.max() * (1.0 / out_rate) > max_gap_seconds:
            raise ValidationError(
                f"alignment gap of {gaps.max() / out_rate:.1f} s exceeds {max_gap_seconds} s")
        out = np.interp(np.arange(n_out), idx, out[idx])
    return SensorTrace(trace.channel, t0, out_rate, out)


def traces_equal(a, b):
    """Bit-for-bit trace equality (used by round-trip checks)."""
    return (a.channel == b.channel and a.start_time == b.start_time
            and a.sample_rate == b.sample_rate
            and a.values.shape == b.values.shape
            and np.array_equal(a.values, b.values))
