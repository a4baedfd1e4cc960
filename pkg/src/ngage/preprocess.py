"""Median filtering, ACC magnitude, and the EDA quality gate that decides
which class sessions survive cleaning.
"""

from dataclasses import dataclass

import numpy as np

from .core import SensorTrace
from .errors import ValidationError


@dataclass(frozen=True)
class QualityReport:
    flat_fraction: float
    n_abrupt_drops: int
    quantization_flag: bool
    accepted: bool
    reasons: tuple


def median_filter(trace, window_seconds):
    """Centered sliding median; edge windows shrink instead of padding.

    The window in samples is round(window_seconds * rate), bumped to the
    next odd count when even.
    """
    if window_seconds <= 0:
        raise ValidationError("window_seconds must be > 0")
    x = trace.values
    n = x.shape[0]
    if n == 0:
        raise ValidationError("empty trace")
    w = int(round(window_seconds * trace.sample_rate))
    if w % 2 == 0:
        w += 1
    if w <= 1 or n == 1:
        return trace
    half = w // 2
    out = np.empty(n)
    if n >= w:
        windows = np.lib.stride_tricks.sliding_window_view(x, w)
        out[half:n - half] = np.median(windows, axis=1)
        edge = half
    else:
        edge = n  # every window is edge-truncated
    for i in list(range(min(edge, n))) + list(range(max(n - edge, 0), n)):
        win = x[max(0, i - half):i + half + 1]
        # lower median keeps even-sized shrunk windows on input values
        out[i] = np.partition(win, (win.size - 1) // 2)[(win.size - 1) // 2]
    return SensorTrace(trace.channel, trace.start_time, trace.sample_rate, out)


def acc_magnitude(x, y, z, median_seconds=0.2):
    """Euclidean norm of the three axes followed by a short median filter."""
    if not (len(x) == len(y) == len(z)):
        raise ValidationError("accelerometer axes differ in length")
    if not (x.sample_rate == y.sample_rate == z.sample_rate):
        raise ValidationError("accelerometer axes differ in rate")
    mag = np.sqrt(x.values ** 2 + y.values ** 2 + z.values ** 2)
    trace = SensorTrace("ACC_MAG", x.start_time, x.sample_rate, mag)
    return median_filter(trace, median_seconds)


def _run_lengths(mask):
    """(start, length) pairs of True runs in a boolean vector."""
    if not mask.any():
        return []
    padded = np.r_[False, mask, False].astype(np.int8)
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return list(zip(starts, ends - starts))


def eda_quality_gate(eda, *, flat_level_us=0.01, flat_run_seconds=10.0,
                     theta_flat=0.2, drop_us=0.5, theta_drop=10,
                     quant_window_seconds=60.0, quant_min_distinct=3):
    """Score one class-window EDA trace against the three noise classes.

    flat_fraction counts samples inside runs of at least flat_run_seconds
    that sit below flat_level_us or have zero variance; n_abrupt_drops
    counts consecutive-sample decreases larger than drop_us; the
    quantization flag trips when the median distinct-value count over
    quant_window_seconds windows falls below quant_min_distinct.
    """
    x = eda.values
    n = x.shape[0]
    rate = eda.sample_rate
    if n == 0:
        return QualityReport(1.0, 0, True, False,
                             ("flat_fraction 1.00 > limit", "quantization"))

    min_run = max(1, int(round(flat_run_seconds * rate)))
    low = x < flat_level_us
    flat_samples = np.zeros(n, dtype=bool)
    for start, length in _run_lengths(low):
        if length >= min_run:
            flat_samples[start:start + length] = True
    # zero-variance runs: k equal consecutive diffs mean k+1 equal samples
    for start, length in _run_lengths(x[1:] == x[:-1]):
        if length + 1 >= min_run:
            flat_samples[start:start + length + 1] = True
    flat_fraction = float(flat_samples.mean())

    drops = int(np.count_nonzero(np.diff(x) < -drop_us))

    win = max(1, int(round(quant_window_seconds * rate)))
    counts = [np.unique(x[i:i + win]).size for i in range(0, n, win)]
    quantization = bool(np.median(counts) < quant_min_distinct)

    reasons = []
    if flat_fraction > theta_flat:
        reasons.append(f"flat_fraction {flat_fraction:.2f} > {theta_flat}")
    if drops > theta_drop:
        reasons.append(f"abrupt_drops {drops} > {theta_drop}")
    if quantization:
        reasons.append("quantization")
    accepted = not reasons
    return QualityReport(flat_fraction, drops, quantization, accepted, tuple(reasons))
