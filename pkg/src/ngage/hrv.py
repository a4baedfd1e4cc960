"""Systolic-peak detection on blood volume pulse, inter-beat interval
construction with gap interpolation, and the time/frequency HRV features.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import ValidationError


@dataclass(frozen=True)
class IbiSeries:
    beat_times: np.ndarray  # UTC seconds of retained beats
    intervals: np.ndarray  # RR intervals in ms, cleaned
    flags: tuple  # per-interval: "detected" | "interpolated"

    def __post_init__(self):
        if self.intervals.shape[0] != len(self.flags):
            raise ValidationError("one flag per interval required")

    def interval_times(self):
        """Timestamp of each interval: the beat ending it."""
        return self.beat_times[1:]

    @property
    def span_seconds(self):
        return float(self.beat_times[-1] - self.beat_times[0])


@dataclass(frozen=True)
class HrvFeatures:
    bpm: float = None
    meani: float = None
    sdnn: float = None
    rmssd: float = None
    sdsd: float = None
    pnn50: float = None
    pnn20: float = None
    lf_power: float = None
    hf_power: float = None
    ratio_lf_hf: float = None

    def merge(self, other):
        merged = {k: v for k, v in vars(self).items() if v is not None}
        merged.update({k: v for k, v in vars(other).items() if v is not None})
        return HrvFeatures(**merged)


def _rolling_mean(x, w):
    """Centered moving average with shrinking edge windows."""
    kernel = np.ones(w)
    sums = np.convolve(x, kernel, mode="same")
    counts = np.convolve(np.ones_like(x), kernel, mode="same")
    return sums / counts


def detect_beats(bvp, *, window_seconds=0.75, refractory_ms=250.0):
    """Detect systolic peaks on a 64 Hz pulse trace.

    Candidates are strict local maxima above the centered rolling mean
    over window_seconds; a flat crest (equal samples from quantization)
    counts once at its first sample. The refractory rule keeps the larger
    of any two candidates closer than refractory_ms (ties keep the
    earlier one).
    """
    fs = bvp.sample_rate
    x = np.asarray(bvp.values, dtype=np.float64)
    if x.shape[0] < 2 * fs:
        raise ValidationError("need at least 2 s of pulse signal")
    w = max(1, int(round(window_seconds * fs)))
    threshold = _rolling_mean(x, w)
    d = np.sign(np.diff(x))
    # next nonzero slope at or after each position, so a plateau's first
    # sample sees the slope on the plateau's far side
    pos = np.where(d != 0, np.arange(d.size), d.size)
    nxt = np.minimum.accumulate(pos[::-1])[::-1]
    ahead = np.where(nxt < d.size, d[np.minimum(nxt, d.size - 1)], 0.0)
    interior = (d[: x.shape[0] - 2] > 0) & (ahead[1:x.shape[0] - 1] < 0)
    candidates = np.flatnonzero(interior) + 1
    candidates = candidates[x[candidates] > threshold[candidates]]
    if candidates.size == 0:
        return np.array([])

    refractory = refractory_ms / 1000.0 * fs
    # larger amplitude wins; stable sort keeps earlier index on exact ties
    order = np.argsort(-x[candidates], kind="stable")
    kept = []
    for c in candidates[order]:
        if all(abs(c - k) >= refractory for k in kept):
            kept.append(int(c))
    kept.sort()
    return bvp.start_time + np.asarray(kept, dtype=np.float64) / fs


def ibi_from_beats(beat_times, *, rr_min_ms=250.0, rr_max_ms=2000.0):
    """Build a cleaned RR series from beat timestamps.

    Intervals outside [rr_min_ms, rr_max_ms] are replaced by linear
    interpolation over interval index between the nearest valid
    neighbours; leading/trailing invalid intervals are dropped together
    with their outer beats.
    """
    beat_times = np.asarray(beat_times, dtype=np.float64)
    if beat_times.shape[0] < 3:
        raise ValidationError("need at least 3 beats")
    rr = np.diff(beat_times) * 1000.0
    valid = (rr >= rr_min_ms) & (rr <= rr_max_ms)
    if valid.sum() < 2:
        raise ValidationError("fewer than 2 valid intervals")
    first, last = np.flatnonzero(valid)[[0, -1]]
    rr = rr[first:last + 1]
    valid = valid[first:last + 1]
    beats = beat_times[first:last + 2]
    idx = np.arange(rr.shape[0])
    cleaned = rr.copy()
    cleaned[~valid] = np.interp(idx[~valid], idx[valid], rr[valid])
    flags = tuple("detected" if v else "interpolated" for v in valid)
    return IbiSeries(beats, cleaned, flags)


def hrv_time_features(ibi):
    """Time-domain descriptors of a cleaned RR series."""
    rr = ibi.intervals
    if rr.shape[0] < 3:
        raise ValidationError("need at least 3 intervals")
    meani = float(np.mean(rr))
    d = np.diff(rr)
    return HrvFeatures(
        bpm=60000.0 / meani,
        meani=meani,
        sdnn=float(np.std(rr)),
        rmssd=float(np.sqrt(np.mean(d ** 2))),
        sdsd=float(np.std(d)),
        pnn50=100.0 * float(np.mean(np.abs(d) > 50.0)),
        pnn20=100.0 * float(np.mean(np.abs(d) > 20.0)),
    )


def hrv_freq_features(ibi, *, resample_hz=4.0, welch_segment_seconds=64.0,
                      min_span_seconds=120.0,
                      lf_band=(0.04, 0.15), hf_band=(0.15, 0.4)):
    """Spectral band powers of the RR series.

    The RR sequence is resampled onto an even grid by linear interpolation
    over beat times, mean-detrended, and passed through a segment-averaged
    periodogram (Hann taper, 50% overlap). Band powers integrate the
    density over [lo, hi); the LF/HF ratio is missing when HF vanishes.
    """
    if ibi.span_seconds < min_span_seconds:
        raise ValidationError(
            f"need {min_span_seconds:.0f} s of intervals, got {ibi.span_seconds:.1f} s")
    t = ibi.interval_times()
    grid = np.arange(t[0], t[-1], 1.0 / resample_hz)
    rr = np.interp(grid, t, ibi.intervals)
    rr = rr - rr.mean()
    nperseg = min(int(round(welch_segment_seconds * resample_hz)), rr.shape[0])
    freqs, psd = scipy.signal.welch(rr, fs=resample_hz, window="hann",
                                    nperseg=nperseg, noverlap=nperseg // 2,
                                    detrend=False)

    def band_power(lo, hi):
        mask = (freqs >= lo) & (freqs < hi)
        if mask.sum() < 2:
            return 0.0
        return float(np.trapezoid(psd[mask], freqs[mask]))

    lf = band_power(*lf_band)
    hf = band_power(*hf_band)
    ratio = lf / hf if hf >= 1e-12 else None
    return HrvFeatures(lf_power=lf, hf_power=hf, ratio_lf_hf=ratio)
