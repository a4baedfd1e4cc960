"""Information-gain temporal segmentation of activity series and the
derivation of actual class start/end times from scheduled ones.
"""

from dataclasses import dataclass

import numpy as np

from .core import slice_resample
from .errors import ValidationError

_EPS = 1e-9


@dataclass(frozen=True)
class SegmentationResult:
    boundaries: tuple  # ordered interior sample indices, 0 < b < T
    information_gain: float  # bits; >= 0 on activity-step inputs
    k: int


@dataclass(frozen=True)
class BoundaryEstimate:
    time_utc: float
    n_used: int
    fallback: bool  # True when no trace covered the window


def _entropy_from_sums(sums):
    """Shannon entropy (bits) of per-channel mass fractions.

    sums has shape (C,) or (C, m); all-zero columns yield 0 by the
    0*log0 = 0 convention.
    """
    sums = np.asarray(sums, dtype=np.float64)
    one = sums.ndim == 1
    if one:
        sums = sums[:, None]
    tot = sums.sum(axis=0)
    safe = np.where(tot > 0, tot, 1.0)
    p = sums / safe
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    h = terms.sum(axis=0)
    h[tot <= 0] = 0.0
    return float(h[0]) if one else h


def segment_entropy(X, a, b):
    """Entropy over channel mass fractions of X[:, a:b]."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if b <= a:
        raise ValidationError(f"need b > a, got a={a}, b={b}")
    if a < 0 or b > X.shape[1]:
        raise ValidationError("segment outside series")
    if np.any(X[:, a:b] < 0):
        raise ValidationError("negative values; shift channels first")
    return _entropy_from_sums(X[:, a:b].sum(axis=1))


def igts_topdown(X, k):
    """Greedy top-down segmentation into k boundaries.

    Channels are shifted by their minimum plus a small epsilon so mass
    fractions are well defined on arbitrary real input. Each step places
    the boundary maximizing the information gain
    IG = H(whole) - sum_i (len_i / T) * H(segment_i),
    ties broken by the smallest index.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n_ch, T = X.shape
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k >= T:
        raise ValidationError(f"k={k} needs at least {k + 1} samples, got {T}")
    X = X - X.min(axis=1, keepdims=True) + _EPS
    # cum[:, t] = per-channel mass of [0, t)
    cum = np.concatenate([np.zeros((n_ch, 1)), np.cumsum(X, axis=1)], axis=1)
    h_whole = _entropy_from_sums(cum[:, -1])

    boundaries = []
    gain = 0.0
    for _ in range(k):
        edges = [0] + boundaries + [T]
        # weighted entropy of segments that a candidate does not touch
        seg_h = np.array([_entropy_from_sums(cum[:, b] - cum[:, a])
                          for a, b in zip(edges, edges[1:])])
        seg_w = np.diff(edges) / T
        base = seg_h @ seg_w
        best_ig, best_t = None, None
        for (a, b), h_ab, w_ab in zip(zip(edges, edges[1:]), seg_h, seg_w):
            if b - a < 2:
                continue
            inner = cum[:, a + 1:b] - cum[:, [a]]  # masses of [a, t)
            h_left = _entropy_from_sums(inner)
            h_right = _entropy_from_sums(cum[:, [b]] - cum[:, a + 1:b])
            t = np.arange(a + 1, b)
            split = base - w_ab * h_ab + (t - a) / T * h_left + (b - t) / T * h_right
            ig = h_whole - split
            j = int(np.argmax(ig))  # first max = smallest index
            if best_ig is None or ig[j] > best_ig or (ig[j] == best_ig and t[j] < best_t):
                best_ig, best_t = float(ig[j]), int(t[j])
        if best_t is None:
            raise ValidationError("no segment admits another boundary")
        boundaries = sorted(boundaries + [best_t])
        gain = best_ig
    return SegmentationResult(tuple(boundaries), gain, k)


def class_boundary(acc_mags, scheduled_t, side, *, margin_seconds=300.0, rate_hz=1.0):
    """Estimate an actual class boundary from per-participant activity.

    Each covering trace is resampled to rate_hz over the window
    [scheduled_t - margin, scheduled_t + margin) and segmented with one
    boundary; the activity series is paired with its complement so that a
    shift in activity level moves mass between the two channels. The
    median estimate is returned (lower-middle element for even counts).
    """
    if side not in ("start", "end"):
        raise ValidationError(f"side must be start or end, got {side!r}")
    t0 = scheduled_t - margin_seconds
    t1 = scheduled_t + margin_seconds
    estimates = []
    for trace in acc_mags:
        if trace.start_time > t0 + 1e-6 or trace.end_time < t1 - 1e-6:
            continue
        window = slice_resample(trace, t0, t1, rate_hz, "mean")
        x = window.values
        X = np.vstack([x, x.max() - x])
        result = igts_topdown(X, 1)
        estimates.append(t0 + result.boundaries[0] / rate_hz)
    if not estimates:
        return BoundaryEstimate(float(scheduled_t), 0, True)
    estimates.sort()
    mid = estimates[(len(estimates) - 1) // 2]
    return BoundaryEstimate(float(mid), len(estimates), False)
