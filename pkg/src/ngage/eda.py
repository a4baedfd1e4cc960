"""Convex tonic/phasic decomposition of electrodermal activity,
normalization, SCR peak detection, and momentary-arousal profiling.

The decomposition solves

    minimize  0.5*||M q + B l + C d - y||^2 + alpha*1'A q + 0.5*gamma*||l||^2
    s.t.      A q >= 0

where M and A are tridiagonal ARMA matrices discretizing the biexponential
sudomotor response (time constants tau0, tau1) by the bilinear transform,
B is a cubic-spline basis with knots every delta_knot seconds and
C = [1, t/n] a linear drift. tonic = B l + C d, phasic = M q, driver = A q.
"""

import math
from dataclasses import dataclass, replace

import cvxopt
import cvxopt.solvers
import numpy as np

from .errors import DecompositionError, ValidationError


@dataclass(frozen=True)
class EdaDecomposition:
    sample_rate: float
    start_time: float
    mixed: np.ndarray
    tonic: np.ndarray
    phasic: np.ndarray
    driver: np.ndarray
    residual: np.ndarray

    def __post_init__(self):
        n = self.mixed.shape[0]
        for name in ("tonic", "phasic", "driver", "residual"):
            if getattr(self, name).shape[0] != n:
                raise ValidationError("decomposition series differ in length")

    def __len__(self):
        return self.mixed.shape[0]

    def slice(self, t0, t1):
        """Sub-decomposition over samples with timestamps in [t0, t1)."""
        i0 = max(0, int(math.ceil((t0 - self.start_time) * self.sample_rate - 1e-9)))
        i1 = min(len(self), int(math.ceil((t1 - self.start_time) * self.sample_rate - 1e-9)))
        if i1 <= i0:
            raise ValidationError(f"empty decomposition slice [{t0}, {t1})")
        return EdaDecomposition(self.sample_rate,
                                self.start_time + i0 / self.sample_rate,
                                self.mixed[i0:i1], self.tonic[i0:i1],
                                self.phasic[i0:i1], self.driver[i0:i1],
                                self.residual[i0:i1])


def _bateman_arma(fs, tau0, tau1):
    """AR/MA coefficients of the bilinear-transform discretization."""
    dt = 1.0 / fs
    a1 = 1.0 / min(tau1, tau0)
    a0 = 1.0 / max(tau1, tau0)
    ar = np.array([(a1 * dt + 2.0) * (a0 * dt + 2.0),
                   2.0 * a1 * a0 * dt ** 2 - 8.0,
                   (a1 * dt - 2.0) * (a0 * dt - 2.0)]) / ((a1 - a0) * dt ** 2)
    ma = np.array([1.0, 2.0, 1.0])
    return ar, ma


def _band_matrix(coeffs, n):
    """Sparse (n, n) matrix with coeffs on bands 0, -1, -2, rows 2..n-1."""
    i = np.arange(2, n)
    rows = np.repeat(i, 3)
    cols = np.column_stack((i, i - 1, i - 2)).ravel()
    vals = np.tile(coeffs, n - 2)
    return cvxopt.spmatrix(vals, rows, cols, (n, n))


def _spline_basis(n, knot_samples):
    """Cubic-spline-like basis: triangle self-convolution at each knot."""
    tri = np.r_[np.arange(1.0, knot_samples + 1), np.arange(knot_samples - 1.0, 0.0, -1.0)]
    spl = np.convolve(tri, tri, "full")
    spl /= spl.max()
    knots = np.arange(0, n, knot_samples)
    i = np.arange(-(len(spl) // 2), (len(spl) + 1) // 2)[:, None] + knots[None, :]
    n_b = knots.size
    j = np.tile(np.arange(n_b), (len(spl), 1))
    p = np.tile(spl, (n_b, 1)).T
    valid = (i >= 0) & (i < n)
    return cvxopt.spmatrix(p[valid], i[valid], j[valid], (n, n_b))


def cvxeda_decompose(eda, *, tau0=2.0, tau1=0.7, delta_knot_seconds=10.0,
                     alpha=8e-4, gamma=1e-2, reltol=1e-6, max_iter=100):
    """Decompose a 4 Hz median-filtered EDA trace.

    Raises DecompositionError (carrying the last duality gap) when the
    interior-point solver does not reach the requested tolerance.
    """
    if abs(eda.sample_rate - 4.0) > 1e-9:
        raise ValidationError(f"decomposition expects 4 Hz input, got {eda.sample_rate} Hz")
    y = np.asarray(eda.values, dtype=np.float64)
    n = y.shape[0]
    if n < 40:
        raise ValidationError(f"need at least 40 samples, got {n}")
    fs = eda.sample_rate

    ar, ma = _bateman_arma(fs, tau0, tau1)
    A = _band_matrix(ar, n)
    M = _band_matrix(ma, n)
    B = _spline_basis(n, max(1, int(round(delta_knot_seconds * fs))))
    n_b = B.size[1]
    C = cvxopt.matrix(np.column_stack([np.ones(n), np.arange(1.0, n + 1.0) / n]))
    n_c = 2
    yv = cvxopt.matrix(y)

    Mt, Ct, Bt = M.T, C.T, B.T
    gamma_eye = cvxopt.spmatrix(gamma, range(n_b), range(n_b))
    H = cvxopt.sparse([[Mt * M, Ct * M, Bt * M],
                       [Mt * C, Ct * C, Bt * C],
                       [Mt * B, Ct * B, Bt * B + gamma_eye]])
    f = cvxopt.matrix([(cvxopt.matrix(alpha, (1, n)) * A).T - Mt * yv,
                       -(Ct * yv), -(Bt * yv)])
    G = cvxopt.sparse([[-A],
                       [cvxopt.spmatrix([], [], [], (n, n_c))],
                       [cvxopt.spmatrix([], [], [], (n, n_b))]])
    h = cvxopt.matrix(0.0, (n, 1))

    saved = cvxopt.solvers.options.copy()
    cvxopt.solvers.options.clear()
    cvxopt.solvers.options.update({
        "reltol": reltol, "abstol": reltol * 1e-1, "feastol": reltol * 1e-1,
        "maxiters": max_iter, "show_progress": False,
    })
    try:
        res = cvxopt.solvers.qp(H, f, G, h)
    finally:
        cvxopt.solvers.options.clear()
        cvxopt.solvers.options.update(saved)
    if res["status"] != "optimal":
        raise DecompositionError(
            f"QP did not converge within {max_iter} iterations "
            f"(status {res['status']}, gap {res.get('gap')})", gap=res.get("gap"))

    x = np.asarray(res["x"]).ravel()
    q = cvxopt.matrix(x[:n])
    d = x[n:n + n_c]
    ell = x[n + n_c:]
    tonic = (np.asarray(B * cvxopt.matrix(ell)).ravel()
             + np.asarray(C) @ d)
    phasic = np.asarray(M * q).ravel()
    driver = np.asarray(A * q).ravel()
    residual = y - tonic - phasic
    return EdaDecomposition(fs, eda.start_time, y, tonic, phasic, driver, residual)


def _zscore(x):
    sigma = float(np.std(x))
    if sigma == 0.0:
        return np.zeros_like(x)
    return (x - float(np.mean(x))) / sigma


def _minmax(x):
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def normalize_eda(decomp, method="zscore"):
    """Replace mixed/tonic/phasic by per-session normalized versions.

    zscore uses population statistics; a constant series maps to zeros.
    driver and residual pass through unchanged.
    """
    if method == "zscore":
        fn = _zscore
    elif method == "minmax":
        fn = _minmax
    else:
        raise ValidationError(f"unknown normalization {method!r}")
    return replace(decomp, mixed=fn(decomp.mixed), tonic=fn(decomp.tonic),
                   phasic=fn(decomp.phasic))


def detect_scr_peaks(phasic, min_amplitude=0.01):
    """Strict local maxima with value >= min_amplitude.

    Plateaus count once and report their first index. Returns a list of
    (index, amplitude) pairs in index order.
    """
    if min_amplitude < 0:
        raise ValidationError("min_amplitude must be >= 0")
    x = np.asarray(phasic, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        return []
    d = np.sign(np.diff(x))
    # next nonzero slope at or after each position, so a plateau's first
    # sample sees the slope on the plateau's far side
    pos = np.where(d != 0, np.arange(d.size), d.size)
    nxt = np.minimum.accumulate(pos[::-1])[::-1]
    ahead = np.where(nxt < d.size, d[np.minimum(nxt, d.size - 1)], 0.0)
    is_peak = np.zeros(n, dtype=bool)
    is_peak[1:n - 1] = (d[:n - 2] > 0) & (ahead[1:n - 1] < 0)
    is_peak &= x >= min_amplitude
    idx = np.flatnonzero(is_peak)
    return [(int(i), float(x[i])) for i in idx]


@dataclass(frozen=True)
class ArousalProfile:
    window_seconds: float
    labels: tuple  # per-window level in {0..K-1}
    num_arouse: int
    num_unarouse: int
    ratio_arouse: float
    level_fractions: tuple

    def __post_init__(self):
        if self.num_arouse + self.num_unarouse != len(self.labels):
            raise ValidationError("arousal counts do not cover all windows")
        if self.level_fractions and abs(sum(self.level_fractions) - 1.0) > 1e-9:
            raise ValidationError("level fractions must sum to 1")


def arousal_profile(phasic, peaks, *, sample_rate, K=4, window_seconds=60.0):
    """Window-level arousal summary of a phasic series.

    A window is arousing when it contains at least one detected peak.
    Levels bin each window's max phasic value into K quantile bins over
    the session, ties resolved to the lowest bin. A trailing partial
    window counts as a window.
    """
    if K < 2:
        raise ValidationError("K must be >= 2")
    x = np.asarray(phasic, dtype=np.float64)
    win = int(round(window_seconds * sample_rate))
    if win < 1 or x.shape[0] < 2 * win:
        raise ValidationError("session shorter than two arousal windows")
    n_win = int(np.ceil(x.shape[0] / win))
    peak_windows = np.zeros(n_win, dtype=bool)
    for idx, _amp in peaks:
        peak_windows[min(idx // win, n_win - 1)] = True
    num_arouse = int(peak_windows.sum())
    num_unarouse = n_win - num_arouse
    ratio = num_arouse / max(1, num_unarouse)

    maxima = np.array([x[i * win:(i + 1) * win].max() for i in range(n_win)])
    edges = np.quantile(maxima, np.arange(1, K) / K)
    labels = (maxima[:, None] > edges[None, :]).sum(axis=1)
    fractions = np.bincount(labels, minlength=K) / n_win
    return ArousalProfile(window_seconds, tuple(int(v) for v in labels),
                          num_arouse, num_unarouse, float(ratio),
                          tuple(float(v) for v in fractions))
