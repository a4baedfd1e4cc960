"""Tonic/phasic decomposition, normalization, SCR peaks, arousal profile."""

import numpy as np
import pytest

from ngage.core import SensorTrace
from ngage.eda import (
    arousal_profile,
    cvxeda_decompose,
    detect_scr_peaks,
    normalize_eda,
)
from ngage.errors import ValidationError


def _bateman(t, tau0=2.0, tau1=0.7):
    h = np.exp(-t / tau0) - np.exp(-t / tau1)
    return np.where(t >= 0, h, 0.0)


def _planted_session(rate=4.0, seconds=180.0, tonic_level=1.5,
                     impulses=((60.0, 0.8), (120.0, 0.5))):
    n = int(rate * seconds)
    t = np.arange(n) / rate
    driver = np.zeros(n)
    for when, amp in impulses:
        driver[int(when * rate)] = amp
    kernel = _bateman(np.arange(0.0, 20.0, 1.0 / rate))
    phasic = np.convolve(driver, kernel)[:n]
    return SensorTrace("EDA", 0.0, rate, tonic_level + phasic), t, impulses


def test_decompose_constant_input_is_all_tonic():
    tr = SensorTrace("EDA", 0.0, 4.0, np.full(4 * 600, 2.0))
    d = cvxeda_decompose(tr)
    assert np.max(np.abs(d.tonic - 2.0)) <= 1e-3
    assert np.max(np.abs(d.phasic)) <= 1e-3
    assert d.sample_rate == 4.0
    assert d.start_time == 0.0


def test_decompose_reconstructs_input():
    tr, _, _ = _planted_session()
    d = cvxeda_decompose(tr)
    np.testing.assert_allclose(d.tonic + d.phasic + d.residual, d.mixed,
                               atol=1e-9)
    np.testing.assert_allclose(d.mixed, tr.values, atol=1e-12)


def test_decompose_localizes_driver_mass():
    tr, _, impulses = _planted_session()
    d = cvxeda_decompose(tr)
    rate = tr.sample_rate
    near = np.zeros(len(d.driver), dtype=bool)
    for when, _amp in impulses:
        i = int(when * rate)
        half = int(0.5 * rate)
        near[max(0, i - half):i + half + 1] = True
    mass = np.abs(d.driver)
    assert mass[near].sum() >= 0.9 * mass.sum()


def test_decompose_noiseless_residual_is_small():
    tr, _, _ = _planted_session()
    d = cvxeda_decompose(tr)
    signal_rms = float(np.sqrt(np.mean(tr.values ** 2)))
    residual_rms = float(np.sqrt(np.mean(d.residual ** 2)))
    assert residual_rms <= 0.05 * signal_rms


def test_decompose_rejects_short_or_nonpositive_rate():
    with pytest.raises(ValidationError):
        cvxeda_decompose(SensorTrace("EDA", 0.0, 4.0, np.ones(8)))


def test_normalize_zscore_and_minmax():
    n = 480
    rng = np.random.default_rng(0)
    tr = SensorTrace("EDA", 0.0, 4.0, 2.0 + rng.normal(0, 0.3, n).cumsum() * 0.01)
    d = cvxeda_decompose(tr)

    z = normalize_eda(d, "zscore")
    for sig in (z.mixed, z.tonic):
        assert abs(float(np.mean(sig))) < 1e-9
        assert float(np.std(sig)) == pytest.approx(1.0, abs=1e-9)
    # driver and residual pass through untouched
    np.testing.assert_array_equal(z.driver, d.driver)
    np.testing.assert_array_equal(z.residual, d.residual)

    m = normalize_eda(d, "minmax")
    assert float(np.min(m.mixed)) == pytest.approx(0.0, abs=1e-12)
    assert float(np.max(m.mixed)) == pytest.approx(1.0, abs=1e-12)

    with pytest.raises(ValidationError):
        normalize_eda(d, "robust")


def test_normalize_constant_series_maps_to_zeros():
    tr = SensorTrace("EDA", 0.0, 4.0, np.full(4 * 120, 2.0))
    d = cvxeda_decompose(tr)
    z = normalize_eda(d, "zscore")
    # tonic is constant to 1e-3, so its z-score collapses near zero
    assert float(np.std(z.tonic)) <= 1.0 + 1e-9


def test_scr_peaks_amplitude_threshold_and_order():
    ph = np.zeros(480)
    ph[100:105] = [0.05, 0.08, 0.1, 0.08, 0.05]
    ph[300:305] = [0.1, 0.2, 0.3, 0.2, 0.1]
    assert detect_scr_peaks(ph) == [(102, 0.1), (302, 0.3)]
    assert detect_scr_peaks(ph, 0.15) == [(302, 0.3)]
    assert detect_scr_peaks(np.zeros(100)) == []


def test_scr_peaks_plateau_counts_once_at_first_sample():
    plateau = np.array([0.0, 1.0, 1.0, 1.0, 0.0])
    assert detect_scr_peaks(plateau) == [(1, 1.0)]


def test_scr_peaks_endpoint_maxima_do_not_count():
    rising = np.array([0.0, 0.5, 1.0])
    assert detect_scr_peaks(rising) == []


def test_arousal_profile_counts_and_fractions():
    rate = 4.0
    n = int(rate * 240)  # four 60 s windows
    ph = np.zeros(n)
    # windows 2 and 3 get a peak each, with increasing amplitude
    ph[int(130 * rate)] = 0.3
    ph[int(190 * rate)] = 0.6
    prof = arousal_profile(ph, detect_scr_peaks(ph), sample_rate=rate, K=4)
    assert len(prof.labels) == 4
    assert prof.num_arouse == 2
    assert prof.num_unarouse == 2
    # arousing-to-unarousing ratio, not a fraction of all windows
    assert prof.ratio_arouse == pytest.approx(1.0)
    assert sum(prof.level_fractions) == pytest.approx(1.0)
    assert len(prof.level_fractions) == 4


def test_arousal_ratio_with_no_unarousing_windows():
    rate = 4.0
    ph = np.zeros(int(rate * 240))
    for w in range(4):
        ph[int((w * 60 + 30) * rate)] = 0.5
    prof = arousal_profile(ph, detect_scr_peaks(ph), sample_rate=rate, K=4)
    assert prof.num_unarouse == 0
    assert prof.ratio_arouse == 4.0  # denominator floors at 1


def test_arousal_profile_all_quiet():
    prof = arousal_profile(np.zeros(4 * 240), [], sample_rate=4.0, K=4)
    assert prof.labels == (0, 0, 0, 0)
    assert prof.num_arouse == 0
    assert prof.ratio_arouse == 0.0
    assert prof.level_fractions == (1.0, 0.0, 0.0, 0.0)


def test_arousal_profile_needs_two_windows():
    with pytest.raises(ValidationError):
        arousal_profile(np.zeros(100), [], sample_rate=4.0, K=4,
                        window_seconds=60.0)
