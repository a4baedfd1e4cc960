"""Top-down information-gain segmentation and class-boundary estimation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngage.core import SensorTrace
from ngage.errors import ValidationError
from ngage.segment import class_boundary, igts_topdown, segment_entropy


def test_segment_entropy_two_channel_hand_case():
    X = np.array([[1.0, 1.0], [1.0, 3.0]])
    # channel masses 2 and 4 -> p = (1/3, 2/3)
    expected = -(1 / 3) * math.log2(1 / 3) - (2 / 3) * math.log2(2 / 3)
    assert segment_entropy(X, 0, 2) == pytest.approx(expected, abs=1e-12)


def test_igts_finds_complementary_step():
    X = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    res = igts_topdown(X, 1)
    assert res.boundaries == (2,)
    assert res.k == 1
    # mixed halves are pure, so the gain is the full 1 bit (up to the
    # zero-mass smoothing epsilon)
    assert res.information_gain == pytest.approx(1.0, abs=1e-6)


def test_igts_boundary_exact_on_clean_steps():
    rng = np.random.default_rng(7)
    for _ in range(10):
        T = int(rng.integers(100, 400))
        t_star = int(rng.integers(20, T - 20))
        X = np.empty((2, T))
        X[0] = np.where(np.arange(T) < t_star, 1.0, 0.05)
        X[1] = np.where(np.arange(T) < t_star, 0.05, 1.0)
        X += np.abs(rng.normal(0.0, 0.005, X.shape))
        res = igts_topdown(X, 1)
        assert abs(res.boundaries[0] - t_star) <= 2


def test_igts_gain_non_decreasing_in_k():
    rng = np.random.default_rng(1)
    X = np.abs(rng.normal(1.0, 0.3, size=(3, 240)))
    X[0, 80:] *= 0.2
    X[1, 160:] *= 3.0
    gains = [igts_topdown(X, k).information_gain for k in range(1, 6)]
    for lo, hi in zip(gains, gains[1:]):
        assert hi >= lo - 1e-12


def test_igts_boundaries_sorted_and_distinct():
    rng = np.random.default_rng(2)
    X = np.abs(rng.normal(1.0, 0.5, size=(2, 300)))
    res = igts_topdown(X, 4)
    assert list(res.boundaries) == sorted(set(res.boundaries))
    assert res.k == len(res.boundaries)


def test_igts_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        igts_topdown(np.array([[1.0, 2.0]]), 0)
    with pytest.raises(ValidationError):
        igts_topdown(np.array([[1.0, 2.0, 3.0]]), 3)  # k needs k+1 samples


def test_igts_shift_normalizes_negative_input():
    # channels may be arbitrary reals; masses are min-shifted internally
    T = 80
    X = np.empty((2, T))
    X[0] = np.where(np.arange(T) < 30, 0.5, -1.0)
    X[1] = np.where(np.arange(T) < 30, -1.0, 0.5)
    assert abs(igts_topdown(X, 1).boundaries[0] - 30) <= 2


def _step_trace(step_t, *, lo=0.1, hi=1.0, rate=32.0, dur=700.0):
    v = np.full(int(dur * rate), lo)
    v[int(step_t * rate):] = hi
    return SensorTrace("ACC_MAG", 0.0, rate, v)


def test_class_boundary_recovers_shared_step():
    traces = [_step_trace(292.0), _step_trace(292.0), _step_trace(292.0)]
    est = class_boundary(traces, 300.0, "start")
    assert not est.fallback
    assert est.n_used == 3
    assert abs(est.time_utc - 292.0) <= 2.0


def test_class_boundary_takes_lower_middle_median():
    est = class_boundary([_step_trace(290.0), _step_trace(300.0),
                          _step_trace(330.0)], 300.0, "start")
    assert est.time_utc == pytest.approx(300.0, abs=2.0)
    two = class_boundary([_step_trace(290.0), _step_trace(310.0)], 300.0, "start")
    assert two.time_utc == pytest.approx(290.0, abs=2.0)


def test_class_boundary_falls_back_to_schedule():
    est = class_boundary([], 300.0, "start")
    assert est.fallback
    assert est.n_used == 0
    assert est.time_utc == 300.0


def test_class_boundary_end_side():
    # activity drops off after the class ends
    def ending(stop_t):
        v = np.full(int(700 * 32), 1.0)
        v[int(stop_t * 32):] = 0.1
        return SensorTrace("ACC_MAG", 0.0, 32.0, v)
    est = class_boundary([ending(410.0), ending(410.0)], 400.0, "end")
    assert not est.fallback
    assert abs(est.time_utc - 410.0) <= 2.0


def test_class_boundary_rejects_bad_side():
    with pytest.raises(ValidationError):
        class_boundary([_step_trace(300.0)], 300.0, "middle")


@settings(max_examples=25, deadline=None)
@given(st.integers(40, 560))
def test_igts_step_recovery_property(t_star):
    T = 600
    X = np.empty((2, T))
    X[0] = np.where(np.arange(T) < t_star, 2.0, 0.1)
    X[1] = np.where(np.arange(T) < t_star, 0.1, 2.0)
    assert abs(igts_topdown(X, 1).boundaries[0] - t_star) <= 2
