import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcloads.analysis import (DecayFit, FitSettings, FitWindowError, Observable,
                               compare_to_spectrum, crossing_times, fit_decay, plateau_scaling)
from mfcloads.series import TimeSeries


def series(t, dev, h1=None):
    return TimeSeries(t, 0.5 + dev, np.zeros_like(t), h1=h1)


def test_pure_exponential():
    t = np.linspace(0, 10, 1001)
    fit = fit_decay(series(t, 0.3 * np.exp(-0.93 * t) + 1e-9))
    assert fit.rate == pytest.approx(0.93, rel=1e-3)
    assert fit.freq == 0.0 and not fit.partial


def test_noisy_exponential_with_floor():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 15, 1501)
    y = 0.4 * np.exp(-0.93 * t) + 1e-3 * rng.standard_normal(t.size)
    fit = fit_decay(series(t, y))
    assert fit.rate == pytest.approx(0.93, rel=0.05)
    assert fit.plateau_level == pytest.approx(1e-3 * 0.6745, rel=0.3)


def test_damped_oscillation():
    t = np.linspace(0, 60, 6001)
    fit = fit_decay(series(t, 0.45 * np.exp(-0.014 * t) * np.cos(6.0 * t)))
    assert fit.rate == pytest.approx(0.014, rel=0.05)
    assert fit.freq == pytest.approx(6.0, rel=1e-3)
    assert fit.partial  # less than 5 e-foldings


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 1e4))
def test_scale_invariance(c):
    t = np.linspace(0, 40, 4001)
    y = np.exp(-0.2 * t) * np.cos(3 * t) + 1e-6 * np.sin(37 * t)
    a = fit_decay(series(t, y))
    b = fit_decay(TimeSeries(t, 0.5 + c * y, np.zeros_like(t)))
    assert a.rate == pytest.approx(b.rate, rel=1e-9, abs=1e-12)
    assert a.freq == pytest.approx(b.freq, rel=1e-9, abs=1e-12)


def test_constant_series_is_partial():
    t = np.linspace(0, 1, 101)
    fit = fit_decay(series(t, np.full(t.size, 0.01)))
    assert fit.partial and fit.plateau_level == pytest.approx(0.01)
    assert fit.rate == pytest.approx(0.0, abs=1e-12)


def test_too_short_raises():
    with pytest.raises(FitWindowError):
        fit_decay(series(np.arange(3.0), np.ones(3)))


def test_h1_observable_and_t_min():
    t = np.linspace(0, 30, 3001)
    h1 = 2 * np.exp(-3 * t) + 0.5 * np.exp(-0.05 * t)
    fit = fit_decay(series(t, np.exp(-t), h1=h1), Observable.H1, FitSettings(t_min=8))
    assert fit.rate == pytest.approx(0.05, rel=0.02)
    with pytest.raises(ValueError):
        fit_decay(series(t, np.exp(-t)), Observable.H1)


def test_crossings_with_hysteresis():
    t = np.linspace(0, 10, 10001)
    y = np.sin(2 * t) + 0.05 * np.sin(300 * t)
    c = crossing_times(t, y, hysteresis=0.2)
    assert np.allclose(np.diff(c), math.pi / 2, atol=2e-2)


def test_compare_to_spectrum():
    fit = DecayFit(0.95, 0.0, (0, 5), 1e-4, 0.99)
    assert compare_to_spectrum(fit, 0.93).passed
    assert not compare_to_spectrum(fit, 0.93 - 1j).passed
    osc = DecayFit(0.02, 6.03, (0, 40), 1e-3, 0.9)
    assert compare_to_spectrum(osc, 0.014 - 6j, rel_tol=0.5, freq_tol=0.1).passed
    assert not compare_to_spectrum(osc, 0.014 - 6j).passed


def test_plateau_scaling():
    out = plateau_scaling({10_000: 3.5e-4, 1_000_000: 3.5e-5})
    assert out["spread"] == pytest.approx(1.0)
