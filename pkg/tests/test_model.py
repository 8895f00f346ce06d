import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfcloads.model import (DeviceState, FeedbackLaw, GForm, Mode, ModelParams, drift,
                            feedback_g, switching_rates)


def test_tau_from_velocity_and_band():
    p = ModelParams(v=4.0, x_down=-1.0, x_up=1.0, r=100.0)
    assert p.tau == 1.0
    assert p.beta == 25.0
    q = ModelParams.from_tau(2.5, 10.0, x_down=20.0, x_up=22.0)
    assert math.isclose(q.v, 2 * 2.0 / 2.5)
    assert math.isclose(q.tau, 2.5)


@pytest.mark.parametrize("kw", [dict(v=0.0), dict(v=-1.0), dict(r=0.0), dict(s=-1.0),
                                dict(x_down=1.0), dict(v=math.nan)])
def test_invalid_params_rejected(kw):
    base = dict(v=4.0, x_down=-1.0, x_up=1.0, r=100.0, s=0.0)
    base.update(kw)
    with pytest.raises(ValueError):
        ModelParams(**base)


def test_with_keeps_tau_derived(ref):
    q = ref.with_(r=5.0)
    assert q.r == 5.0 and q.tau == ref.tau


@given(st.floats(0.0, 1.0), st.floats(0.0, 300.0))
def test_feedback_equals_r_at_half_and_monotone(n, s):
    law = FeedbackLaw(r=100.0, s=s)
    assert math.isclose(feedback_g(0.5, law), 100.0)
    g = feedback_g(n, law)
    assert g >= 0.0
    if s > 0 and n < 0.5:
        assert g <= 100.0
    if s > 0 and n > 0.5:
        assert g >= 100.0


def test_feedback_forms_and_slopes():
    h = 1e-7
    for form, slope in ((GForm.COMPUTATIONAL, 100.0 * 3.0), (GForm.FULL_EXPONENT, 2 * 100.0 * 3.0)):
        law = FeedbackLaw(r=100.0, s=3.0, form=form)
        d = (feedback_g(0.5 + h, law) - feedback_g(0.5 - h, law)) / (2 * h)
        assert math.isclose(d, slope, rel_tol=1e-6)


def test_feedback_limits():
    assert feedback_g(0.0, FeedbackLaw(100.0, 200.0)) == 0.0
    assert feedback_g(0.0, FeedbackLaw(100.0, 0.0)) == 100.0
    assert feedback_g(1.0, FeedbackLaw(100.0, 200.0)) == 100.0 * 2.0 ** 100
    with pytest.raises(ValueError):
        feedback_g(1.5, FeedbackLaw(100.0, 1.0))


def test_switching_only_outside_band(ref):
    law = FeedbackLaw.from_params(ref.with_(s=2.0))
    assert switching_rates(DeviceState(0.0, Mode.ON), 0.3, ref, law) == (0.0, 0.0)
    off, on = switching_rates(DeviceState(-1.5, Mode.ON), 0.3, ref, law)
    assert math.isclose(off, 100.0 * 0.6 ** 1.0) and on == 0.0
    off, on = switching_rates(DeviceState(1.5, Mode.OFF), 0.3, ref, law)
    assert off == 0.0 and math.isclose(on, 100.0 * 1.4)


def test_drift_sign(ref):
    assert drift(DeviceState(0.0, Mode.ON), ref) == -ref.v
    assert drift(DeviceState(0.0, Mode.OFF), ref) == ref.v
    with pytest.raises(ValueError):
        DeviceState(math.inf, Mode.ON)
