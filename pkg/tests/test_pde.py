import math

import numpy as np
import pytest

from mfcloads.density import (DensityGrid, empirical_density, h1_metric, stationary_field,
                              uniform_field)
from mfcloads.model import DeviceState, FeedbackLaw, Mode, ModelParams
from mfcloads.pde import (CFLError, default_dt, discrete_stationary, initial_field, integrate,
                          pde_step, step_matrix)
from mfcloads.steady import stationary_profile


def test_aligned_grid_band_on_edges(ref):
    g = DensityGrid.aligned(ref, 200)
    lo, hi = g.band_index(ref)
    assert math.isclose(g.edges[lo], ref.x_down, abs_tol=1e-12)
    assert math.isclose(g.edges[hi], ref.x_up, abs_tol=1e-12)
    g.check_resolves(ref)
    with pytest.raises(ValueError):
        DensityGrid(-1.05, 1.0, 100).band_index(ref)


def test_courant_one_is_exact_shift(ref):
    law = FeedbackLaw.from_params(ref)
    g = DensityGrid.aligned(ref, 100)
    f = uniform_field(g, -0.5, 0.0)
    nxt = pde_step(f, ref, law, default_dt(g, ref))
    assert np.array_equal(nxt.p_up[:-1], f.p_up[1:])


def test_cfl_violation(ref):
    g = DensityGrid.aligned(ref, 100)
    with pytest.raises(CFLError):
        pde_step(initial_field("IC1", ref, g), ref, FeedbackLaw.from_params(ref),
                 2 * default_dt(g, ref))


@pytest.mark.parametrize("s", [0.0, 20.0, 200.0])
@pytest.mark.parametrize("courant", [1.0, 0.5])
def test_mass_and_positivity(s, courant):
    p = ModelParams.from_tau(1.0, 100.0, s)
    law = FeedbackLaw.from_params(p)
    g = DensityGrid.aligned(p, 100)
    f = initial_field("IC3", p, g)
    dt = default_dt(g, p, courant)
    m = f.mass
    for _ in range(300):
        f = pde_step(f, p, law, dt)
        assert abs(f.mass - m) <= 1e-12
        m = f.mass
        assert f.p_up.min() >= 0 and f.p_down.min() >= 0


def test_step_matrix_matches_step(ref):
    g = DensityGrid.aligned(ref, 50)
    f = initial_field("IC2", ref, g)
    law = FeedbackLaw.from_params(ref)
    dt = default_dt(g, ref, 0.7)
    A = step_matrix(g, ref, dt, ref.r, ref.r)
    got = A @ np.concatenate([f.p_up, f.p_down])
    nxt = pde_step(f, ref, law, dt)
    assert np.allclose(got, np.concatenate([nxt.p_up, nxt.p_down]), atol=1e-14)


def test_discrete_fixed_point_close_to_analytic(ref):
    errs = []
    for n in (100, 200, 400):
        g = DensityGrid.aligned(ref, n)
        d = discrete_stationary(ref, g)
        a = stationary_field(stationary_profile(ref), g)
        assert math.isclose(d.mass, 1.0, rel_tol=1e-12)
        nxt = pde_step(d.copy(), ref, FeedbackLaw.from_params(ref), default_dt(g, ref))
        assert h1_metric(nxt, d) < 1e-12
        errs.append(h1_metric(d, a))
    # first-order convergence to the continuum profile
    assert 1.7 < errs[0] / errs[1] < 2.3 and 1.7 < errs[1] / errs[2] < 2.3


def test_grid_grows_under_strong_feedback():
    p = ModelParams.from_tau(1.0, 100.0, 200.0)
    g = DensityGrid.aligned(p, 100)
    ts = integrate(initial_field("IC1", p, g), p, FeedbackLaw.from_params(p), 3.0)
    assert ts.meta["grid"]["n_cells"] > g.n_cells
    assert abs(ts.meta["final_mass"] - 1.0) < 1e-10
    assert not ts.meta["edge_alarm"]


def test_relaxes_to_stationary_with_feedback():
    p = ModelParams.from_tau(1.0, 100.0, 200.0)
    g = DensityGrid.aligned(p, 100)
    ts = integrate(initial_field("IC1", p, g), p, FeedbackLaw.from_params(p), 15.0, sample_dt=0.1)
    assert abs(ts.n_up[-1] - 0.5) < 1e-5
    assert ts.h1[-1] < ts.h1[0] / 10
    assert ts.n_out[-1] == pytest.approx(1 / 26, abs=2e-3)


def test_empirical_density_normalized(ref):
    g = DensityGrid(-2, 2, 40)
    states = [DeviceState(0.1 * i - 1, Mode.ON if i % 2 else Mode.OFF) for i in range(20)]
    f = empirical_density(states, g)
    assert math.isclose(f.mass, 1.0)
    assert math.isclose(f.n_up, 0.5)
    far = empirical_density((np.array([5.0, 0.0]), np.array([1, 0])), g)
    assert far.clamped == 1


def test_h1_zero_iff_equal(ref):
    g = DensityGrid.aligned(ref, 50)
    a = stationary_field(stationary_profile(ref), g)
    assert h1_metric(a, a) == 0
    b = initial_field("IC1", ref, g)
    assert 0 < h1_metric(b, a) <= 2.0 + 1e-12
    assert math.isclose(h1_metric(b, a, scale=3.0), 3 * h1_metric(b, a))
