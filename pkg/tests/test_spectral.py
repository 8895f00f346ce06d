import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcloads import spectral as sp
from mfcloads.model import ModelParams


def brute_minus(lam, p, s):
    """Original (uncleared) MINUS equation, written out independently."""
    r, tau = p.r, p.tau
    A = r * tau + 4
    lhs = r * cmath.exp(lam * tau / 2) / (r - 2 * lam)
    return lhs * (4 * s * r * r / ((r - lam) * (2 * s * r + (r - lam) * A)) - 1) - 1


def brute_plus(lam, p):
    return p.r * cmath.exp(lam * p.tau / 2) / (p.r - 2 * lam) - 1


def test_reference_values(ref):
    assert sp.leading_minus(ref, 0.0).lam == pytest.approx(0.013949470275 - 6.042582041837j, abs=1e-9)
    assert sp.leading_plus(ref).lam == pytest.approx(0.054763465832 - 12.091326983904j, abs=1e-9)
    lead = sp.leading_minus(ref.with_(s=200.0), 200.0)
    assert lead.is_real and lead.index_k is None
    assert lead.lam.real == pytest.approx(0.96308620406, abs=1e-9)
    assert abs(brute_minus(lead.lam, ref, 200.0)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 400.0), st.floats(0.2, 5.0), st.integers(-3, 3))
def test_lambert_roots_solve_branch_equations(rtau, tau, k):
    p = ModelParams.from_tau(tau, rtau / tau)
    lam = sp.lambert_root(p, k, sp.Branch.MINUS)
    assert abs(brute_minus(lam, p, 0.0)) < 1e-9 * max(1, abs(lam))
    if k != 0:
        lam = sp.lambert_root(p, k, sp.Branch.PLUS)
        assert abs(brute_plus(lam, p)) < 1e-9 * max(1, abs(lam))


def test_plus_k0_is_stationary_mode(ref):
    assert sp.lambert_root(ref, 0, sp.Branch.PLUS) == 0


@pytest.mark.parametrize("s", [0.0, 1.0, 20.0, 200.0])
def test_spectrum_complete_and_conjugate_closed(ref, s):
    p = ref.with_(s=s)
    roots = sp.spectrum_minus(p, s)
    lams = [e.lam for e in roots]
    rect = sp.scan_window(p)
    rect = sp._adjust_rect(rect, lams, p.tau)
    assert sp.count_minus_roots(p, s, rect) == len(roots)
    for z in lams:
        assert min(abs(z.conjugate() - w) for w in lams) < 1e-9 * max(1, abs(z))
        assert abs(brute_minus(z, p, s)) < 1e-10 * max(1, abs(z))
    assert all(e.residual < 1e-10 * max(1, abs(e.lam)) for e in roots)


def test_winding_number_counts_polynomial_roots():
    f = lambda z: (z - 1) * (z - 2j) * (z + 3)  # noqa: E731
    corners = [-1.0 - 1j, 2.5 - 1j, 2.5 + 3j, -1.0 + 3j]
    assert sp.winding_number(f, corners) == 2
    assert sp.winding_number(f, [c - 10 for c in corners]) == 0


def test_continuation_round_trip(ref):
    lam0 = sp.lambert_root(ref, 1, sp.Branch.MINUS)
    out, path, status = sp.continue_root(ref, lam0, 0.0, 5.0)
    assert status == "ok" and path[0] == (0.0, lam0)
    back, _, _ = sp.continue_root(ref, out, 5.0, 0.0)
    assert abs(back - lam0) < 1e-10


def test_small_s_derivative_matches_finite_difference(ref):
    an = sp.small_s_correction(ref)
    h = 1e-5
    lam0 = sp.lambert_root(ref, 0, sp.Branch.MINUS)
    lam_h, _, _ = sp.continue_root(ref, lam0, 0.0, h, ds0=h)
    assert abs((lam_h - lam0) / h - an) < 1e-4 * abs(an)


def test_large_rtau_shift_law():
    p = ModelParams.from_tau(1.0, 1000.0)
    lam0 = sp.lambert_root(p, 0, sp.Branch.MINUS)
    lam, _, _ = sp.continue_root(p, lam0, 0.0, 2.0)
    assert (lam - lam0).real == pytest.approx(sp.large_rtau_shift(p, 2.0), rel=0.05)


@pytest.mark.parametrize("s", [0.0, 20.0, 200.0])
def test_eigenvectors_continuous_and_consistent(ref, s):
    p = ref.with_(s=s)
    for e in sp.spectrum_minus(p, s)[:5] + [sp.leading_plus(p)]:
        vec = sp.eigenvector(e, p, s)
        assert vec.continuity_defect() < 1e-8
        if e.branch is sp.Branch.PLUS:
            assert abs(vec.integral_up()) < 1e-10
        else:
            # self-consistency: the forcing amplitude uses chi = integral of rho_up
            assert abs(vec.integral_up() - vec.chi_up) < 1e-8 * max(1.0, abs(vec.chi_up))


def test_eigenvector_rejects_non_eigenvalue(ref):
    fake = sp.ComplexEigenvalue(0.5 - 3j, sp.Branch.MINUS, 0, 0.0, 1.0)
    with pytest.raises(sp.SpuriousRootError):
        sp.eigenvector(fake, ref, 0.0)
    pole = sp.ComplexEigenvalue(complex(ref.r / 2), sp.Branch.MINUS, 0, 0.0, 1.0)
    with pytest.raises(sp.PoleProximityError):
        sp.eigenvector(pole, ref, 0.0)


def test_regimes_along_r_at_s20(ref):
    seq = [sp.classify_regime(ref.with_(r=r), 20.0).regime for r in (1.0, 5.0, 10.0, 20.0, 500.0)]
    assert seq == [sp.Regime.SLOWER, sp.Regime.SLOWER, sp.Regime.FASTER,
                   sp.Regime.SUPER_RELAXATION, sp.Regime.SUPER_RELAXATION]
    assert sp.classify_regime(ref, 0.0).regime is sp.Regime.BASELINE


def test_transition_is_a_jump_with_feedback(ref):
    t0 = sp.real_complex_transition(ref, 0.0, n_scan=24)
    t20 = sp.real_complex_transition(ref, 20.0, n_scan=24)
    assert not t0["discontinuous"] and t0["r_star"] == pytest.approx(1.114, rel=1e-2)
    assert t20["discontinuous"] and t20["r_star"] == pytest.approx(14.15, rel=1e-2)


def test_polish_root(ref):
    lam = sp.lambert_root(ref, 2, sp.Branch.PLUS)
    assert abs(sp.polish_root(ref, lam * 1.001, sp.Branch.PLUS) - lam) < 1e-12
    with pytest.raises(sp.ContinuationError):
        sp.polish_root(ref, 1e6 + 1e6j, sp.Branch.PLUS)


def test_spectrum_export(tmp_path, ref):
    roots = sp.spectrum_s0(ref, (-1, 1))
    path = sp.write_spectrum(tmp_path / "s.csv", roots, ref)
    from mfcloads.io import read_csv
    meta, cols, rows = read_csv(path)
    assert cols == sp.SPECTRUM_COLUMNS and len(rows) == len(roots)
    assert meta["params"]["r"] == 100.0
    sp.write_spectrum(tmp_path / "s.json", roots, ref, fmt="json")
