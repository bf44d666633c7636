import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radtrap import constants
from radtrap.errors import BleachedMediumError, DataError, ZeroDecayError
from radtrap.inference import infer_effective_decay
from radtrap.lambda_propagation import (
    FieldState,
    analytic_profile,
    doppler_free_predicate,
    forward_observables,
    phase_closed_form,
    propagate_closed_form,
    rotation_constant,
    rotation_slope,
)
from radtrap.medium import MediumParams

from tests.oracles import intensity_ode_profile, phase_by_quadrature, random_valid_parameters


def test_field_state_linear():
    fs = FieldState.linear(50.0)
    assert fs.intensity == pytest.approx(50.0)
    assert fs.phase == 0.0
    assert FieldState(1.0, 1j).phase == pytest.approx(math.pi / 2)


def test_rotation_constant_value():
    # 2 * 1.3996 / 2.87 per gauss
    assert rotation_constant(MediumParams()) == pytest.approx(0.9753310104529617, rel=1e-14)


# [DERIVED] ODE oracle with the trapping rate fed back from the gradient
def test_closed_form_matches_ode_oracle():
    rng = np.random.default_rng(7)
    for d in random_valid_parameters(rng, 60):
        m = MediumParams(N=d["N"], gamma_0=d["gamma_0"], L=d["L"])
        zs = np.linspace(0.0, m.L, 9)
        oracle = intensity_ode_profile(m, d["omega0_sq"], d["f"], zs)
        closed = np.array([propagate_closed_form(m, d["omega0_sq"], d["f"], z) for z in zs])
        np.testing.assert_allclose(closed, oracle, rtol=1e-8)


# [DERIVED] quadrature oracle for the phase
def test_phase_matches_quadrature():
    rng = np.random.default_rng(3)
    for d in random_valid_parameters(rng, 40):
        m = MediumParams(N=d["N"], gamma_0=d["gamma_0"], L=d["L"])
        B = rng.uniform(-1e-3, 1e-3)
        got = phase_closed_form(m, d["omega0_sq"], d["f"], m.L, B)
        ref = phase_by_quadrature(m, d["omega0_sq"], d["f"], m.L, B, rotation_constant(m))
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_slope_is_phase_derivative():
    # [DERIVED] central finite difference of the closed-form phase
    m = MediumParams(N=2e12)
    h = 1e-4
    f = 1.2
    fd = (phase_closed_form(m, 900.0, f, m.L, h) - phase_closed_form(m, 900.0, f, m.L, -h)) / (2 * h)
    point = forward_observables(m, 900.0, f)
    assert point.slope == pytest.approx(fd, rel=1e-9)


def test_bleached_medium_raises():
    m = MediumParams(N=1e14)
    with pytest.raises(BleachedMediumError):
        propagate_closed_form(m, 10.0, 0.0, m.L)
    with pytest.raises(BleachedMediumError):
        forward_observables(m, 10.0, 0.0)
    with pytest.raises(BleachedMediumError):
        phase_closed_form(m, 10.0, 0.0, m.L, 1e-3)


def test_input_validation():
    m = MediumParams()
    with pytest.raises(DataError):
        propagate_closed_form(m, 0.0, 0.0, 1.0)
    with pytest.raises(DataError):
        propagate_closed_form(m, 10.0, -0.1, 1.0)
    with pytest.raises(DataError):
        propagate_closed_form(m, 10.0, 0.0, m.L + 1.0)
    with pytest.raises(DataError):
        rotation_slope(m, 1.5, 0.0)


def test_zero_density_is_transparent():
    m = MediumParams(N=0.0)
    assert propagate_closed_form(m, 10.0, 0.0, m.L) == 10.0
    p = forward_observables(m, 10.0, 0.0)
    assert p.transmission == 1.0 and p.slope == 0.0


def test_zero_decay_limits():
    m = MediumParams(gamma_0=0.0)
    assert rotation_slope(m, 1.0, 0.0) == 0.0
    with pytest.raises(ZeroDecayError):
        rotation_slope(m, 0.5, 0.0)
    p = forward_observables(m, 100.0, 0.0)
    assert p.transmission == 1.0
    # lossless slope: c kappa L / Omega0^2
    assert p.slope == pytest.approx(rotation_constant(m) * m.kappa * m.L / 100.0)


def test_slope_vanishes_in_lossless_limit_continuously():
    m = MediumParams()
    lossless = forward_observables(MediumParams(gamma_0=0.0), 400.0, 0.0).slope
    tiny = forward_observables(MediumParams(gamma_0=1e-9), 400.0, 0.0).slope
    assert tiny == pytest.approx(lossless, rel=1e-6)
    assert m.gamma_0 > 0


def test_transmission_squared_doubles_slope():
    m = MediumParams()
    assert rotation_slope(m, 0.25, 0.5) == pytest.approx(2 * rotation_slope(m, 0.5, 0.5), rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e10, 5e12), st.floats(0, 5), st.floats(400, 1e4))
def test_round_trip_property(N, f, omega0_sq):
    m = MediumParams(N=N)
    try:
        p = forward_observables(m, omega0_sq, f)
    except BleachedMediumError:
        return
    if p.transmission == 1.0:
        return
    assert infer_effective_decay(p) == pytest.approx(m.gamma_0 * (1 + f), rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e10, 3e12), st.floats(0, 3), st.floats(0, 3))
def test_more_trapping_lowers_transmission(N, f1, f2):
    m = MediumParams(N=N)
    lo, hi = sorted((f1, f2))
    try:
        a, b = forward_observables(m, 900.0, lo), forward_observables(m, 900.0, hi)
    except BleachedMediumError:
        return
    assert b.transmission <= a.transmission


def test_analytic_profile_samples():
    m = MediumParams(N=1e12)
    prof = analytic_profile(m, 900.0, 0.5, n_samples=11, B=1.0)
    zs = [s[0] for s in prof.samples]
    intens = [s[1] for s in prof.samples]
    phis = [s[2] for s in prof.samples]
    assert zs[0] == 0.0 and zs[-1] == pytest.approx(m.L)
    assert all(a > b for a, b in zip(intens, intens[1:]))
    assert all(a < b for a, b in zip(phis, phis[1:]))
    # phase per gauss at the exit equals the slope
    assert phis[-1] == pytest.approx(prof.dphi_dB, rel=1e-12)
    assert intens[-1] / intens[0] == pytest.approx(prof.transmission, rel=1e-12)


def test_doppler_free_predicate():
    m = MediumParams()
    boundary = m.W_d * math.sqrt(m.gamma_0)
    assert boundary == pytest.approx(100 * math.sqrt(0.004))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ok = doppler_free_predicate(m, (10 * boundary) ** 2)
    assert ok.valid and ok.margin == pytest.approx(10.0)
    assert not doppler_free_predicate(m, (0.5 * boundary) ** 2).valid
    with pytest.warns(RuntimeWarning):
        marginal = doppler_free_predicate(m, (1.5 * boundary) ** 2)
    assert marginal.valid
    with pytest.raises(DataError):
        doppler_free_predicate(m, 0.0)


def test_doppler_free_margin_factor():
    m = MediumParams()
    boundary = m.W_d * math.sqrt(m.gamma_0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert not doppler_free_predicate(m, (1.5 * boundary) ** 2, margin_factor=2.0).valid


def test_bohr_override_scales_slope():
    m = MediumParams()
    a = rotation_slope(m, 0.5, 0.0)
    b = rotation_slope(m, 0.5, 0.0, bohr_hz_per_g=2 * constants.BOHR_MAGNETON_HZ_PER_G)
    assert b == pytest.approx(2 * a)
