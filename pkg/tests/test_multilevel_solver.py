import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from radtrap.atomic_core import build_lambda_scheme, build_rb87_d1_scheme, zeeman_splitting
from radtrap.errors import DataError, SingularSystemError, StepSizeError
from radtrap.lambda_propagation import FieldState, forward_observables
from radtrap.medium import MediumParams
from radtrap.multilevel_solver import (
    SolverConfig,
    build_liouvillian,
    doppler_average,
    hamiltonian,
    max_workers,
    observables,
    observables_vs_density,
    polarizations,
    propagate,
    solve_velocity_classes,
    steady_state,
)


@pytest.fixture(scope="module")
def rb():
    return build_rb87_d1_scheme()


@pytest.fixture(scope="module")
def lam():
    return build_lambda_scheme()


def _direct_rhs(scheme, fields, B, shift_v, cfg, rho):
    """Master equation written with matrix products (no vectorization)."""
    n = scheme.n
    H = hamiltonian(scheme, fields, zeeman_splitting(B), cfg.laser_detuning)
    exc = np.zeros((n, n))
    exc[scheme.excited, scheme.excited] = 1.0
    H = H - shift_v * exc
    out = -1j * (H @ rho - rho @ H)
    for q in (-1, 0, 1):
        C = math.sqrt(2.0) * scheme.raising[q].T
        out += C @ rho @ C.conj().T
    out -= exc @ rho + rho @ exc
    allowed = sum(np.abs(scheme.raising[q]) for q in (-1, 0, 1)) > 0
    for e, g in zip(*np.nonzero(allowed)):
        out[e, e] += cfg.pumping_rate / 2 * rho[g, g]
        out[g, :] -= cfg.pumping_rate / 4 * rho[g, :]
        out[:, g] -= cfg.pumping_rate / 4 * rho[:, g]
    out -= cfg.gamma_eff * rho
    src = np.zeros((n, n), dtype=complex)
    src[scheme.ground, scheme.ground] = cfg.gamma_eff / len(scheme.ground)
    return out + src


def _random_rho(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("pumping", [0.0, 0.003])
def test_vectorized_generator_matches_direct_form(rb, pumping):
    rng = np.random.default_rng(11)
    cfg = SolverConfig(gamma_eff=0.02, pumping_rate=pumping, laser_detuning=0.3)
    for _ in range(5):
        fields = FieldState(complex(*rng.normal(size=2)), complex(*rng.normal(size=2)))
        B, v = rng.uniform(-0.05, 0.05), rng.uniform(-50, 50)
        gen = build_liouvillian(rb, fields, zeeman_splitting(B), v, cfg)
        rho = _random_rho(rng, rb.n)
        got = gen.apply(rho) + gen.source.reshape(rb.n, rb.n)
        np.testing.assert_allclose(got, _direct_rhs(rb, fields, B, v, cfg, rho), atol=1e-12)


def _expm_steady(gen, t):
    """Time evolution from a ground-state mixture with the augmented exponential."""
    n2 = gen.matrix.shape[0]
    aug = np.zeros((n2 + 1, n2 + 1), dtype=complex)
    aug[:n2, :n2] = gen.matrix
    aug[:n2, n2] = gen.source
    n = gen.n
    rho0 = np.zeros((n, n), dtype=complex)
    rho0[gen.scheme.ground, gen.scheme.ground] = 1.0 / len(gen.scheme.ground)
    y = expm(aug * t) @ np.append(rho0.reshape(-1), 1.0)
    return y[:n2].reshape(n, n)


# [DERIVED] time-evolution oracle
def test_steady_state_matches_time_evolution(rb):
    rng = np.random.default_rng(5)
    cfg = SolverConfig(gamma_eff=0.05)
    for _ in range(4):
        fields = FieldState(complex(*rng.normal(size=2)), complex(*rng.normal(size=2)))
        gen = build_liouvillian(rb, fields, zeeman_splitting(rng.uniform(-0.02, 0.02)), rng.uniform(-5, 5), cfg)
        rho = steady_state(gen).entries
        np.testing.assert_allclose(_expm_steady(gen, 2000.0), rho, atol=1e-8)


def test_steady_state_physical(rb):
    rng = np.random.default_rng(9)
    cfg = SolverConfig(gamma_eff=0.004, pumping_rate=0.001)
    for _ in range(10):
        fields = FieldState(complex(*rng.normal(scale=5, size=2)), complex(*rng.normal(scale=5, size=2)))
        gen = build_liouvillian(rb, fields, zeeman_splitting(rng.uniform(-0.01, 0.01)), rng.uniform(-200, 200), cfg)
        dm = steady_state(gen)
        assert dm.hermiticity_error() < 1e-12
        assert dm.min_eigenvalue() > -1e-10
        assert 0 < dm.trace <= 1 + 1e-12
        residual = gen.apply(dm.entries) + gen.source.reshape(rb.n, rb.n)
        assert np.max(np.abs(residual)) < 1e-10


def test_trace_balance(rb):
    # population refilled by transit equals what transit and the F=1 leak remove
    rng = np.random.default_rng(2)
    cfg = SolverConfig(gamma_eff=0.01)
    gen = build_liouvillian(rb, FieldState(2.0, 1.5j), zeeman_splitting(0.0), 0.0, cfg)
    rho = _random_rho(rng, rb.n)
    assert np.trace(gen.apply(rho)).real == pytest.approx(-gen.sink_flux(rho) - cfg.gamma_eff, abs=1e-13)
    ss = steady_state(gen)
    assert cfg.gamma_eff * (1 - ss.trace) == pytest.approx(gen.sink_flux(ss.entries), abs=1e-13)


def test_closed_lambda_keeps_unit_trace(lam):
    cfg = SolverConfig(gamma_eff=0.01)
    gen = build_liouvillian(lam, FieldState(3.0, 3.0), zeeman_splitting(1e-3), 2.0, cfg)
    assert steady_state(gen).trace == pytest.approx(1.0, abs=1e-13)
    assert gen.sink_flux(steady_state(gen).entries) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("pumping", [0.0, 0.002])
def test_photon_bookkeeping(rb, pumping):
    # absorbed photons plus incoherent excitations balance spontaneous decay and transit loss of excited atoms
    cfg = SolverConfig(gamma_eff=0.01, pumping_rate=pumping)
    fields = FieldState(1.2 + 0.3j, 0.8 - 0.5j)
    gen = build_liouvillian(rb, fields, zeeman_splitting(0.01), 0.7, cfg)
    rho = steady_state(gen).entries
    pp, pm = polarizations(rb, rho)
    absorbed = 2 * np.imag(np.conj(fields.omega_plus) * pp + np.conj(fields.omega_minus) * pm)
    allowed = sum(np.abs(rb.raising[q]) for q in (-1, 0, 1)) > 0
    pumped = sum(pumping / 2 * rho[g, g].real for e, g in zip(*np.nonzero(allowed)))
    excited = np.trace(rho[np.ix_(rb.excited, rb.excited)]).real
    assert absorbed + pumped == pytest.approx((2 + cfg.gamma_eff) * excited, rel=1e-10)


def test_dark_state_without_relaxation(lam):
    cfg = SolverConfig(gamma_eff=0.0)
    fields = FieldState(2.0, 2.0)
    gen = build_liouvillian(lam, fields, zeeman_splitting(0.0), 0.0, cfg)
    rho = steady_state(gen).entries
    pp, pm = polarizations(lam, rho)
    assert abs(2 * np.imag(np.conj(fields.omega_plus) * pp + np.conj(fields.omega_minus) * pm)) < 1e-12
    # the dark superposition (|b-> - |b+>)/sqrt(2)
    np.testing.assert_allclose(rho[:2, :2], [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)


def test_open_scheme_without_transit_has_no_steady_state(rb):
    gen = build_liouvillian(rb, FieldState(1.0, 1.0), zeeman_splitting(0.0), 0.0, SolverConfig(gamma_eff=0.0))
    with pytest.raises(SingularSystemError):
        steady_state(gen)


def test_chirality_mirror_symmetry(rb):
    # swapping the circular components and reversing B mirrors the polarizations
    cfg = SolverConfig(gamma_eff=0.01, velocity_classes=1)
    medium = MediumParams()
    a = solve_velocity_classes(rb, medium, cfg, FieldState(1.3, 0.7), B=0.004)
    b = solve_velocity_classes(rb, medium, cfg, FieldState(0.7, 1.3), B=-0.004)
    assert a.polarization_plus == pytest.approx(b.polarization_minus, abs=1e-13)
    assert a.polarization_minus == pytest.approx(b.polarization_plus, abs=1e-13)


def test_velocity_grid():
    cfg = SolverConfig(velocity_classes=51)
    shifts, weights = cfg.velocity_grid(100.0)
    assert weights.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(shifts, -shifts[::-1], atol=1e-12)
    np.testing.assert_allclose(weights, weights[::-1], atol=1e-15)
    assert shifts[-1] == pytest.approx(400.0)
    # second moment of exp(-(v/W)^2) is W^2/2
    assert weights @ shifts**2 == pytest.approx(100.0**2 / 2, rel=1e-3)
    one = SolverConfig(velocity_classes=1).velocity_grid(100.0)
    assert one[0].tolist() == [0.0] and one[1].tolist() == [1.0]
    uniform = SolverConfig(velocity_classes=5, grid_stretch=0.0).velocity_grid(10.0)[0]
    np.testing.assert_allclose(np.diff(uniform), 20.0)


def test_velocity_grid_convergence(rb):
    medium = MediumParams(W_d=100.0)
    fields = FieldState.linear(13.0)
    coarse = solve_velocity_classes(rb, medium, SolverConfig(velocity_classes=51), fields)
    fine = solve_velocity_classes(rb, medium, SolverConfig(velocity_classes=201), fields)
    assert abs(coarse.polarization_plus - fine.polarization_plus) < 1e-3 * abs(fine.polarization_plus)


def test_doppler_average_requires_normalized_weights():
    with pytest.raises(DataError):
        doppler_average(np.ones(3), [0.5, 0.5, 0.5])
    assert doppler_average(np.array([1.0, 3.0]), [0.25, 0.75]) == pytest.approx(2.5)


def test_z_step_refinement(lam):
    medium = MediumParams(N=2e12, W_d=1.0)
    base = SolverConfig(velocity_classes=1, gamma_eff=0.004, z_steps=10)
    a = propagate(lam, medium, base, FieldState.linear(100.0))
    b = propagate(lam, medium, replace(base, z_steps=40), FieldState.linear(100.0))
    assert a.transmission == pytest.approx(b.transmission, rel=1e-6)
    assert a.dphi_dB == pytest.approx(b.dphi_dB, rel=1e-5)


def test_step_size_guard(lam):
    medium = MediumParams(N=5e12, W_d=1.0)
    cfg = SolverConfig(velocity_classes=1, gamma_eff=0.004, z_steps=2)
    with pytest.raises(StepSizeError):
        propagate(lam, medium, cfg, FieldState.linear(100.0))


def test_propagation_matches_analytic_in_doppler_free_regime(lam):
    medium = MediumParams(N=1e12, W_d=1.0)
    cfg = SolverConfig(velocity_classes=1, gamma_eff=0.004)
    got = observables(lam, medium, cfg, 100.0)
    ref = forward_observables(medium, 100.0, 0.0)
    assert got.transmission == pytest.approx(ref.transmission, rel=0.01)
    assert got.slope == pytest.approx(ref.slope, rel=0.02)


def test_slope_profile_is_monotone(lam):
    medium = MediumParams(N=1e12, W_d=1.0)
    prof = propagate(lam, medium, SolverConfig(velocity_classes=1), FieldState.linear(100.0))
    slopes = [s for _, s in prof.slope_samples]
    assert slopes[0] == 0.0
    assert all(abs(b) > abs(a) for a, b in zip(slopes, slopes[1:]))
    assert slopes[-1] == prof.dphi_dB


def test_rotation_antisymmetric_in_field(lam):
    medium = MediumParams(N=1e12, W_d=1.0)
    cfg = SolverConfig(velocity_classes=1, gamma_eff=0.004)
    field_in = FieldState.linear(100.0)
    B = 1e-4
    up = propagate(lam, medium, cfg, field_in, B, with_slope=False).samples[-1][2]
    down = propagate(lam, medium, cfg, field_in, -B, with_slope=False).samples[-1][2]
    assert up == pytest.approx(-down, abs=1e-10)
    assert propagate(lam, medium, cfg, field_in, 0.0, with_slope=False).samples[-1][2] == pytest.approx(0.0,
                                                                                                        abs=1e-12)


def test_observables_vs_density_order_and_validation(lam):
    medium = MediumParams(W_d=1.0)
    cfg = SolverConfig(velocity_classes=1)
    pts = observables_vs_density([1e11, 5e11, 1e12], medium, cfg, 100.0, lam)
    assert [p.N for p in pts] == [1e11, 5e11, 1e12]
    assert pts[0].transmission > pts[1].transmission > pts[2].transmission
    with pytest.raises(DataError):
        observables_vs_density([1e12, 1e11], medium, cfg, 100.0, lam)
    sched = observables_vs_density([1e12], medium, cfg, 100.0, lam, lambda N: 0.008)
    assert sched[0].gamma_eff == pytest.approx(0.008)


def test_max_workers_env(monkeypatch):
    monkeypatch.setenv("RADTRAP_MAX_WORKERS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("RADTRAP_MAX_WORKERS", "zero")
    with pytest.raises(DataError):
        max_workers()


def test_solver_config_validation():
    with pytest.raises(DataError):
        SolverConfig(velocity_classes=0)
    with pytest.raises(DataError):
        SolverConfig(z_steps=1)
    with pytest.raises(DataError):
        SolverConfig(gamma_eff=-1.0)


def test_auto_field_step():
    cfg = SolverConfig(gamma_eff=0.004)
    h = cfg.field_step(2 * math.pi * 2.87e6)
    assert abs(zeeman_splitting(h).delta0) == pytest.approx(0.02 * 0.004, rel=1e-12)
    assert SolverConfig(B_step=1e-5).field_step(1.0) == 1e-5
