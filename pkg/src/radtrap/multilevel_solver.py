"""Steady-state density matrices of a Doppler-broadened multilevel atom and
z-stepped propagation of the two circular field components.

Conventions
-----------
* Rates and energies in units of gamma_r; the excited population decays at
  ``2 gamma_r`` and optical coherences at ``gamma_r``.
* ``H = E - sum_q (Omega_q D_q + h.c.)`` in the frame rotating at the laser
  frequency, where ``D_q`` is the scheme's raising operator for polarization ``q``.
  ``Omega_+`` drives ``q=+1`` and ``Omega_-`` drives ``q=-1``.
* Density matrices are vectorized row-major, so ``vec(A rho B) = kron(A, B.T) vec(rho)``.
* The medium polarization ``P_q = sum_{e,g} D_q[e,g] rho[e,g]`` drives
  ``dOmega_q/dz = i kappa P_q``. With this normalization the local intensity
  loss is ``kappa`` times the photon absorption rate per atom.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse import csr_matrix

from . import constants
from .atomic_core import LevelScheme, ZeemanShift, zeeman_splitting
from .errors import DataError, SingularSystemError, StepSizeError
from .lambda_propagation import FieldState, PropagationProfile
from .medium import MediumParams, ObservablePoint

RESIDUAL_TOL = 1e-10
WORKERS_ENV = "RADTRAP_MAX_WORKERS"


def max_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise DataError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the multilevel model.

    ``gamma_eff`` is the transit rate: every density-matrix element decays at
    this rate while fresh atoms refill the modeled ground sublevels equally.
    ``pumping_rate`` adds isotropic incoherent excitation on top of it.
    ``B_step=None`` picks the field step so that ``|delta0| = 0.02 gamma_eff``.
    """

    velocity_classes: int = 101
    velocity_span: float = 4.0
    grid_stretch: float = 3.0
    z_steps: int = 20
    B_step: Optional[float] = None
    laser_detuning: float = 0.0
    gamma_eff: float = 0.004
    pumping_rate: float = 0.0
    max_step_change: float = 0.1
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G

    def __post_init__(self):
        if self.velocity_classes < 1:
            raise DataError("need at least one velocity class")
        if self.z_steps < 2:
            raise DataError("z_steps must be at least 2")
        if self.gamma_eff < 0 or self.pumping_rate < 0:
            raise DataError("negative rates are not allowed")
        if self.velocity_span <= 0 or self.grid_stretch < 0:
            raise DataError("velocity grid span must be positive and stretch nonnegative")

    def velocity_grid(self, W_d: float):
        """Velocity-class detuning shifts (gamma_r) and normalized Gaussian weights.

        Nodes follow ``span W_d sinh(a t) / sinh(a)`` for uniform ``t`` in
        [-1, 1], which packs classes near zero velocity where the
        power-broadened resonances live. ``a = grid_stretch``; 0 gives a uniform grid.
        """
        n = self.velocity_classes
        if n == 1 or W_d == 0:
            return np.zeros(1), np.ones(1)
        t = np.linspace(-1.0, 1.0, n)
        a = self.grid_stretch
        half = self.velocity_span * W_d
        if a == 0:
            shifts = half * t
            jac = np.full(n, half)
        else:
            shifts = half * np.sinh(a * t) / math.sinh(a)
            jac = half * a * np.cosh(a * t) / math.sinh(a)
        quad = np.full(n, 2.0 / (n - 1))
        quad[[0, -1]] *= 0.5
        weights = np.exp(-((shifts / W_d) ** 2)) * jac * quad
        return shifts, weights / weights.sum()

    def field_step(self, gamma_r: float) -> float:
        if self.B_step is not None:
            return self.B_step
        larmor = self.bohr_hz_per_g * constants.TWO_PI / gamma_r
        target = 0.02 * (self.gamma_eff if self.gamma_eff > 0 else 1e-3)
        return target / (2.0 * larmor)


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T)).min())


@dataclass(frozen=True)
class SteadyStateResult:
    rho: np.ndarray
    polarization_plus: complex
    polarization_minus: complex
    weights: np.ndarray

    def density_matrices(self) -> List[DensityMatrix]:
        return [DensityMatrix(r) for r in self.rho]


class Liouvillian:
    """Linear generator acting on row-major vectorized ``n x n`` matrices.

    ``matrix`` excludes any velocity shift; ``velocity_diag`` is the diagonal
    added per unit of velocity detuning. ``source`` is the constant
    repopulation term, so the master equation reads
    ``d vec(rho)/dt = matrix @ vec(rho) + source``.
    """

    def __init__(self, scheme, matrix, velocity_diag, source, jump_ops, excited_decay, transit):
        self.scheme = scheme
        self.n = scheme.n
        self.matrix = matrix
        self.velocity_diag = velocity_diag
        self.source = source
        self._jumps = jump_ops
        self._excited_decay = excited_decay
        self.transit = transit

    def at_velocity(self, shift: float) -> np.ndarray:
        out = self.matrix.copy()
        out[np.diag_indices_from(out)] += shift * self.velocity_diag
        return out

    def apply(self, rho: np.ndarray, shift: float = 0.0) -> np.ndarray:
        vec = self.at_velocity(shift) @ np.asarray(rho).reshape(-1)
        return vec.reshape(self.n, self.n)

    def sink_flux(self, rho: np.ndarray) -> float:
        """Rate at which probability leaves the modeled states by decay to unmodeled levels."""
        rho = np.asarray(rho)
        total = float(np.real(np.trace(self._excited_decay @ rho)))
        recycled = sum(float(np.real(np.trace(C @ rho @ C.conj().T))) for C in self._jumps)
        return total - recycled


def _superop_left(A, n):
    return np.kron(A, np.eye(n))


def _superop_right(B, n):
    return np.kron(np.eye(n), B.T)


def _lindblad(C, n):
    CdC = C.conj().T @ C
    return np.kron(C, C.conj()) - 0.5 * _superop_left(CdC, n) - 0.5 * _superop_right(CdC, n)


def hamiltonian(scheme: LevelScheme, fields: FieldState, shift: ZeemanShift, laser_detuning: float = 0.0,
                bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G) -> np.ndarray:
    """Rotating-frame Hamiltonian without the velocity shift (gamma_r units)."""
    n = scheme.n
    diag = scheme.energies() + scheme.zeeman_shifts(shift.B, bohr_hz_per_g)
    diag[scheme.excited] -= laser_detuning
    H = np.diag(diag).astype(complex)
    for omega, q in ((fields.omega_plus, 1), (fields.omega_minus, -1)):
        V = omega * scheme.raising[q]
        H -= V + V.conj().T
    return H


def build_liouvillian(scheme: LevelScheme, fields: FieldState, shift: ZeemanShift, velocity_detuning: float = 0.0,
                      config: SolverConfig = SolverConfig()) -> Liouvillian:
    """Master-equation generator for one velocity class.

    Includes coherent driving, radiative decay with branching (decay into
    unmodeled ground levels is lost), transit relaxation with ground
    repopulation, and optional isotropic incoherent pumping.
    """
    n = scheme.n
    if config.gamma_eff < 0 or config.pumping_rate < 0:
        raise DataError("negative rates are not allowed")
    H = hamiltonian(scheme, fields, shift, config.laser_detuning, config.bohr_hz_per_g)
    exc = np.zeros((n, n))
    exc[scheme.excited, scheme.excited] = 1.0

    L = -1j * (_superop_left(H, n) - _superop_right(H, n))
    jumps = []
    for q in (-1, 0, 1):
        C = math.sqrt(2.0) * scheme.raising[q].T
        if np.any(C):
            jumps.append(C)
            L += np.kron(C, C.conj())
    excited_decay = 2.0 * exc
    # completeness over all ground levels makes the total emission operator 2*gamma_r on the excited manifold
    L -= 0.5 * (_superop_left(excited_decay, n) + _superop_right(excited_decay, n))

    if config.pumping_rate > 0:
        rate = math.sqrt(config.pumping_rate / 2.0)
        allowed = sum(np.abs(scheme.raising[q]) for q in (-1, 0, 1)) > 0
        for e, g in zip(*np.nonzero(allowed)):
            J = np.zeros((n, n))
            J[e, g] = rate
            L += _lindblad(J, n)

    L -= config.gamma_eff * np.eye(n * n)
    source = np.zeros((n, n), dtype=complex)
    ground = scheme.ground
    source[ground, ground] = config.gamma_eff / len(ground)

    vdiag = -1j * (_superop_left(-exc, n) - _superop_right(-exc, n))
    vdiag = np.diag(vdiag).copy()
    gen = Liouvillian(scheme, L, vdiag, source.reshape(-1), jumps, excited_decay, config.gamma_eff)
    if velocity_detuning:
        gen.matrix = gen.at_velocity(velocity_detuning)
    return gen


def _reachable(matrix: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Indices reachable from ``seeds`` along nonzero generator entries (j -> i if M[i, j] != 0)."""
    adjacency = csr_matrix((np.abs(matrix) > 0).T.astype(np.int8))
    seen = np.zeros(matrix.shape[0], dtype=bool)
    for s in seeds:
        if not seen[s]:
            seen[breadth_first_order(adjacency, int(s), directed=True, return_predecessors=False)] = True
    return np.flatnonzero(seen)


def _structural_support(scheme: LevelScheme, config: SolverConfig) -> np.ndarray:
    """Invariant subspace containing every steady state for generic fields and field strength."""
    generic = FieldState(0.83 + 0.41j, 0.57 - 0.29j)
    probe = replace(config, gamma_eff=max(config.gamma_eff, 1.0))
    gen = build_liouvillian(scheme, generic, ZeemanShift(B=0.37, delta0=0.0), 0.0, probe)
    matrix = gen.matrix.copy()
    matrix[np.diag_indices_from(matrix)] += gen.velocity_diag
    n = scheme.n
    seeds = np.array([g * n + g for g in scheme.ground])
    return _reachable(matrix, seeds)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())


def _solve_classes(gen: Liouvillian, shifts: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Steady states for a batch of velocity shifts, restricted to ``support``."""
    n = gen.n
    sub = gen.matrix[np.ix_(support, support)]
    vdiag = gen.velocity_diag[support]
    A = np.broadcast_to(sub, (len(shifts),) + sub.shape).copy()
    idx = np.arange(len(support))
    A[:, idx, idx] += shifts[:, None] * vdiag[None, :]
    b = -gen.source[support]
    try:
        x = np.linalg.solve(A, np.broadcast_to(b, (len(shifts), len(b)))[..., None])[..., 0]
    except np.linalg.LinAlgError:
        cond = float(np.max(np.linalg.cond(A)))
        raise SingularSystemError("steady-state system is singular", cond) from None
    full = np.zeros((len(shifts), n * n), dtype=complex)
    full[:, support] = x
    rho = _hermitize(full.reshape(-1, n, n))
    flat = rho.reshape(len(shifts), -1)
    residual = np.einsum("kij,kj->ki", A, flat[:, support]) - b
    worst = float(np.max(np.abs(residual))) if residual.size else 0.0
    if worst > RESIDUAL_TOL:
        cond = float(np.max(np.linalg.cond(A)))
        raise SingularSystemError(f"steady-state residual {worst:.2e} exceeds {RESIDUAL_TOL:g}", cond)
    return rho


def steady_state(generator: Liouvillian, source: Optional[np.ndarray] = None) -> DensityMatrix:
    """Solve ``generator(rho) + source = 0``.

    Without a source (no transit refill) the fixed point is taken in the
    trace-one sector of the generator's null space.
    """
    n = generator.n
    src = generator.source if source is None else np.asarray(source, dtype=complex).reshape(-1)
    M = generator.matrix
    if np.any(src):
        seeds = np.flatnonzero(src)
        support = _reachable(M, seeds)
        sub = M[np.ix_(support, support)]
        rhs = -src[support]
    else:
        seeds = np.array([g * n + g for g in generator.scheme.ground])
        support = _reachable(M, seeds)
        sub = M[np.ix_(support, support)].copy()
        diag_pos = [k for k, i in enumerate(support) if i // n == i % n]
        sub[0, :] = 0.0
        sub[0, diag_pos] = 1.0
        rhs = np.zeros(len(support), dtype=complex)
        rhs[0] = 1.0
    try:
        x = np.linalg.solve(sub, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError("steady-state system is singular", float(np.linalg.cond(sub))) from None
    full = np.zeros(n * n, dtype=complex)
    full[support] = x
    rho = _hermitize(full.reshape(n, n))
    residual = float(np.max(np.abs(M @ rho.reshape(-1) + src)))
    if residual > RESIDUAL_TOL:
        raise SingularSystemError(
            f"steady-state residual {residual:.2e} exceeds {RESIDUAL_TOL:g}; no unique fixed point",
            float(np.linalg.cond(sub)),
        )
    return DensityMatrix(rho)


def polarizations(scheme: LevelScheme, rho: np.ndarray):
    """``(P_+, P_-)`` for one matrix or a stack of matrices."""
    rho = np.asarray(rho)
    p_plus = np.einsum("eg,...eg->...", scheme.raising[1], rho)
    p_minus = np.einsum("eg,...eg->...", scheme.raising[-1], rho)
    return p_plus, p_minus


def doppler_average(per_class, weights) -> np.ndarray:
    """Weighted sum over velocity classes along the first axis."""
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-10:
        raise DataError("velocity-class weights must sum to one")
    return np.tensordot(weights, np.asarray(per_class), axes=(0, 0))


class _ClassSolver:
    """Caches the field-independent parts of the generator for one propagation run."""

    def __init__(self, scheme: LevelScheme, medium: MediumParams, config: SolverConfig, B: float):
        self.scheme = scheme
        self.config = config
        self.shift = ZeemanShift(B=B, delta0=zeeman_splitting(B, medium.gamma_r / constants.TWO_PI,
                                                               config.bohr_hz_per_g).delta0)
        self.shifts, self.weights = config.velocity_grid(medium.W_d)
        self.support = _structural_support(scheme, config)
        zero = build_liouvillian(scheme, FieldState(0j, 0j), self.shift, 0.0, config)
        self.base = zero
        n = scheme.n
        self._field_parts = {}
        for q in (1, -1):
            D = scheme.raising[q].astype(complex)
            # coherent coupling is linear in Omega_q and conj(Omega_q)
            V = -D
            part = -1j * (_superop_left(V, n) - _superop_right(V, n))
            part_c = -1j * (_superop_left(V.conj().T, n) - _superop_right(V.conj().T, n))
            self._field_parts[q] = (part, part_c)

    def generator(self, omega_plus: complex, omega_minus: complex) -> Liouvillian:
        gen = self.base
        matrix = gen.matrix.copy()
        for omega, q in ((omega_plus, 1), (omega_minus, -1)):
            part, part_c = self._field_parts[q]
            matrix += omega * part + np.conj(omega) * part_c
        return Liouvillian(gen.scheme, matrix, gen.velocity_diag, gen.source, gen._jumps, gen._excited_decay,
                           gen.transit)

    def solve(self, omega_plus: complex, omega_minus: complex) -> SteadyStateResult:
        gen = self.generator(omega_plus, omega_minus)
        rho = _solve_classes(gen, self.shifts, self.support)
        p_plus, p_minus = polarizations(self.scheme, rho)
        return SteadyStateResult(
            rho=rho,
            polarization_plus=complex(doppler_average(p_plus, self.weights)),
            polarization_minus=complex(doppler_average(p_minus, self.weights)),
            weights=self.weights,
        )


def solve_velocity_classes(scheme: LevelScheme, medium: MediumParams, config: SolverConfig,
                           fields: FieldState, B: float = 0.0) -> SteadyStateResult:
    """Steady states over the velocity grid and the Doppler-averaged polarizations."""
    return _ClassSolver(scheme, medium, config, B).solve(fields.omega_plus, fields.omega_minus)


def _run(scheme, medium, config, field_in: FieldState, B: float):
    solver = _ClassSolver(scheme, medium, config, B)
    kappa = medium.kappa
    dz = medium.L / config.z_steps
    y = np.array([field_in.omega_plus, field_in.omega_minus], dtype=complex)

    def rhs(state):
        res = solver.solve(state[0], state[1])
        return 1j * kappa * np.array([res.polarization_plus, res.polarization_minus])

    phase0 = np.angle(y[1]) - np.angle(y[0])
    samples = [(0.0, float(np.sum(np.abs(y) ** 2)), 0.0)]
    for k in range(config.z_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dz * k1)
        k3 = rhs(y + 0.5 * dz * k2)
        k4 = rhs(y + dz * k3)
        y_new = y + dz / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        before = np.sum(np.abs(y) ** 2)
        after = np.sum(np.abs(y_new) ** 2)
        if abs(after - before) > config.max_step_change * before:
            raise StepSizeError(
                f"intensity changed by {abs(after - before) / before:.1%} in one z step; increase z_steps"
            )
        y = y_new
        rel = np.angle(y[1] * np.conj(y[0]) * np.exp(-1j * phase0))
        prev = samples[-1][2]
        # unwrap against the previous sample
        rel = prev + math.remainder(rel - prev, 2 * math.pi)
        samples.append(((k + 1) * dz, float(after), float(rel)))
    return samples


def propagate(scheme: LevelScheme, medium: MediumParams, config: SolverConfig, field_in: FieldState,
              B: float = 0.0, with_slope: bool = True) -> PropagationProfile:
    """Propagate both circular components through the cell with RK4 in z.

    The rotation slope is the central difference of the exit phase at
    ``B +- B_step``; it is signed (chirality preserved).
    """
    if field_in.intensity <= 0:
        raise DataError("input intensity must be positive")
    samples = _run(scheme, medium, config, field_in, B)
    transmission = samples[-1][1] / samples[0][1]
    slope = math.nan
    slope_samples = ()
    if with_slope:
        h = config.field_step(medium.gamma_r)
        up = _run(scheme, medium, config, field_in, B + h)
        down = _run(scheme, medium, config, field_in, B - h)
        slope_samples = tuple((u[0], (u[2] - d[2]) / (2.0 * h)) for u, d in zip(up, down))
        slope = slope_samples[-1][1]
    return PropagationProfile(tuple(samples), transmission, slope, slope_samples)


def observables(scheme: LevelScheme, medium: MediumParams, config: SolverConfig, omega0_sq: float) -> ObservablePoint:
    """Transmission and |dphi/dB| at zero field for a linearly polarized input."""
    profile = propagate(scheme, medium, config, FieldState.linear(omega0_sq), 0.0)
    gamma_eff = config.gamma_eff + config.pumping_rate
    return ObservablePoint(
        medium.N,
        min(profile.transmission, 1.0),
        abs(profile.dphi_dB),
        gamma_eff if gamma_eff > 0 else None,
    )


def observables_vs_density(
    densities: Sequence[float],
    medium: MediumParams,
    config: SolverConfig,
    omega0_sq: float,
    scheme: LevelScheme,
    gamma_eff_schedule: Optional[Callable[[float], float]] = None,
) -> List[ObservablePoint]:
    """One observable point per density, in input order.

    ``gamma_eff_schedule`` maps density to the transit rate; by default the
    configured constant is used.
    """
    densities = list(densities)
    if any(N <= 0 for N in densities):
        raise DataError("densities must be positive")
    if any(b < a for a, b in zip(densities, densities[1:])):
        raise DataError("densities must be ascending")

    def one(N):
        cfg = config if gamma_eff_schedule is None else replace(config, gamma_eff=float(gamma_eff_schedule(N)))
        return observables(scheme, medium.with_density(N), cfg, omega0_sq)

    workers = min(max_workers(), len(densities)) or 1
    if workers == 1:
        return [one(N) for N in densities]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, densities))
