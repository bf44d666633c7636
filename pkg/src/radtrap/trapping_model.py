"""Two-level radiation-trapping rate model.

Reabsorbed spontaneous photons are treated as a thermal reservoir with mean
occupation ``n_th``. They pump ground-state atoms incoherently at
``R = 2 gamma_r n_th``. The trapping strength is summarized by ``f(N)``
through ``r_a / r_e = f / (1 + f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import constants
from .errors import DataError, InvalidStateError
from .medium import MediumParams


@dataclass(frozen=True)
class ReservoirState:
    n_th: float
    rho_aa: float

    def __post_init__(self):
        if not (0.0 <= self.rho_aa <= 1.0):
            raise InvalidStateError(f"rho_aa={self.rho_aa!r} outside [0, 1]")
        if not self.n_th >= 0.0:
            raise InvalidStateError(f"n_th={self.n_th!r} is negative")

    @property
    def rho_bb(self) -> float:
        return 1.0 - self.rho_aa


@dataclass(frozen=True)
class TrappingModel:
    """Piecewise-linear/power-law trapping function and photon escape rate.

    ``f(N) = slope_low * max(0, N - n_threshold) / density_scale
    + slope_high * (max(0, N - n_beam) / density_scale) ** exponent``

    The first term is reabsorption on the scale of the cell, the second on
    the scale of the laser beam.
    """

    n_threshold: float = 5e10
    n_beam: float = 5e11
    slope_low: float = 0.4
    slope_high: float = 0.4
    exponent: float = 1.0
    density_scale: float = 1e12
    r_e: float = 1.0

    def __post_init__(self):
        if min(self.n_threshold, self.n_beam, self.slope_low, self.slope_high) < 0:
            raise DataError("trapping parameters must be nonnegative")
        if self.exponent <= 0 or self.density_scale <= 0 or self.r_e <= 0:
            raise DataError("exponent, density_scale and r_e must be positive")

    def f(self, N):
        return f_of_N(N, self)

    def r_a(self, N) -> float:
        """Reabsorption pumping rate implied by ``f(N)`` at the model's escape rate."""
        fv = self.f(N)
        return self.r_e * fv / (1.0 + fv)


@dataclass(frozen=True)
class ThresholdReport:
    N: float
    optical_depth: float
    trapped: bool
    length: float


def reservoir_rhs(state: ReservoirState, gamma_r: float, r_e: float, r_a: float, drive: float = 0.0):
    """Time derivatives ``(d rho_aa/dt, d n_th/dt)``.

    ``drive`` is an optional external excitation rate of ground atoms; it is
    zero in the bare reservoir model.
    """
    if min(gamma_r, r_e) <= 0 or r_a < 0 or drive < 0:
        raise DataError("rates must be positive")
    n, rho_aa, rho_bb = state.n_th, state.rho_aa, state.rho_bb
    d_rho = -2.0 * gamma_r * (n + 1.0) * rho_aa + 2.0 * gamma_r * n * rho_bb + drive * rho_bb
    d_n = -r_e * n + r_a * rho_aa
    return d_rho, d_n


def steady_n_th(rho_aa: float, r_e: float, r_a: float) -> float:
    """Steady reservoir occupation ``r_a rho_aa / r_e``."""
    if r_e == 0:
        raise ZeroDivisionError("photon escape rate r_e is zero")
    if r_e < 0 or r_a < 0:
        raise DataError("rates must be nonnegative")
    return r_a * rho_aa / r_e


def excited_population_for(n_th: float) -> float:
    """Steady ``rho_aa`` of the two-level atom in a reservoir held at ``n_th``."""
    return n_th / (2.0 * n_th + 1.0)


def reservoir_steady_state(gamma_r: float, r_e: float, r_a: float, drive: float = 0.0) -> ReservoirState:
    """Fixed point of :func:`reservoir_rhs`.

    Without drive the only physical fixed point is the empty reservoir. With a
    drive ``W`` the excited population solves
    ``4k x^2 + (2 + w - 2k) x - w = 0`` with ``k = r_a/r_e``, ``w = W/gamma_r``.
    """
    if r_e <= r_a:
        raise DataError("steady state requires r_e > r_a")
    k = r_a / r_e
    w = drive / gamma_r
    b = 2.0 + w - 2.0 * k
    if k == 0.0:
        x = w / b
    else:
        # numerically stable root of the quadratic (c < 0 so the roots differ in sign)
        x = 2.0 * w / (b + math.sqrt(b * b + 16.0 * k * w))
    return ReservoirState(n_th=k * x, rho_aa=x)


def pumping_rate_from_gradient(intensity_gradient: float, kappa: float, f: float) -> float:
    """Incoherent pumping rate from the local intensity loss, ``-(1/kappa) f/(1+f) dI/dz``."""
    if kappa <= 0:
        raise DataError("kappa must be positive")
    if f < 0:
        raise DataError("trapping function value must be nonnegative")
    if intensity_gradient > 0:
        raise DataError("positive intensity gradient (gain) is outside the model")
    return -(f / (1.0 + f)) * intensity_gradient / kappa


def f_of_N(N, model: TrappingModel = TrappingModel()):
    """Trapping function; accepts scalars or arrays of densities (cm^-3)."""
    arr = np.asarray(N, dtype=float)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise DataError("density must be finite and nonnegative")
    low = np.maximum(0.0, arr - model.n_threshold) / model.density_scale
    high = np.maximum(0.0, arr - model.n_beam) / model.density_scale
    out = model.slope_low * low + model.slope_high * high**model.exponent
    return float(out) if np.ndim(out) == 0 else out


def optical_thickness_threshold(medium: MediumParams, length: float | None = None) -> ThresholdReport:
    """Reabsorption optical depth ``(3/8pi) N lambda^2 l gamma_r / W_d``.

    ``length`` defaults to the beam diameter ``medium.d``.
    """
    ell = medium.d if length is None else length
    if ell <= 0:
        raise DataError("length scale must be positive")
    depth = medium.kappa * ell / medium.W_d
    return ThresholdReport(N=medium.N, optical_depth=depth, trapped=depth > 1.0, length=ell)


def threshold_density(medium: MediumParams, length: float | None = None) -> float:
    """Density at which the reabsorption optical depth reaches one."""
    ell = medium.d if length is None else length
    return 8.0 * math.pi * medium.W_d / (3.0 * medium.wavelength**2 * ell)


def rb_vapor_pressure(T: float) -> float:
    """Saturated Rb vapor pressure in Pa (solid below 312.46 K, liquid above)."""
    if T < 312.46:
        log_p = -94.04826 - 1961.258 / T - 0.03771687 * T + 42.57526 * math.log10(T)
    else:
        log_p = 15.88253 - 4529.635 / T + 0.00058663 * T - 2.99138 * math.log10(T)
    return 10.0**log_p * constants.TORR_TO_PA


def rb_vapor_density(T: float) -> float:
    """Saturated number density in cm^-3 at temperature ``T`` (K)."""
    return rb_vapor_pressure(T) / (constants.BOLTZMANN * T) * 1e-6


def rb_vapor_temperature(N: float) -> float:
    """Cell temperature giving saturated density ``N``."""
    if N <= 0:
        raise DataError("density must be positive to infer a temperature")
    return brentq(lambda T: math.log(rb_vapor_density(T) / N), 200.0, 800.0, xtol=1e-9)


def mean_relative_speed(T: float, mass: float = constants.RB87_MASS_KG) -> float:
    """Mean relative speed of two like atoms, ``sqrt(16 k T / (pi m))``, in cm/s."""
    return math.sqrt(16.0 * constants.BOLTZMANN * T / (math.pi * mass)) * 100.0


def spin_exchange_decay(
    N: float,
    cross_section: float,
    relative_speed: float | None = None,
    gamma_r: float = constants.gamma_r_angular(),
) -> float:
    """Collisional coherence loss ``N sigma v`` in units of gamma_r.

    When ``relative_speed`` is omitted it is taken from the vapor temperature
    that produces density ``N``.
    """
    if N < 0 or cross_section <= 0:
        raise DataError("density and cross section must be positive")
    if N == 0:
        return 0.0
    if relative_speed is None:
        relative_speed = mean_relative_speed(rb_vapor_temperature(N))
    if relative_speed <= 0:
        raise DataError("relative speed must be positive")
    return N * cross_section * relative_speed / gamma_r
