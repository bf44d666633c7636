"""Closed-form propagation through a coherently prepared Lambda medium.

In the Doppler-free EIT regime the total intensity ``|Omega|^2`` decays
linearly, ``d|Omega|^2/dz = -kappa (gamma_0 + R)``, and the relative phase of
the circular components grows as ``dphi/dz = delta0 kappa / |Omega|^2``.
With ``R = f gamma_0`` both integrate in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import constants
from .errors import BleachedMediumError, DataError, ZeroDecayError
from .medium import MediumParams, ObservablePoint

#: Upper edge of the band in which the Doppler-free condition is flagged as marginal.
MARGIN_WARNING_BAND = 3.0


@dataclass(frozen=True)
class FieldState:
    omega_plus: complex
    omega_minus: complex
    z: float = 0.0

    @property
    def intensity(self) -> float:
        return abs(self.omega_plus) ** 2 + abs(self.omega_minus) ** 2

    @property
    def phase(self) -> float:
        """Relative phase ``phi_- - phi_+``."""
        return float(np.angle(self.omega_minus) - np.angle(self.omega_plus))

    @classmethod
    def linear(cls, omega0_sq: float, z: float = 0.0) -> "FieldState":
        """Equal circular components carrying total intensity ``omega0_sq``."""
        amp = math.sqrt(omega0_sq / 2.0)
        return cls(complex(amp), complex(amp), z)


@dataclass(frozen=True)
class PropagationProfile:
    samples: Tuple[Tuple[float, float, float], ...]
    transmission: float
    dphi_dB: float
    #: optional z-resolved rotation slope, ``(z, dphi/dB)`` pairs
    slope_samples: Tuple[Tuple[float, float], ...] = ()


@dataclass(frozen=True)
class DopplerFreeCheck:
    valid: bool
    margin: float
    boundary: float


def rotation_constant(medium: MediumParams, bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G) -> float:
    """``2 mu_B / hbar`` per gauss, in units of gamma_r."""
    return 2.0 * bohr_hz_per_g * constants.TWO_PI / medium.gamma_r


def _absorbed_fraction(medium: MediumParams, omega0_sq: float, f: float, z: float) -> float:
    return medium.gamma_0 * medium.kappa * z * (1.0 + f) / omega0_sq


def propagate_closed_form(medium: MediumParams, omega0_sq: float, f: float, z: float) -> float:
    """Total intensity ``|Omega(z)|^2`` (gamma_r^2)."""
    if omega0_sq <= 0:
        raise DataError("input intensity must be positive")
    if f < 0:
        raise DataError("trapping function value must be nonnegative")
    if not (0.0 <= z <= medium.L * (1.0 + 1e-12)):
        raise DataError(f"z={z!r} outside the cell [0, {medium.L}]")
    x = _absorbed_fraction(medium, omega0_sq, f, z)
    if x >= 1.0:
        raise BleachedMediumError(
            f"linear intensity profile reaches zero before z={z} cm (absorbed fraction {x:.3g})"
        )
    return omega0_sq * (1.0 - x)


def rotation_slope(
    medium: MediumParams,
    transmission: float,
    f: float,
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> float:
    """Small-field rotation slope ``dphi/dB`` (rad/G), reported as a magnitude."""
    if not (0.0 < transmission <= 1.0):
        raise DataError(f"transmission {transmission!r} outside (0, 1]")
    if transmission == 1.0:
        return 0.0
    gamma_eff = medium.gamma_0 * (1.0 + f)
    if gamma_eff == 0.0:
        raise ZeroDecayError("zero coherence decay is inconsistent with transmission < 1")
    return rotation_constant(medium, bohr_hz_per_g) / gamma_eff * -math.log(transmission)


def doppler_free_predicate(medium: MediumParams, omega_sq_min: float, margin_factor: float = 1.0) -> DopplerFreeCheck:
    """Check ``min|Omega| >= c W_d sqrt(gamma_0/gamma_r)`` along the cell.

    ``margin`` is ``min|Omega|`` divided by the boundary Rabi frequency.
    """
    if omega_sq_min <= 0 or margin_factor <= 0:
        raise DataError("intensity and margin factor must be positive")
    boundary = medium.W_d * math.sqrt(medium.gamma_0)
    if boundary == 0.0:
        return DopplerFreeCheck(True, math.inf, 0.0)
    margin = math.sqrt(omega_sq_min) / boundary
    valid = margin >= margin_factor
    if valid and margin < MARGIN_WARNING_BAND * margin_factor:
        warnings.warn(
            f"Doppler-free condition holds only marginally (margin {margin:.2f})",
            RuntimeWarning,
            stacklevel=2,
        )
    return DopplerFreeCheck(valid, margin, boundary)


def phase_closed_form(
    medium: MediumParams,
    omega0_sq: float,
    f: float,
    z: float,
    B: float,
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> float:
    """Accumulated relative phase at ``z`` for field ``B`` (magnitude convention)."""
    larmor = rotation_constant(medium, bohr_hz_per_g) * B
    gamma_eff = medium.gamma_0 * (1.0 + f)
    x = _absorbed_fraction(medium, omega0_sq, f, z)
    if x >= 1.0:
        raise BleachedMediumError(f"linear intensity profile reaches zero before z={z} cm")
    if gamma_eff == 0.0:
        return larmor * medium.kappa * z / omega0_sq
    return larmor / gamma_eff * -math.log1p(-x)


def analytic_profile(
    medium: MediumParams,
    omega0_sq: float,
    f: float,
    n_samples: int = 51,
    B: float = 1e-3,
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> PropagationProfile:
    """Sampled ``(z, |Omega|^2, phi)`` along the cell plus the end-point observables."""
    zs = np.linspace(0.0, medium.L, n_samples)
    samples: List[Tuple[float, float, float]] = []
    for z in zs:
        intensity = propagate_closed_form(medium, omega0_sq, f, float(z))
        phi = phase_closed_form(medium, omega0_sq, f, float(z), B, bohr_hz_per_g)
        samples.append((float(z), intensity, phi))
    point = forward_observables(medium, omega0_sq, f, bohr_hz_per_g)
    return PropagationProfile(tuple(samples), point.transmission, point.slope)


def forward_observables(
    medium: MediumParams,
    omega0_sq: float,
    f: float,
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> ObservablePoint:
    """Transmission and rotation slope at the cell exit for trapping value ``f``."""
    out = propagate_closed_form(medium, omega0_sq, f, medium.L)
    transmission = out / omega0_sq
    gamma_eff = medium.gamma_0 * (1.0 + f)
    if gamma_eff == 0.0:
        # lossless limit of ln(1/T)/gamma_eff
        slope = rotation_constant(medium, bohr_hz_per_g) * medium.kappa * medium.L / omega0_sq
        return ObservablePoint(medium.N, transmission, slope)
    slope = rotation_slope(medium, transmission, f, bohr_hz_per_g)
    return ObservablePoint(medium.N, transmission, slope, gamma_eff)
