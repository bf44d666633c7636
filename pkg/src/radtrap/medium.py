"""Vapor-cell medium parameters shared by the analytic and numerical models."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from . import constants
from .errors import DataError


@dataclass(frozen=True)
class MediumParams:
    """Physical parameters of the vapor cell.

    Rates ``gamma_0`` and ``W_d`` are in units of gamma_r; ``gamma_r`` itself is
    kept in rad/s for conversions. Lengths in cm, density in cm^-3.
    """

    N: float = 1e12
    wavelength: float = constants.RB87_D1_WAVELENGTH_CM
    gamma_r: float = constants.gamma_r_angular()
    gamma_0: float = 0.004
    W_d: float = 100.0
    L: float = 5.0
    d: float = 0.2
    D: float = 2.5

    def __post_init__(self):
        for name in ("wavelength", "gamma_r", "W_d", "L", "d", "D"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DataError(f"medium parameter {name} must be positive, got {value!r}")
        if not (self.N >= 0 and math.isfinite(self.N)):
            raise DataError(f"density must be nonnegative, got {self.N!r}")
        if not (self.gamma_0 >= 0 and math.isfinite(self.gamma_0)):
            raise DataError(f"gamma_0 must be nonnegative, got {self.gamma_0!r}")

    @property
    def kappa(self) -> float:
        """Absorption parameter (3/8pi) N lambda^2 gamma_r, in gamma_r per cm."""
        return 3.0 / (8.0 * math.pi) * self.N * self.wavelength**2

    def with_density(self, N: float) -> "MediumParams":
        return replace(self, N=N)


@dataclass(frozen=True)
class ObservablePoint:
    """One density point: transmission, rotation slope (rad/G) and, once known, gamma_0 + R."""

    N: float
    transmission: float
    slope: float
    gamma_eff: float | None = None

    def __post_init__(self):
        if not (0.0 < self.transmission <= 1.0):
            raise DataError(f"transmission {self.transmission!r} outside (0, 1]")
        if not math.isfinite(self.slope):
            raise DataError("rotation slope must be finite")
        if self.gamma_eff is not None and not self.gamma_eff > 0:
            raise DataError("gamma_eff must be positive when present")
