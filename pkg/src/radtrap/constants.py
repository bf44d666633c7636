"""Physical constants and Rb-87 D1 defaults (SI unless noted)."""

import math

from scipy import constants as _sc

TWO_PI = 2.0 * math.pi

#: Bohr magneton over hbar, cyclic units (Hz per gauss).
BOHR_MAGNETON_HZ_PER_G = 1.3996e6

#: gamma_r / 2pi for the D1 line (Hz): half the natural linewidth.
GAMMA_R_HZ = 2.87e6

RB87_D1_WAVELENGTH_CM = 794.8e-7
RB87_D1_EXCITED_HFS_HZ = 814.5e6
RB87_MASS_KG = 86.909180527 * _sc.atomic_mass

# Lande factors for 5S1/2 F=2, 5P1/2 F'=1 and F'=2.
RB87_G_F2 = 0.5
RB87_G_FP1 = -1.0 / 6.0
RB87_G_FP2 = 1.0 / 6.0

BOLTZMANN = _sc.Boltzmann
TORR_TO_PA = _sc.torr


def gamma_r_angular(gamma_r_hz=GAMMA_R_HZ):
    """gamma_r in rad/s from its cyclic value."""
    return TWO_PI * gamma_r_hz


def larmor_per_gauss(gamma_r_hz=GAMMA_R_HZ, bohr_hz_per_g=BOHR_MAGNETON_HZ_PER_G):
    """mu_B B / hbar for B = 1 G, in units of gamma_r."""
    return bohr_hz_per_g / gamma_r_hz
