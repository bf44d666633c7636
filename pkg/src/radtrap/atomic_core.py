"""Level schemes and angular-momentum couplings.

All energies and rates are expressed in units of ``gamma_r``, the optical
coherence decay rate (the excited-state population decays at ``2 gamma_r``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Tuple

import numpy as np

from . import constants

GROUND = "ground"
EXCITED = "excited"
POLARIZATIONS = (-1, 0, 1)


def _twice(j) -> int:
    tj = Fraction(j) * 2
    if tj.denominator != 1:
        raise ValueError(f"{j!r} is not an integer or half-integer")
    return int(tj)


def _fact(two_n: int) -> int:
    # factorial of n given 2n; callers guarantee n is a nonnegative integer
    return math.factorial(two_n // 2)


def _triangle(ta, tb, tc) -> Fraction | None:
    s = (ta + tb - tc, ta - tb + tc, -ta + tb + tc, ta + tb + tc + 2)
    if min(s) < 0 or any(x % 2 for x in s):
        return None
    return Fraction(_fact(s[0]) * _fact(s[1]) * _fact(s[2]), _fact(s[3]))


def wigner_3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3-j symbol from the Racah sum, evaluated in exact arithmetic."""
    tj1, tj2, tj3 = _twice(j1), _twice(j2), _twice(j3)
    tm1, tm2, tm3 = _twice(m1), _twice(m2), _twice(m3)
    if tm1 + tm2 + tm3 != 0:
        return 0.0
    if any(abs(tm) > tj or (tj - tm) % 2 for tm, tj in ((tm1, tj1), (tm2, tj2), (tm3, tj3))):
        return 0.0
    delta = _triangle(tj1, tj2, tj3)
    if delta is None:
        return 0.0
    pref = delta * (
        _fact(tj1 + tm1) * _fact(tj1 - tm1) * _fact(tj2 + tm2)
        * _fact(tj2 - tm2) * _fact(tj3 + tm3) * _fact(tj3 - tm3)
    )
    # all doubled arguments below are even by construction
    kmin = max(0, tj2 - tj3 - tm1, tj1 - tj3 + tm2) // 2
    kmax = min(tj1 + tj2 - tj3, tj1 - tm1, tj2 + tm2) // 2
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        tk = 2 * k
        denom = (
            _fact(tk) * _fact(tj1 + tj2 - tj3 - tk) * _fact(tj1 - tm1 - tk)
            * _fact(tj2 + tm2 - tk) * _fact(tj3 - tj2 + tm1 + tk)
            * _fact(tj3 - tj1 - tm2 + tk)
        )
        total += Fraction((-1) ** k, denom)
    phase = -1 if ((tj1 - tj2 - tm3) // 2) % 2 else 1
    value = phase * math.sqrt(pref) * total
    return float(value)


def wigner_6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6-j symbol ``{j1 j2 j3; j4 j5 j6}`` from the Racah sum."""
    t = [_twice(j) for j in (j1, j2, j3, j4, j5, j6)]
    triads = ((t[0], t[1], t[2]), (t[0], t[4], t[5]), (t[3], t[1], t[5]), (t[3], t[4], t[2]))
    deltas = [_triangle(*tri) for tri in triads]
    if any(d is None for d in deltas):
        return 0.0
    pref = deltas[0] * deltas[1] * deltas[2] * deltas[3]
    a = [sum(tri) for tri in triads]
    b = (t[0] + t[1] + t[3] + t[4], t[1] + t[2] + t[4] + t[5], t[2] + t[0] + t[5] + t[3])
    total = Fraction(0)
    for tt in range(max(a), min(b) + 1, 2):
        num = (-1) ** (tt // 2) * _fact(tt + 2)
        den = 1
        for ai in a:
            den *= _fact(tt - ai)
        for bi in b:
            den *= _fact(bi - tt)
        total += Fraction(num, den)
    return float(math.sqrt(pref) * total)


def reduced_hyperfine_factor(J, Jp, I, F, Fp) -> float:
    """<F'||d||F> / <J'||d||J> for a dipole transition J -> J'."""
    phase = (-1) ** int(round(Jp + I + F + 1))
    return phase * math.sqrt((2 * Fp + 1) * (2 * F + 1)) * wigner_6j(Jp, Fp, I, F, J, 1)


def dipole_amplitude(J, Jp, I, F, mF, Fp, mFp, q) -> float:
    """Relative amplitude of ``<F' mF'| d_q |F mF>``.

    Normalized so that summing its square over every ground sublevel of
    both hyperfine manifolds and over ``q`` gives 1 for each excited sublevel.
    """
    if mFp - mF != q:
        return 0.0
    phase = (-1) ** int(round(Fp - mFp))
    three_j = wigner_3j(Fp, 1, F, -mFp, q, mF)
    return phase * three_j * reduced_hyperfine_factor(J, Jp, I, F, Fp) * math.sqrt(2 * Jp + 1)


@dataclass(frozen=True)
class Sublevel:
    F: int
    mF: int
    manifold: str
    energy_offset: float = 0.0
    g_factor: float = 0.0

    def __post_init__(self):
        if abs(self.mF) > self.F:
            raise ValueError(f"|mF| > F for {self}")
        if self.manifold not in (GROUND, EXCITED):
            raise ValueError(f"unknown manifold {self.manifold!r}")


@dataclass(frozen=True)
class ZeemanShift:
    """Magnetic field and the two-photon splitting it induces between |b+-> ."""

    B: float
    delta0: float


@dataclass(frozen=True, eq=False)
class LevelScheme:
    """Immutable level structure shared by the analytic and multilevel models.

    ``raising[q]`` is an ``(n, n)`` array whose ``[e, g]`` entry is the relative
    dipole amplitude for absorbing a ``q``-polarized photon ``g -> e``.
    """

    name: str
    sublevels: Tuple[Sublevel, ...]
    raising: Dict[int, np.ndarray]
    leak: np.ndarray
    gamma_r: float = constants.gamma_r_angular()
    hyperfine_splitting: float = 0.0
    closed: bool = False
    _index: Dict[Tuple[str, int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for arr in (*self.raising.values(), self.leak):
            arr.setflags(write=False)
        self._index.update({(s.manifold, s.F, s.mF): i for i, s in enumerate(self.sublevels)})

    @property
    def n(self) -> int:
        return len(self.sublevels)

    @property
    def ground(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.sublevels) if s.manifold == GROUND])

    @property
    def excited(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.sublevels) if s.manifold == EXCITED])

    def index(self, manifold: str, F: int, mF: int) -> int:
        return self._index[(manifold, F, mF)]

    def coupling(self, g: int, e: int, q: int) -> float:
        """Amplitude for ``g -> e`` with polarization ``q`` (zero if forbidden)."""
        return float(self.raising[q][e, g])

    @property
    def couplings(self) -> Dict[Tuple[int, int, int], float]:
        out = {}
        for q in POLARIZATIONS:
            for e in self.excited:
                for g in self.ground:
                    out[(int(g), int(e), q)] = float(self.raising[q][e, g])
        return out

    def branching(self) -> np.ndarray:
        """Per excited sublevel: squared amplitudes summed over modeled ground states and q."""
        total = sum(np.abs(self.raising[q]) ** 2 for q in POLARIZATIONS)
        return total.sum(axis=1)[self.excited]

    def energies(self) -> np.ndarray:
        return np.array([s.energy_offset for s in self.sublevels])

    def zeeman_shifts(self, B: float, bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G) -> np.ndarray:
        """Linear Zeeman shift ``g_F mF mu_B B / hbar`` of each sublevel, in gamma_r."""
        scale = bohr_hz_per_g * constants.TWO_PI / self.gamma_r * B
        return np.array([s.g_factor * s.mF * scale for s in self.sublevels])


def build_rb87_d1_scheme(
    hyperfine_splitting_hz: float = constants.RB87_D1_EXCITED_HFS_HZ,
    gamma_r_hz: float = constants.GAMMA_R_HZ,
    g_ground: float = constants.RB87_G_F2,
    g_fp1: float = constants.RB87_G_FP1,
    g_fp2: float = constants.RB87_G_FP2,
) -> LevelScheme:
    """The 13-sublevel F=2 -> F'=1,2 system of the Rb-87 D1 line.

    Energies are measured from the F'=1 line center. Decay into the unmodeled
    F=1 ground manifold shows up as ``leak``.
    """
    J, Jp, I = Fraction(1, 2), Fraction(1, 2), Fraction(3, 2)
    gamma_r = constants.gamma_r_angular(gamma_r_hz)
    hfs = constants.TWO_PI * hyperfine_splitting_hz / gamma_r

    levels = [Sublevel(2, m, GROUND, 0.0, g_ground) for m in range(-2, 3)]
    levels += [Sublevel(1, m, EXCITED, 0.0, g_fp1) for m in range(-1, 2)]
    levels += [Sublevel(2, m, EXCITED, hfs, g_fp2) for m in range(-2, 3)]
    n = len(levels)

    raising = {q: np.zeros((n, n)) for q in POLARIZATIONS}
    leak = []
    for e, se in enumerate(levels):
        if se.manifold != EXCITED:
            continue
        for g, sg in enumerate(levels):
            if sg.manifold != GROUND:
                continue
            q = se.mF - sg.mF
            if q in raising:
                raising[q][e, g] = dipole_amplitude(J, Jp, I, sg.F, sg.mF, se.F, se.mF, q)
        to_f1 = sum(
            dipole_amplitude(J, Jp, I, 1, m, se.F, se.mF, se.mF - m) ** 2
            for m in range(-1, 2)
            if abs(se.mF - m) <= 1
        )
        leak.append(to_f1)

    return LevelScheme(
        name="rb87_d1",
        sublevels=tuple(levels),
        raising=raising,
        leak=np.array(leak),
        gamma_r=gamma_r,
        hyperfine_splitting=hfs,
    )


def build_lambda_scheme(gamma_r_hz: float = constants.GAMMA_R_HZ) -> LevelScheme:
    """Closed three-level Lambda: |b-> and |b+> (mF = -1, +1) coupled to |a>.

    The ground Lande factor is 1, so the |b+->/|b-> splitting is ``2 mu_B B``.
    """
    levels = (
        Sublevel(1, -1, GROUND, 0.0, 1.0),
        Sublevel(1, 1, GROUND, 0.0, 1.0),
        Sublevel(0, 0, EXCITED, 0.0, 0.0),
    )
    amp = 1.0 / math.sqrt(2.0)
    raising = {q: np.zeros((3, 3)) for q in POLARIZATIONS}
    raising[1][2, 0] = amp
    raising[-1][2, 1] = amp
    return LevelScheme(
        name="lambda",
        sublevels=levels,
        raising=raising,
        leak=np.zeros(1),
        gamma_r=constants.gamma_r_angular(gamma_r_hz),
        closed=True,
    )


def zeeman_splitting(
    B: float,
    gamma_r_hz: float = constants.GAMMA_R_HZ,
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> ZeemanShift:
    """``delta0 = -2 mu_B B / hbar`` in units of gamma_r, for ``B`` in gauss."""
    if not math.isfinite(B):
        raise ValueError("B must be finite")
    return ZeemanShift(B=B, delta0=-2.0 * bohr_hz_per_g * B / gamma_r_hz)
