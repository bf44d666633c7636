"""Turn transmission/rotation observables into coherence decay rates.

Two routes are provided: the closed-form inversion ``gamma_0 + R =
(2 mu_B/hbar) ln(1/T) / slope`` and a root-find that matches the multilevel
simulation to each data point with the decay rate as the only free parameter.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from . import constants
from .atomic_core import LevelScheme
from .errors import DataError, InconsistentPointError, NoBracketError, StepSizeError, TooFewPointsError
from .lambda_propagation import forward_observables
from .medium import MediumParams, ObservablePoint
from .multilevel_solver import SolverConfig, max_workers, observables
from .trapping_model import TrappingModel, f_of_N

__all__ = [
    "FitReport",
    "Gamma0Estimate",
    "SimulationContext",
    "extract_gamma0",
    "fit_effective_decay",
    "infer_effective_decay",
    "reference_slope",
    "synthetic_scan",
    "trapping_curve_analytic",
    "trapping_curve_simulation",
]


def _rotation_constant(gamma_r: float, bohr_hz_per_g: float) -> float:
    return 2.0 * bohr_hz_per_g * constants.TWO_PI / gamma_r


def infer_effective_decay(
    point: ObservablePoint,
    gamma_r: float = constants.gamma_r_angular(),
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> float:
    """Effective coherence decay ``gamma_0 + R`` (units of gamma_r) of one point."""
    if point.transmission >= 1.0:
        raise InconsistentPointError(
            f"N={point.N:g}: transmission 1 carries no absorption, cannot infer a decay rate"
        )
    if not point.slope > 0:
        raise InconsistentPointError(f"N={point.N:g}: rotation slope must be positive")
    return _rotation_constant(gamma_r, bohr_hz_per_g) * -math.log(point.transmission) / point.slope


@dataclass(frozen=True)
class Gamma0Estimate:
    value: float
    dispersion: float
    n_points: int


def extract_gamma0(
    points: Sequence[ObservablePoint],
    threshold: float = 0.95,
    gamma_r: float = constants.gamma_r_angular(),
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> Gamma0Estimate:
    """Intrinsic decay rate from the nearly transparent (low-density) points.

    Least squares through the origin of ``ln(1/T)`` against ``slope``, which
    weights each point by its rotation signal. ``dispersion`` is the standard
    deviation of the per-point estimates.
    """
    subset = [p for p in points if threshold < p.transmission < 1.0]
    if len(subset) < 3:
        raise TooFewPointsError(
            f"need at least 3 points with transmission above {threshold}, got {len(subset)}"
        )
    slopes = np.array([p.slope for p in subset])
    absorb = -np.log([p.transmission for p in subset])
    c = _rotation_constant(gamma_r, bohr_hz_per_g)
    value = c * float(slopes @ absorb) / float(slopes @ slopes)
    per_point = np.array([infer_effective_decay(p, gamma_r, bohr_hz_per_g) for p in subset])
    return Gamma0Estimate(value, float(per_point.std()), len(subset))


def trapping_curve_analytic(
    points: Sequence[ObservablePoint],
    gamma_0: float,
    epsilon: float = 0.05,
    gamma_r: float = constants.gamma_r_angular(),
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> List[Tuple[float, float]]:
    """``(N, R/gamma_0)`` per point; values below ``-epsilon`` are clamped there."""
    if not gamma_0 > 0:
        raise DataError("gamma_0 must be positive")
    out = []
    for p in points:
        ratio = infer_effective_decay(p, gamma_r, bohr_hz_per_g) / gamma_0 - 1.0
        out.append((p.N, max(ratio, -epsilon)))
    return out


@dataclass(frozen=True)
class SimulationContext:
    """Everything the simulation route needs besides the data points."""

    scheme: LevelScheme
    medium: MediumParams
    config: SolverConfig
    omega0_sq: float
    gamma_0: float
    weight_transmission: float = 1.0
    weight_slope: float = 1.0
    bracket: Tuple[float, float] = (0.1, 100.0)
    rtol: float = 1e-7


def _misfit(point: ObservablePoint, simulated: ObservablePoint, ctx: SimulationContext) -> float:
    # both terms increase with the decay rate, so their weighted sum has a single root
    absorb = -math.log(point.transmission)
    sim_absorb = -math.log(simulated.transmission)
    total = ctx.weight_transmission + ctx.weight_slope
    return (
        ctx.weight_transmission * (sim_absorb - absorb) / absorb
        + ctx.weight_slope * (simulated.slope - point.slope) / point.slope
    ) / total


def _simulate(point: ObservablePoint, gamma_eff: float, ctx: SimulationContext) -> ObservablePoint:
    cfg = replace(ctx.config, gamma_eff=gamma_eff)
    return observables(ctx.scheme, ctx.medium.with_density(point.N), cfg, ctx.omega0_sq)


def fit_effective_decay(point: ObservablePoint, ctx: SimulationContext) -> Tuple[float, float]:
    """Decay rate that makes the simulation reproduce ``point``; returns ``(gamma_eff, misfit)``."""
    if point.transmission >= 1.0 or not point.slope > 0:
        raise InconsistentPointError(f"N={point.N:g}: point carries no absorption or rotation")
    lo, hi = ctx.bracket[0] * ctx.gamma_0, ctx.bracket[1] * ctx.gamma_0
    g_lo = _misfit(point, _simulate(point, lo, ctx), ctx)
    # an opaque cell at the top of the bracket is moved inward geometrically
    for _ in range(12):
        try:
            g_hi = _misfit(point, _simulate(point, hi, ctx), ctx)
            break
        except (StepSizeError, DataError):
            hi = math.sqrt(lo * hi)
    else:
        raise NoBracketError(f"N={point.N:g}: simulation fails across the upper part of the bracket")
    if g_lo * g_hi > 0:
        raise NoBracketError(
            f"N={point.N:g}: simulated observables over gamma_eff in [{lo:g}, {hi:g}] do not reach the data"
        )
    root = brentq(lambda g: _misfit(point, _simulate(point, g, ctx), ctx), lo, hi, rtol=ctx.rtol,
                  xtol=1e-14 * ctx.gamma_0)
    sim = _simulate(point, root, ctx)
    misfit = max(abs(math.log(sim.transmission / point.transmission)), abs(sim.slope / point.slope - 1.0))
    return root, misfit


def trapping_curve_simulation(points: Sequence[ObservablePoint], ctx: SimulationContext) -> List[Tuple[float, float]]:
    """``(N, R/gamma_0)`` from matching the multilevel simulation point by point."""
    return [(N, ratio) for N, ratio, _ in _simulation_fits(points, ctx)]


def _simulation_fits(points, ctx):
    def one(p):
        g, misfit = fit_effective_decay(p, ctx)
        return p.N, (g - ctx.gamma_0) / ctx.gamma_0, misfit

    points = list(points)
    workers = min(max_workers(), len(points)) or 1
    if workers == 1:
        return [one(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, points))


@dataclass
class FitReport:
    gamma_0: float
    gamma_0_dispersion: float
    R_points: List[Tuple[float, float]]
    R_curve: List[Tuple[float, float]] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)


def fit_report(
    points: Sequence[ObservablePoint],
    threshold: float = 0.95,
    epsilon: float = 0.05,
    ctx: Optional[SimulationContext] = None,
    gamma_r: float = constants.gamma_r_angular(),
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> FitReport:
    """Full pipeline: gamma_0 from the transparent end, then R/gamma_0 by one or both routes."""
    est = extract_gamma0(points, threshold, gamma_r, bohr_hz_per_g)
    absorbing = [p for p in points if p.transmission < 1.0]
    report = FitReport(est.value, est.dispersion, trapping_curve_analytic(absorbing, est.value, epsilon, gamma_r,
                                                                          bohr_hz_per_g))
    if ctx is not None:
        fits = _simulation_fits(absorbing, replace(ctx, gamma_0=est.value))
        report.R_curve = [(N, r) for N, r, _ in fits]
        report.residuals = [m for _, _, m in fits]
    return report


def synthetic_scan(
    densities: Sequence[float],
    medium: MediumParams,
    omega0_sq: float,
    model: Optional[TrappingModel] = TrappingModel(),
    slope_noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    bohr_hz_per_g: float = constants.BOHR_MAGNETON_HZ_PER_G,
) -> List[ObservablePoint]:
    """Closed-form observables along a density scan.

    ``model=None`` switches trapping off (constant gamma_0). ``slope_noise`` is
    a relative Gaussian perturbation of the rotation slopes.
    """
    if slope_noise and rng is None:
        raise DataError("a random generator is required when adding noise")
    out = []
    for N in densities:
        f = 0.0 if model is None else f_of_N(N, model)
        p = forward_observables(medium.with_density(N), omega0_sq, f, bohr_hz_per_g)
        if slope_noise:
            p = replace(p, slope=p.slope * (1.0 + slope_noise * rng.standard_normal()))
        out.append(p)
    return out


def reference_slope(transmission: float, reference: Sequence[ObservablePoint]) -> float:
    """Slope of a reference curve at the given transmission (linear interpolation in ln T)."""
    ref = sorted(reference, key=lambda p: p.transmission)
    x = np.log([p.transmission for p in ref])
    y = np.array([p.slope for p in ref])
    lt = math.log(transmission)
    if lt < x[0] or lt > x[-1]:
        raise DataError(f"transmission {transmission:g} outside the reference curve")
    return float(np.interp(lt, x, y))
