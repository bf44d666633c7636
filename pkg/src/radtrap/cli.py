"""Command-line entry point: ``radtrap <mode> --config PATH [--out DIR] [--set key=value unit]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
Failures print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, constants
from .atomic_core import LevelScheme, build_lambda_scheme, build_rb87_d1_scheme
from .config import MODES, RunConfig, parse_config
from .csvio import emit_csv, ingest_csv
from .errors import BleachedMediumError, ConfigError, DataError, RadtrapError, TooFewPointsError
from .inference import SimulationContext, extract_gamma0, fit_report, synthetic_scan, trapping_curve_analytic
from .lambda_propagation import FieldState, analytic_profile, doppler_free_predicate, forward_observables
from .medium import MediumParams, ObservablePoint
from .multilevel_solver import SolverConfig, observables_vs_density, propagate
from .trapping_model import (
    TrappingModel,
    f_of_N,
    mean_relative_speed,
    optical_thickness_threshold,
    rb_vapor_temperature,
    spin_exchange_decay,
    threshold_density,
)

# --- config -> model objects -------------------------------------------------


def medium_from(cfg: RunConfig) -> MediumParams:
    return MediumParams(
        N=cfg["medium.density"],
        wavelength=cfg["medium.wavelength"],
        gamma_r=constants.TWO_PI * cfg["medium.gamma_r"],
        gamma_0=cfg["medium.gamma_0"],
        W_d=cfg["medium.doppler_width"],
        L=cfg["medium.length"],
        d=cfg["medium.beam_diameter"],
        D=cfg["medium.cell_diameter"],
    )


def trapping_from(cfg: RunConfig) -> TrappingModel:
    return TrappingModel(
        n_threshold=cfg["trapping.n_threshold"],
        n_beam=cfg["trapping.n_beam"],
        slope_low=cfg["trapping.slope_low"],
        slope_high=cfg["trapping.slope_high"],
        exponent=cfg["trapping.exponent"],
        density_scale=cfg["trapping.density_scale"],
        r_e=cfg["trapping.escape_rate"],
    )


def solver_from(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        velocity_classes=cfg["solver.velocity_classes"],
        velocity_span=cfg["solver.velocity_span"],
        grid_stretch=cfg["solver.grid_stretch"],
        z_steps=cfg["solver.z_steps"],
        B_step=cfg["solver.field_step"],
        laser_detuning=cfg["solver.laser_detuning"],
        gamma_eff=cfg["solver.gamma_eff"],
        pumping_rate=cfg["solver.pumping_rate"],
        max_step_change=cfg["solver.max_step_change"],
        bohr_hz_per_g=cfg["constants.bohr_magneton"],
    )


def scheme_from(cfg: RunConfig) -> LevelScheme:
    gamma_r_hz = cfg["medium.gamma_r"]
    if cfg["solver.scheme"] == "lambda":
        return build_lambda_scheme(gamma_r_hz)
    return build_rb87_d1_scheme(gamma_r_hz=gamma_r_hz, hyperfine_splitting_hz=cfg["solver.hyperfine_splitting"])


def density_grid(cfg: RunConfig) -> np.ndarray:
    lo, hi, n = cfg["scan.density_min"], cfg["scan.density_max"], cfg["scan.points"]
    if cfg["scan.spacing"] == "log":
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


# --- modes ----------------------------------------------------------------------


def _header(cfg: RunConfig, extra: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    meta = {"radtrap_version": __version__, "mode": cfg.mode, "config_sha256": cfg.digest()}
    meta.update(extra or {})
    return meta


def _omega0_sq(cfg: RunConfig) -> float:
    return cfg["field.rabi_frequency"] ** 2


def _point_row(p: ObservablePoint):
    return [p.N, p.transmission, p.slope, p.gamma_eff if p.gamma_eff is not None else math.nan]


POINT_COLUMNS = ["N_cm3", "transmission", "slope_rad_per_G", "gamma_eff"]


def run_simulate_analytic(cfg: RunConfig, out: Path) -> List[Path]:
    medium = medium_from(cfg)
    model = trapping_from(cfg)
    omega0_sq = _omega0_sq(cfg)
    bohr = cfg["constants.bohr_magneton"]
    margin = cfg["analytic.validity_margin"]

    f = f_of_N(medium.N, model)
    profile = analytic_profile(medium, omega0_sq, f, cfg["scan.profile_samples"], B=1.0, bohr_hz_per_g=bohr)
    written = [
        emit_csv(
            out / "analytic_profile.csv",
            ["z_cm", "intensity_gamma_r2", "phase_rad_per_G"],
            profile.samples,
            _header(cfg, {"N_cm3": repr(medium.N), "f": repr(f), "transmission": repr(profile.transmission),
                          "slope_rad_per_G": repr(profile.dphi_dB)}),
        )
    ]

    rows, skipped, invalid = [], 0, 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for N in density_grid(cfg):
            m = medium.with_density(float(N))
            fN = f_of_N(float(N), model)
            try:
                p = forward_observables(m, omega0_sq, fN, bohr)
            except BleachedMediumError:
                skipped += 1
                continue
            check = doppler_free_predicate(m, p.transmission * omega0_sq, margin)
            invalid += not check.valid
            rows.append(_point_row(p) + [check.margin])
    written.append(
        emit_csv(
            out / "analytic_scan.csv",
            POINT_COLUMNS + ["doppler_margin"],
            rows,
            _header(cfg, {"bleached_points_skipped": str(skipped), "doppler_invalid_points": str(invalid)}),
        )
    )
    return written


def run_simulate_multilevel(cfg: RunConfig, out: Path) -> List[Path]:
    medium = medium_from(cfg)
    config = solver_from(cfg)
    profile = propagate(scheme_from(cfg), medium, config, FieldState.linear(_omega0_sq(cfg)), 0.0)
    rows = [(z, intensity, phase, slope) for (z, intensity, phase), (_, slope) in
            zip(profile.samples, profile.slope_samples)]
    meta = {
        "scheme": cfg["solver.scheme"],
        "N_cm3": repr(medium.N),
        "transmission": repr(profile.transmission),
        "dphi_dB_rad_per_G": repr(profile.dphi_dB),
        "field_step_G": repr(config.field_step(medium.gamma_r)),
    }
    return [
        emit_csv(
            out / "multilevel_profile.csv",
            ["z_cm", "intensity_gamma_r2", "phase_rad", "dphi_dB_rad_per_G"],
            rows,
            _header(cfg, meta),
        )
    ]


def _scan_points(cfg: RunConfig, densities, model: Optional[TrappingModel]):
    """Observables along the density grid; bleached analytic points are dropped."""
    medium = medium_from(cfg)
    omega0_sq = _omega0_sq(cfg)
    if cfg["scan.model"] == "multilevel":
        g0 = medium.gamma_0
        schedule = (lambda N: g0) if model is None else (lambda N: g0 * (1.0 + f_of_N(N, model)))
        return observables_vs_density(densities, medium, solver_from(cfg), omega0_sq, scheme_from(cfg), schedule), 0
    points, skipped = [], 0
    for N in densities:
        try:
            points.extend(synthetic_scan([float(N)], medium, omega0_sq, model, bohr_hz_per_g=cfg["constants.bohr_magneton"]))
        except BleachedMediumError:
            skipped += 1
    return points, skipped


def run_scan_density(cfg: RunConfig, out: Path) -> List[Path]:
    model = trapping_from(cfg)
    densities = [float(N) for N in density_grid(cfg)]
    gamma_r = constants.TWO_PI * cfg["medium.gamma_r"]
    bohr = cfg["constants.bohr_magneton"]

    constant, skipped_c = _scan_points(cfg, densities, None)
    trapping, skipped_t = _scan_points(cfg, densities, model)
    meta = {"scan_model": cfg["scan.model"]}
    written = [
        emit_csv(out / "scan_constant.csv", POINT_COLUMNS, [_point_row(p) for p in constant],
                 _header(cfg, dict(meta, bleached_points_skipped=str(skipped_c)))),
        emit_csv(out / "scan_trapping.csv", POINT_COLUMNS, [_point_row(p) for p in trapping],
                 _header(cfg, dict(meta, bleached_points_skipped=str(skipped_t)))),
    ]

    absorbing = [p for p in trapping if p.transmission < 1.0]
    try:
        est = extract_gamma0(absorbing, cfg["fit.low_density_threshold"], gamma_r, bohr)
        gamma_0, source = est.value, "low_density_fit"
    except TooFewPointsError:
        gamma_0, source = cfg["medium.gamma_0"], "config"
    recovered = trapping_curve_analytic(absorbing, gamma_0, cfg["fit.clamp_epsilon"], gamma_r, bohr)
    rows = [(N, float(f_of_N(N, model)), r) for N, r in recovered]
    written.append(
        emit_csv(out / "trapping_curve.csv", ["N_cm3", "R_over_gamma0_injected", "R_over_gamma0_recovered"], rows,
                 _header(cfg, dict(meta, gamma_0=repr(gamma_0), gamma_0_source=source)))
    )
    return written


def run_fit(cfg: RunConfig, out: Path) -> List[Path]:
    if not cfg["fit.input"]:
        raise ConfigError("fit mode needs fit.input")
    try:
        rows = ingest_csv(cfg["fit.input"])
    except OSError as exc:
        raise DataError(f"cannot read {cfg['fit.input']}: {exc.strerror}") from None
    points = [r.to_point() for r in rows]
    gamma_r = constants.TWO_PI * cfg["medium.gamma_r"]
    bohr = cfg["constants.bohr_magneton"]
    ctx = None
    if cfg["fit.simulation_route"]:
        ctx = SimulationContext(
            scheme=scheme_from(cfg),
            medium=medium_from(cfg),
            config=solver_from(cfg),
            omega0_sq=_omega0_sq(cfg),
            gamma_0=cfg["medium.gamma_0"],
            weight_transmission=cfg["fit.weight_transmission"],
            weight_slope=cfg["fit.weight_slope"],
        )
    report = fit_report(points, cfg["fit.low_density_threshold"], cfg["fit.clamp_epsilon"], ctx, gamma_r, bohr)
    body = []
    for i, (N, r) in enumerate(report.R_points):
        sim = report.R_curve[i][1] if report.R_curve else math.nan
        res = report.residuals[i] if report.residuals else math.nan
        body.append((N, r, sim, res))
    meta = {
        "gamma_0": repr(report.gamma_0),
        "gamma_0_dispersion": repr(report.gamma_0_dispersion),
        "simulation_route": "true" if ctx is not None else "false",
    }
    return [
        emit_csv(out / "fit_report.csv",
                 ["N_cm3", "R_over_gamma0_analytic", "R_over_gamma0_simulation", "simulation_misfit"],
                 body, _header(cfg, meta))
    ]


def run_threshold_report(cfg: RunConfig, out: Path) -> List[Path]:
    medium = medium_from(cfg)
    n_beam = threshold_density(medium, medium.d)
    n_cell = threshold_density(medium, medium.D)
    sigma = cfg["trapping.cross_section"]
    T_fixed = cfg["trapping.temperature"]
    speed_fixed = mean_relative_speed(T_fixed) if T_fixed is not None else None

    densities = sorted(set(float(N) for N in density_grid(cfg)) | {n_cell, n_beam})
    rows = []
    for N in densities:
        m = medium.with_density(N)
        beam = optical_thickness_threshold(m, m.d)
        cell = optical_thickness_threshold(m, m.D)
        boundary = 2 if N == n_beam else 1 if N == n_cell else 0
        T = T_fixed if T_fixed is not None else rb_vapor_temperature(N)
        spin = spin_exchange_decay(N, sigma, speed_fixed, medium.gamma_r)
        ratio = spin / medium.gamma_0 if medium.gamma_0 > 0 else math.inf
        rows.append((N, beam.optical_depth, beam.trapped, cell.optical_depth, cell.trapped, boundary, T, spin, ratio))
    meta = {"threshold_density_beam": repr(n_beam), "threshold_density_cell": repr(n_cell)}
    return [
        emit_csv(
            out / "threshold.csv",
            ["N_cm3", "optical_depth_beam", "trapped_beam", "optical_depth_cell", "trapped_cell", "boundary",
             "temperature_K", "spin_exchange_gamma_r", "spin_exchange_over_gamma0"],
            rows,
            _header(cfg, meta),
        )
    ]


RUNNERS = {
    "simulate-analytic": run_simulate_analytic,
    "simulate-multilevel": run_simulate_multilevel,
    "scan-density": run_scan_density,
    "fit": run_fit,
    "threshold-report": run_threshold_report,
}


def run(cfg: RunConfig, out_dir=None) -> List[Path]:
    """Execute the configured mode and return the written files."""
    out = Path(out_dir if out_dir is not None else cfg["io.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[cfg.mode](cfg, out)


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radtrap", description="Radiation trapping in coherent media.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="unit-tagged config file")
    parser.add_argument("--out", default=None, help="output directory (overrides io.out_dir)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE [UNIT]",
                        help="override a config key, e.g. --set 'medium.density=5e11 cm^-3'")
    parser.add_argument("--version", action="version", version=f"radtrap {__version__}")
    return parser


def _error_record(exc: RadtrapError) -> str:
    record = {"error": type(exc).__name__, "exit_code": exc.exit_code, "message": str(exc)}
    line = getattr(exc, "line", None)
    if line is not None:
        record["line"] = line
    return json.dumps(record, sort_keys=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = parse_config(text, args.set, mode=args.mode)
        for path in run(cfg, args.out):
            print(path)
    except RadtrapError as exc:
        print(_error_record(exc), file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
