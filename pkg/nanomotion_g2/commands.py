"""
Subcommands. Each function asks for scenario sections and run context by
parameter name and writes its CSV files into ``out_dir``.
"""
import math
from functools import partial
from pathlib import Path
from typing import Dict
from typing import Optional
from typing import Tuple

import numpy as np
from nanomotion_g2.analysis import fit_expansion
from nanomotion_g2.analysis import fit_thermal_spectrum
from nanomotion_g2.analysis import photon_counting_regime
from nanomotion_g2.analysis import spectral_snr
from nanomotion_g2.analysis import spectrum_from_g2
from nanomotion_g2.autowired import autowired
from nanomotion_g2.correlator.models import G2Curve
from nanomotion_g2.correlator.models import PhotonStream
from nanomotion_g2.correlator.utils import correlate_stream
from nanomotion_g2.correlator.utils import g2_adiabatic
from nanomotion_g2.correlator.utils import g2_weighted
from nanomotion_g2.correlator.utils import run_ensemble
from nanomotion_g2.correlator.utils import sample_photon_stream
from nanomotion_g2.emitter import antibunching_slope
from nanomotion_g2.emitter import excited_population
from nanomotion_g2.emitter import stationary_g2
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.mechanics import position_autocorrelation
from nanomotion_g2.mechanics import solve_beam_modes
from nanomotion_g2.mechanics import thermal_force_sensitivity
from nanomotion_g2.optics import coherent_drive_image
from nanomotion_g2.optics import fit_coherent_image
from nanomotion_g2.optics import fit_image_width
from nanomotion_g2.optics import pump_rate
from nanomotion_g2.optics import spread_from_width
from nanomotion_g2.optics import thermal_image
from nanomotion_g2.params import CorrelatorMode
from nanomotion_g2.params import DriveKind
from nanomotion_g2.params import ForceConvention
from nanomotion_g2.params import Psf
from nanomotion_g2.params import Trajectory
from nanomotion_g2.route import CommandResult
from nanomotion_g2.scenario.models import AnalysisSection
from nanomotion_g2.scenario.models import DetectionSection
from nanomotion_g2.scenario.models import ImageSection
from nanomotion_g2.scenario.models import Scenario
from nanomotion_g2.scenario.utils import read_psf_table
from nanomotion_g2.trajectory import simulate_coherent
from nanomotion_g2.trajectory import simulate_thermal
from nanomotion_g2.trajectory import write_trajectory_csv
from nanomotion_g2.typing import TauFunc
from nanomotion_g2.utils import CsvConverter
from nanomotion_g2.utils import derive_seed
from nanomotion_g2.utils import format_float
from nanomotion_g2.utils import format_sig
from nanomotion_g2.wick import aj_general
from nanomotion_g2.wick import expansion_coefficients
from nanomotion_g2.wick import g2_series
from nanomotion_g2.wick import initial_bunching_ratio

# spawn key of the click sampler, clear of every ensemble member index
STREAM_SEED_INDEX = 1 << 32


def _psfs(scenario: Scenario, config_path: Optional[Path]) -> Tuple[Psf, Psf]:
    table = None
    if scenario.optics.psf_table is not None:
        path = Path(scenario.optics.psf_table)
        if config_path is not None and not path.is_absolute():
            path = config_path.parent / path
        table = read_psf_table(path)
    return scenario.psf(1, table), scenario.psf(2, table)


def _rest_pump(scenario: Scenario) -> float:
    e = scenario.emitter_params()
    return float(pump_rate(e, scenario.pump_profile(), 0.0))


def _sigma_e(scenario: Scenario) -> TauFunc:
    return partial(stationary_g2, scenario.emitter_params(), _rest_pump(scenario))


def _tau_grid(scenario: Scenario) -> np.ndarray:
    cfg = scenario.correlator_config()
    return np.arange(cfg.n_bins + 1) * cfg.tau_bin


def _trajectory(scenario: Scenario, seed: int) -> Trajectory:
    grid = scenario.grid()
    if scenario.drive.kind is DriveKind.coherent:
        return simulate_coherent(
            scenario.drive.amplitude,
            scenario.oscillator_params().omega_m,
            scenario.drive.phase,
            grid,
        )
    return simulate_thermal(scenario.oscillator_params(), grid, derive_seed(seed, 0))


def _read_curve(path: Path, scenario: Scenario) -> G2Curve:
    header, table = CsvConverter.read(path)
    if "tau_s" not in header or "g2" not in header:
        raise DomainError(f"{path}: expected tau_s and g2 columns, got {header}")
    tau = table[:, header.index("tau_s")]
    g2 = table[:, header.index("g2")]
    if "stderr" in header:
        stderr = table[:, header.index("stderr")]
    else:
        stderr = np.full_like(g2, np.nan)
    return G2Curve(
        tau=tau,
        g2=g2,
        stderr=stderr,
        normalization=scenario.simulation.normalization,
        norm=1.0,
    )


def _band(analysis: AnalysisSection) -> Optional[Tuple[float, float]]:
    if analysis.band_low is None or analysis.band_high is None:
        return None
    return analysis.band_low, analysis.band_high


def _write_curve(path: Path, curve: G2Curve) -> Path:
    return CsvConverter.write(
        path, ["tau_s", "g2", "stderr"], [curve.tau, curve.g2, curve.stderr]
    )


@autowired("modes")
def modes(scenario: Scenario, out_dir: Path) -> CommandResult:
    """Clamped-free beam eigenmodes and effective masses."""
    solutions = solve_beam_modes(scenario.oscillator.modes)
    path = CsvConverter.write(
        out_dir / "modes.csv",
        ["n", "kL", "A_n", "meff_ratio"],
        [
            [m.index for m in solutions],
            [m.kL for m in solutions],
            [m.A_n for m in solutions],
            [m.meff_ratio for m in solutions],
        ],
        formatter=format_sig,
    )
    p = scenario.oscillator_params()
    return CommandResult(
        outputs=[path],
        results={
            "flagged_modes": [m.index for m in solutions if m.flagged],
            "force_sensitivity_angular": thermal_force_sensitivity(
                p, ForceConvention.angular
            ),
            "force_sensitivity_hertz": thermal_force_sensitivity(
                p, ForceConvention.hertz
            ),
        },
    )


@autowired("image")
def image(scenario: Scenario, image: ImageSection, out_dir: Path) -> CommandResult:
    """Time-averaged fluorescence image of the emitter across x."""
    x = np.linspace(image.x_min, image.x_max, image.points)
    w0 = scenario.optics.w0
    results: Dict[str, float] = {}
    if scenario.drive.kind is DriveKind.coherent:
        flux = coherent_drive_image(x, 0.0, scenario.drive.amplitude, w0)
        x0, amplitude, _ = fit_coherent_image(x, flux, w0)
        results.update(fit_center=x0, fit_amplitude=amplitude)
    else:
        flux = thermal_image(x, w0, scenario.spread)
        center, width = fit_image_width(x, flux)
        results.update(
            fit_center=center,
            fit_width=width,
            fit_spread=spread_from_width(max(width, 0.5 * w0), w0),
        )
    path = CsvConverter.write(out_dir / "image.csv", ["x_m", "flux"], [x, flux])
    return CommandResult(outputs=[path], results=results)


@autowired("emitter-g2")
def emitter_g2(scenario: Scenario, out_dir: Path) -> CommandResult:
    """Stationary g2 of the motionless emitter."""
    e = scenario.emitter_params()
    pump = _rest_pump(scenario)
    tau = _tau_grid(scenario)
    g2 = stationary_g2(e, pump, tau)
    path = CsvConverter.write(out_dir / "emitter_g2.csv", ["tau_s", "g2"], [tau, g2])
    return CommandResult(
        outputs=[path],
        results={
            "sigma_e_steady": float(excited_population(e, pump)),
            "antibunching_slope": antibunching_slope(e, pump),
            "g2_zero": float(g2[0]),
        },
    )


@autowired("trajectory")
def trajectory(scenario: Scenario, seed: int, out_dir: Path) -> CommandResult:
    """First ensemble member's trajectory."""
    t = _trajectory(scenario, seed)
    path = write_trajectory_csv(t, out_dir / "trajectory.csv")
    return CommandResult(
        outputs=[path],
        results={"duration_s": t.duration, "rms_m": float(np.std(t.positions))},
    )


@autowired("simulate-g2")
def simulate_g2(
    scenario: Scenario,
    seed: int,
    threads: int,
    out_dir: Path,
    config_path: Optional[Path],
) -> CommandResult:
    """Monte-Carlo g2 over the thermal ensemble, or the coherent trajectory."""
    cfg = scenario.correlator_config()
    psf1, psf2 = _psfs(scenario, config_path)
    e = scenario.emitter_params()
    pump = scenario.pump_profile()
    sigma_e = _sigma_e(scenario) if cfg.mode is CorrelatorMode.adiabatic else None

    if scenario.drive.kind is DriveKind.coherent:
        ensemble = [_trajectory(scenario, seed)]
        if cfg.mode is CorrelatorMode.adiabatic:
            histogram = g2_adiabatic(ensemble, psf1, psf2, sigma_e, cfg)
        else:
            histogram = g2_weighted(ensemble, e, pump, psf1, psf2, cfg)
    else:
        histogram = run_ensemble(
            scenario.oscillator_params(),
            scenario.grid(),
            cfg,
            psf1,
            psf2,
            master_seed=seed,
            n_members=scenario.simulation.members,
            threads=threads,
            e=e,
            pump=pump,
            sigma_e_of_tau=sigma_e,
        )
    curve = histogram.curve()
    path = _write_curve(out_dir / "g2.csv", curve)
    return CommandResult(
        outputs=[path],
        results={
            "normalization": curve.normalization.value,
            "norm": curve.norm,
            "n_starts": histogram.n_starts,
            "n_members": histogram.n_members,
            "bunching_ratio": initial_bunching_ratio(scenario.geometry()),
        },
    )


@autowired("analytic-g2")
def analytic_g2(
    scenario: Scenario, analysis: AnalysisSection, out_dir: Path
) -> CommandResult:
    """g2 from the truncated expansion in the position autocorrelation."""
    geom = scenario.geometry()
    coeffs = expansion_coefficients(geom, analysis.truncation, analysis.n_terms)
    tau = _tau_grid(scenario)
    c = position_autocorrelation(scenario.oscillator_params(), tau)
    g2 = g2_series(c, coeffs, _sigma_e(scenario)(tau), scenario.optics.w0)
    path = CsvConverter.write(out_dir / "analytic_g2.csv", ["tau_s", "g2"], [tau, g2])
    return CommandResult(
        outputs=[path],
        results={
            "theta": geom.theta,
            "coefficients": [float(a) for a in coeffs.a],
            "bunching_ratio": initial_bunching_ratio(geom),
        },
    )


@autowired("aj-table")
def aj_table(
    scenario: Scenario, analysis: AnalysisSection, out_dir: Path
) -> CommandResult:
    """Expansion coefficients A_0..A_truncation with their convergence flags."""
    geom = scenario.geometry()
    orders = list(range(analysis.truncation + 1))
    values = [aj_general(j, geom, analysis.n_terms) for j in orders]
    path = CsvConverter.write(
        out_dir / "aj_table.csv",
        ["j", "A_j", "converged"],
        [orders, [v.value for v in values], [int(v.converged) for v in values]],
    )
    return CommandResult(
        outputs=[path],
        results={
            "theta": geom.theta,
            "all_converged": all(v.converged for v in values),
        },
    )


@autowired("photon-stream")
def photon_stream(
    scenario: Scenario,
    detection: DetectionSection,
    seed: int,
    out_dir: Path,
    config_path: Optional[Path],
) -> CommandResult:
    """Detector clicks from the first ensemble member's trajectory."""
    t = _trajectory(scenario, seed)
    psf1, psf2 = _psfs(scenario, config_path)
    stream = sample_photon_stream(
        t,
        scenario.emitter_params(),
        scenario.pump_profile(),
        psf1,
        psf2,
        detection.efficiency,
        detection.dark_rate,
        derive_seed(seed, STREAM_SEED_INDEX),
    )
    path = CsvConverter.write(
        out_dir / "stream.csv", ["t_s", "detector"], [stream.times, stream.detectors]
    )
    flux = [len(stream.channel(d)) / stream.duration for d in (1, 2)]
    omega_m = scenario.oscillator_params().omega_m
    return CommandResult(
        outputs=[path],
        results={
            "duration_s": stream.duration,
            "flux_1": flux[0],
            "flux_2": flux[1],
            "photon_counting": photon_counting_regime(max(flux), omega_m),
        },
    )


@autowired("correlate")
def correlate(scenario: Scenario, input_path: Path, out_dir: Path) -> CommandResult:
    """Multi-start correlation of a click stream written by photon-stream."""
    header, table = CsvConverter.read(input_path)
    if header != ["t_s", "detector"]:
        raise DomainError(f"{input_path}: expected t_s,detector columns, got {header}")
    stream = PhotonStream(
        times=table[:, 0],
        detectors=table[:, 1].astype(np.int8),
        duration=scenario.grid().n_samples * scenario.simulation.dt,
    )
    histogram = correlate_stream(stream, scenario.correlator_config())
    curve = histogram.curve()
    path = _write_curve(out_dir / "g2_stream.csv", curve)
    return CommandResult(
        outputs=[path],
        results={"n_clicks": len(stream), "norm": curve.norm},
    )


@autowired("spectrum")
def spectrum(
    scenario: Scenario, analysis: AnalysisSection, input_path: Path, out_dir: Path
) -> CommandResult:
    """Power spectrum of g2 - 1 and its damped-oscillator line fit."""
    curve = _read_curve(input_path, scenario)
    result = spectrum_from_g2(curve, analysis.window, analysis.mask_tau)
    path = CsvConverter.write(
        out_dir / "spectrum.csv", ["freq_hz", "psd"], [result.freq, result.psd]
    )
    band = _band(analysis)
    peak_hz, width_hz = fit_thermal_spectrum(result, band)
    results = {"peak_hz": peak_hz, "width_hz": width_hz}
    if band is not None:
        results["snr"] = spectral_snr(result, band)
    return CommandResult(outputs=[path], results=results)


@autowired("fit")
def fit(
    scenario: Scenario, analysis: AnalysisSection, input_path: Path, out_dir: Path
) -> CommandResult:
    """Least-squares fit of the expansion model to a g2 curve."""
    curve = _read_curve(input_path, scenario)
    result = fit_expansion(
        curve,
        sigma_e_of_tau=_sigma_e(scenario),
        max_order=analysis.max_order,
        geometry=scenario.geometry(),
        w0=scenario.optics.w0,
        mask_tau=analysis.mask_tau,
    )
    values: Dict[str, float] = {}
    for j, (alpha, var) in enumerate(zip(result.alpha, result.covariance_diag)):
        values[f"alpha_{j}"] = float(alpha)
        values[f"alpha_{j}_stderr"] = math.sqrt(max(float(var), 0.0))
    values.update(
        omega_fit=result.omega_fit,
        gamma_fit=result.gamma_fit,
        residual_rms=result.residual_rms,
    )
    if result.dx_fit is not None:
        values["dx_fit"] = result.dx_fit

    summary = out_dir / "fit.txt"
    summary.write_text(
        "".join(f"{key}={format_float(value)}\n" for key, value in values.items())
    )
    residuals = CsvConverter.write(
        out_dir / "fit_residuals.csv",
        ["tau_s", "residual"],
        [result.tau, result.residuals],
    )
    return CommandResult(outputs=[summary, residuals], results=values)
