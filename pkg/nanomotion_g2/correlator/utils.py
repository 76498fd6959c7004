import math
from functools import partial
from functools import reduce
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence

import numpy as np
from joblib import delayed
from joblib import Parallel
from nanomotion_g2.correlator.models import CorrelationHistogram
from nanomotion_g2.correlator.models import CorrelatorConfig
from nanomotion_g2.correlator.models import PhotonStream
from nanomotion_g2.emitter import emission_waiting_times
from nanomotion_g2.emitter import excited_population
from nanomotion_g2.emitter import GROUND
from nanomotion_g2.emitter import integrate_populations
from nanomotion_g2.emitter import MAX_STEP_RATE
from nanomotion_g2.emitter import no_jump_generator
from nanomotion_g2.exceptions import ConfigMismatchError
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import EmptyEnsembleError
from nanomotion_g2.exceptions import StepTooCoarseError
from nanomotion_g2.exceptions import ThinningBoundError
from nanomotion_g2.logger import logger
from nanomotion_g2.mechanics import thermal_spread
from nanomotion_g2.optics import mean_flux
from nanomotion_g2.optics import psf_eval
from nanomotion_g2.optics import pump_rate
from nanomotion_g2.params import CorrelatorMode
from nanomotion_g2.params import DriveKind
from nanomotion_g2.params import EmitterParams
from nanomotion_g2.params import OscillatorParams
from nanomotion_g2.params import Psf
from nanomotion_g2.params import PumpKind
from nanomotion_g2.params import PumpProfile
from nanomotion_g2.params import Trajectory
from nanomotion_g2.params import TrajectoryGrid
from nanomotion_g2.trajectory import simulate_thermal
from nanomotion_g2.typing import FloatArray
from nanomotion_g2.typing import TauFunc
from nanomotion_g2.utils import derive_seed
from nanomotion_g2.utils import make_rng
from scipy import fft

SHARD_SIZE = 8
BATCH_STARTS = 128
STREAM_CHUNK = 4096
MAX_THINNING_RATE = 0.1
# start weights use sigma_e(infinity); valid while dx_th / w0 << gamma_rad / omega_m
VALIDITY_FRACTION = 0.1


def merge(h1: CorrelationHistogram, h2: CorrelationHistogram) -> CorrelationHistogram:
    if not np.array_equal(h1.bin_edges, h2.bin_edges):
        raise ConfigMismatchError("histograms have different bin edges")
    if h1.meta != h2.meta:
        raise ConfigMismatchError("histograms were built with different configs")
    return CorrelationHistogram(
        bin_edges=h1.bin_edges,
        weighted_sum=h1.weighted_sum + h2.weighted_sum,
        counts=h1.counts + h2.counts,
        lag_sum=h1.lag_sum + h2.lag_sum,
        weight_norm=h1.weight_norm + h2.weight_norm,
        stop_norm=h1.stop_norm + h2.stop_norm,
        exposure=h1.exposure + h2.exposure,
        n_starts=h1.n_starts + h2.n_starts,
        member_sum=h1.member_sum + h2.member_sum,
        member_sq_sum=h1.member_sq_sum + h2.member_sq_sum,
        n_members=h1.n_members + h2.n_members,
        meta=h1.meta,
    )


def merge_all(
    cfg: CorrelatorConfig,
    histograms: Iterable[CorrelationHistogram],
    analytic_norm: Optional[float] = None,
) -> CorrelationHistogram:
    return reduce(merge, histograms, CorrelationHistogram.empty(cfg, analytic_norm))


def _check_centers(psf1: Psf, psf2: Psf, cfg: CorrelatorConfig) -> None:
    for psf, x in ((psf1, cfg.x1), (psf2, cfg.x2)):
        if not math.isclose(psf.center, x, rel_tol=1e-12, abs_tol=1e-18):
            raise ConfigMismatchError(
                f"psf centered at {psf.center!r} but the config places it at {x!r}"
            )


def _check_ensemble(ensemble: Sequence[Trajectory], cfg: CorrelatorConfig) -> None:
    if not ensemble:
        raise EmptyEnsembleError("empty trajectory ensemble")
    for t in ensemble:
        if cfg.tau_bin < t.dt * (1 - 1e-9):
            raise DomainError(f"tau_bin={cfg.tau_bin} is shorter than dt={t.dt}")


def _is_thermal(ensemble: Sequence[Trajectory]) -> bool:
    return all(t.drive_kind is DriveKind.thermal for t in ensemble)


def _warn_start_weights(e: EmitterParams, w0: float, cfg: CorrelatorConfig) -> None:
    if cfg.oscillator is None:
        return
    ratio = thermal_spread(cfg.oscillator) / w0
    limit = VALIDITY_FRACTION * e.gamma_rad / cfg.oscillator.omega_m
    if ratio >= limit:
        logger.warning(
            "steady-state start weights: dx_th/w0=%.4g is not << gamma_rad/omega_m "
            "(limit %.4g)",
            ratio,
            limit,
        )


def _fluxes(osc: OscillatorParams, psf1: Psf, psf2: Psf) -> float:
    dx_th = thermal_spread(osc)
    return mean_flux(psf1, dx_th) * mean_flux(psf2, dx_th)


def _member_histogram(
    cfg: CorrelatorConfig,
    analytic_norm: Optional[float],
    lags: FloatArray,
    per_lag_sum: FloatArray,
    per_lag_count: float,
    weight_norm: float,
    stop_norm: float,
    n_starts: int,
) -> CorrelationHistogram:
    n_bins = cfg.n_bins
    index = np.floor(lags / cfg.tau_bin + 1e-9).astype(int)
    keep = index < n_bins
    index = index[keep]
    weighted = np.bincount(index, weights=per_lag_sum[keep], minlength=n_bins)
    counts = per_lag_count * np.bincount(index, minlength=n_bins).astype(float)
    lag_sum = per_lag_count * np.bincount(index, weights=lags[keep], minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        member = np.where(counts > 0, weighted / counts, 0.0)
    return CorrelationHistogram(
        bin_edges=cfg.bin_edges,
        weighted_sum=weighted,
        counts=counts,
        lag_sum=lag_sum,
        weight_norm=weight_norm,
        stop_norm=stop_norm,
        exposure=float(n_starts),
        n_starts=n_starts,
        member_sum=member,
        member_sq_sum=member ** 2,
        n_members=1,
        meta={"config": cfg.echo(), "analytic_norm": analytic_norm},
    )


def _lag_grid(cfg: CorrelatorConfig, dt: float) -> FloatArray:
    return np.arange(int(math.ceil(cfg.tau_max / dt - 1e-9))) * dt


def _half_step_pumps(
    e: EmitterParams, pump: PumpProfile, x: FloatArray, pump_values: FloatArray
) -> FloatArray:
    """Pump record on a dt/2 grid, midpoints taken on the interpolated trajectory."""
    fine = np.empty(2 * len(x) - 1)
    fine[::2] = pump_values
    fine[1::2] = pump_rate(e, pump, 0.5 * (x[:-1] + x[1:]))
    return fine


def _weighted_member(
    t: Trajectory,
    e: EmitterParams,
    pump: PumpProfile,
    psf1: Psf,
    psf2: Psf,
    cfg: CorrelatorConfig,
    analytic_norm: Optional[float],
) -> CorrelationHistogram:
    dt = t.dt
    lags = _lag_grid(cfg, dt)
    n_lags = len(lags)
    span = n_lags - 1
    if t.n_samples <= span:
        raise DomainError("trajectory is shorter than tau_max")

    x = t.positions
    pump_values = pump_rate(e, pump, x)
    max_rate = e.max_rate(float(np.max(pump_values)))
    if dt * max_rate > MAX_STEP_RATE:
        raise StepTooCoarseError(
            f"dt*max_rate={dt * max_rate:.4g} exceeds {MAX_STEP_RATE}"
        )
    sigma_bar = excited_population(e, pump_values)
    pi1 = psf_eval(psf1, x)
    pi2 = psf_eval(psf2, x)
    starts = np.arange(0, t.n_samples - span, cfg.start_stride)
    weights = sigma_bar[starts] * pi1[starts]
    offsets = np.arange(n_lags)

    # RK4 steps of dt over a pump record sampled every dt / 2
    if pump.kind is PumpKind.broad:
        constant = np.full((1, 2 * span + 1), pump_values[0])
        response = integrate_populations(e, constant, 0.5 * dt)[:, :, 1]
    else:
        fine = _half_step_pumps(e, pump, x, pump_values)
        steps = np.arange(2 * span + 1)

    per_lag = np.zeros(n_lags)
    for first in range(0, len(starts), BATCH_STARTS):
        batch = starts[first : first + BATCH_STARTS]
        stops = pi2[batch[:, None] + offsets[None, :]]
        if pump.kind is not PumpKind.broad:
            window = fine[2 * batch[:, None] + steps[None, :]]
            response = integrate_populations(e, window, 0.5 * dt)[:, :, 1]
        per_lag += weights[first : first + BATCH_STARTS] @ (response * stops)

    return _member_histogram(
        cfg,
        analytic_norm,
        lags=lags,
        per_lag_sum=np.clip(per_lag, 0.0, None),
        per_lag_count=float(len(starts)),
        weight_norm=float(np.sum(weights)),
        stop_norm=float(np.sum(sigma_bar[starts] * pi2[starts])),
        n_starts=len(starts),
    )


def g2_weighted(
    ensemble: Sequence[Trajectory],
    e: EmitterParams,
    pump: PumpProfile,
    psf1: Psf,
    psf2: Psf,
    cfg: CorrelatorConfig,
) -> CorrelationHistogram:
    """
    Start-weighted G2 with the emitter integrated from the ground state along
    each trajectory: every start on the stride grid carries the weight
    sigma_e(infinity) Pi_1 and every lag the stop probability sigma_e Pi_2.
    """
    if cfg.mode is not CorrelatorMode.full_bloch:
        raise DomainError(f"g2_weighted needs mode=full_bloch, got {cfg.mode.value}")
    _check_ensemble(ensemble, cfg)
    _check_centers(psf1, psf2, cfg)
    cfg.check_tail()
    _warn_start_weights(e, psf1.w0, cfg)

    analytic_norm = None
    if pump.kind is PumpKind.broad and cfg.oscillator and _is_thermal(ensemble):
        sigma_bar = float(excited_population(e, pump_rate(e, pump, 0.0)))
        analytic_norm = sigma_bar ** 2 * _fluxes(cfg.oscillator, psf1, psf2)

    return merge_all(
        cfg,
        (
            _weighted_member(t, e, pump, psf1, psf2, cfg, analytic_norm)
            for t in ensemble
        ),
        analytic_norm,
    )


def _sigma_on_lags(sigma_e_of_tau: TauFunc, lags: FloatArray) -> FloatArray:
    values = np.asarray(sigma_e_of_tau(lags), dtype=float)
    return np.broadcast_to(values, lags.shape).copy()


def _adiabatic_member(
    t: Trajectory,
    psf1: Psf,
    psf2: Psf,
    sigma: FloatArray,
    cfg: CorrelatorConfig,
    analytic_norm: Optional[float],
) -> CorrelationHistogram:
    lags = _lag_grid(cfg, t.dt)
    n_lags = len(lags)
    n = t.n_samples
    if n <= n_lags:
        raise DomainError("trajectory is shorter than tau_max")

    pi1 = psf_eval(psf1, t.positions)
    pi2 = psf_eval(psf2, t.positions)
    starts = np.arange(0, n - n_lags + 1, cfg.start_stride)
    indicator = np.zeros(n)
    indicator[starts] = pi1[starts]

    size = fft.next_fast_len(n + n_lags)
    spectrum = np.conj(fft.rfft(indicator, size)) * fft.rfft(pi2, size)
    correlation = fft.irfft(spectrum, size)[:n_lags]

    return _member_histogram(
        cfg,
        analytic_norm,
        lags=lags,
        per_lag_sum=np.clip(correlation, 0.0, None) * sigma,
        per_lag_count=float(len(starts)),
        weight_norm=float(np.sum(pi1[starts])),
        stop_norm=float(np.sum(pi2[starts])),
        n_starts=len(starts),
    )


def g2_adiabatic(
    ensemble: Sequence[Trajectory],
    psf1: Psf,
    psf2: Psf,
    sigma_e_of_tau: TauFunc,
    cfg: CorrelatorConfig,
) -> CorrelationHistogram:
    """
    Factorised G2 = sigma_e(tau) * <Pi_1(xi(t)) Pi_2(xi(t + tau))> for a broad
    pump; ``sigma_e_of_tau`` is the emitter g2 (tending to one) and is evaluated
    once per time step present in the ensemble.
    """
    if cfg.mode is not CorrelatorMode.adiabatic:
        raise DomainError(f"g2_adiabatic needs mode=adiabatic, got {cfg.mode.value}")
    _check_ensemble(ensemble, cfg)
    _check_centers(psf1, psf2, cfg)
    cfg.check_tail()

    analytic_norm = None
    if cfg.oscillator and _is_thermal(ensemble):
        analytic_norm = _fluxes(cfg.oscillator, psf1, psf2)

    sigma = {
        dt: _sigma_on_lags(sigma_e_of_tau, _lag_grid(cfg, dt))
        for dt in {t.dt for t in ensemble}
    }
    return merge_all(
        cfg,
        (
            _adiabatic_member(t, psf1, psf2, sigma[t.dt], cfg, analytic_norm)
            for t in ensemble
        ),
        analytic_norm,
    )


def _renewal_emissions(
    e: EmitterParams,
    pump: float,
    dt: float,
    duration: float,
    rng: np.random.Generator,
) -> FloatArray:
    """Emission times for a constant pump, one waiting time per draw."""
    pmf = emission_waiting_times(e, pump, dt)
    cdf = np.cumsum(pmf)
    mean_wait = dt * float(np.sum((np.arange(len(pmf)) + 0.5) * pmf))
    chunk = max(1024, int(1.2 * duration / max(mean_wait, dt)))

    found: List[FloatArray] = []
    now = 0.0
    while now < duration:
        steps = np.searchsorted(cdf, rng.random(chunk), side="right")
        waits = (steps + rng.random(chunk)) * dt
        trapped = np.flatnonzero(steps >= len(pmf))
        if len(trapped):
            waits = waits[: trapped[0]]
        arrivals = now + np.cumsum(waits)
        found.append(arrivals[arrivals < duration])
        if len(trapped) or not len(arrivals):
            break
        now = arrivals[-1]
    return np.concatenate(found) if found else np.zeros(0)


def _jump_emissions(
    e: EmitterParams,
    pump_values: FloatArray,
    dt: float,
    rng: np.random.Generator,
) -> FloatArray:
    """Step-by-step quantum-jump sampling for a position-dependent pump."""
    n = len(pump_values)
    u = rng.random(n)
    jitter = rng.random(n)
    state = GROUND.copy()
    found = []
    for k in range(n):
        if u[k] < e.gamma_rad * state[1] * dt:
            found.append((k + jitter[k]) * dt)
            state = GROUND.copy()
            continue
        m = no_jump_generator(e, pump_values[k]) * dt
        k1 = m @ state
        k2 = m @ (state + 0.5 * k1)
        k3 = m @ (state + 0.5 * k2)
        k4 = m @ (state + k3)
        state = state + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        state /= state.sum()
    return np.array(found)


def sample_photon_stream(
    t: Trajectory,
    e: EmitterParams,
    pump: PumpProfile,
    psf1: Psf,
    psf2: Psf,
    efficiency: float,
    dark_rate: float,
    seed: int,
) -> PhotonStream:
    """
    Detector clicks from one emitter riding on ``t``: emissions by quantum-jump
    sampling with reset to ground, routed through a 50:50 splitter onto the two
    detectors, plus Poisson dark counts.
    """
    if not 0.0 < efficiency <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {efficiency}")
    if dark_rate < 0:
        raise DomainError(f"dark_rate must be non-negative, got {dark_rate}")
    dt = t.dt
    duration = t.duration
    pump_values = pump_rate(e, pump, t.positions)
    rate = e.max_rate(float(np.max(pump_values)))
    if rate * dt > MAX_THINNING_RATE:
        raise ThinningBoundError(
            f"rate*dt={rate * dt:.4g} exceeds {MAX_THINNING_RATE}"
        )

    rng = make_rng(seed)
    if pump.kind is PumpKind.broad:
        emissions = _renewal_emissions(e, float(pump_values[0]), dt, duration, rng)
    else:
        emissions = _jump_emissions(e, pump_values, dt, rng)

    index = np.minimum((emissions / dt).astype(int), t.n_samples - 1)
    p1 = 0.5 * efficiency * psf_eval(psf1, t.positions[index])
    p2 = 0.5 * efficiency * psf_eval(psf2, t.positions[index])
    u = rng.random(len(emissions))
    on1 = u < p1
    on2 = ~on1 & (u < p1 + p2)

    times = [emissions[on1], emissions[on2]]
    labels = [np.full(on1.sum(), 1), np.full(on2.sum(), 2)]
    for detector in (1, 2):
        n_dark = rng.poisson(dark_rate * duration)
        times.append(rng.uniform(0.0, duration, n_dark))
        labels.append(np.full(n_dark, detector))

    times = np.concatenate(times)
    labels = np.concatenate(labels)
    order = np.argsort(times, kind="mergesort")
    times, labels = times[order], labels[order]
    distinct = np.ones(len(times), dtype=bool)
    distinct[1:] = np.diff(times) > 0
    return PhotonStream(
        times=times[distinct],
        detectors=labels[distinct],
        duration=duration,
        seed=seed,
    )


def correlate_stream(s: PhotonStream, cfg: CorrelatorConfig) -> CorrelationHistogram:
    """Multi-start histogram of detector-2 delays after every detector-1 click."""
    if not len(s):
        raise DomainError("photon stream is empty")
    if cfg.tau_max > s.duration / 10.0:
        raise DomainError(
            f"tau_max={cfg.tau_max} exceeds a tenth of the stream ({s.duration} s)"
        )
    cfg.check_tail()

    t1, t2 = s.channel(1), s.channel(2)
    n_bins = cfg.n_bins
    coincidences = np.zeros(n_bins)
    for first in range(0, len(t1), STREAM_CHUNK):
        starts = t1[first : first + STREAM_CHUNK]
        lo = np.searchsorted(t2, starts, side="left")
        hi = np.searchsorted(t2, starts + cfg.tau_max, side="left")
        n_pairs = hi - lo
        total = int(n_pairs.sum())
        if not total:
            continue
        offsets = np.arange(total) - np.repeat(np.cumsum(n_pairs) - n_pairs, n_pairs)
        delays = t2[np.repeat(lo, n_pairs) + offsets] - np.repeat(starts, n_pairs)
        index = (delays / cfg.tau_bin).astype(int)
        coincidences += np.bincount(index[index < n_bins], minlength=n_bins)

    # a start at t1 only sees delays up to T - t1: exposure (T - tau) * tau_bin
    edges = cfg.bin_edges
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = (s.duration - centers) * cfg.tau_bin
    return CorrelationHistogram(
        bin_edges=edges,
        weighted_sum=coincidences,
        counts=counts,
        lag_sum=counts * centers,
        weight_norm=float(len(t1)),
        stop_norm=float(len(t2)),
        exposure=s.duration,
        n_starts=len(t1),
        member_sum=np.zeros(n_bins),
        member_sq_sum=np.zeros(n_bins),
        n_members=0,
        meta={"config": cfg.echo(), "analytic_norm": None},
    )


def _run_shard(
    p: OscillatorParams,
    grid: TrajectoryGrid,
    cfg: CorrelatorConfig,
    psf1: Psf,
    psf2: Psf,
    master_seed: int,
    e: Optional[EmitterParams],
    pump: Optional[PumpProfile],
    sigma_e_of_tau: Optional[TauFunc],
    members: Sequence[int],
) -> CorrelationHistogram:
    ensemble = [simulate_thermal(p, grid, derive_seed(master_seed, i)) for i in members]
    if cfg.mode is CorrelatorMode.adiabatic:
        return g2_adiabatic(ensemble, psf1, psf2, sigma_e_of_tau, cfg)
    return g2_weighted(ensemble, e, pump, psf1, psf2, cfg)


def run_ensemble(
    p: OscillatorParams,
    grid: TrajectoryGrid,
    cfg: CorrelatorConfig,
    psf1: Psf,
    psf2: Psf,
    master_seed: int,
    n_members: int,
    threads: int = 1,
    e: Optional[EmitterParams] = None,
    pump: Optional[PumpProfile] = None,
    sigma_e_of_tau: Optional[TauFunc] = None,
) -> CorrelationHistogram:
    """
    Thermal ensemble histogram. Members are grouped in fixed shards and the
    shard results merged in shard order, so the sum never depends on
    ``threads``.
    """
    if n_members < 1:
        raise EmptyEnsembleError("ensemble needs at least one member")
    if cfg.mode is CorrelatorMode.adiabatic and sigma_e_of_tau is None:
        raise DomainError("adiabatic mode needs sigma_e_of_tau")
    if cfg.mode is CorrelatorMode.full_bloch and (e is None or pump is None):
        raise DomainError("full_bloch mode needs emitter and pump parameters")
    if sigma_e_of_tau is not None:
        lags = _lag_grid(cfg, grid.dt)
        table = _sigma_on_lags(sigma_e_of_tau, lags)
        sigma_e_of_tau = partial(np.interp, xp=lags, fp=table)

    shards = [
        range(first, min(first + SHARD_SIZE, n_members))
        for first in range(0, n_members, SHARD_SIZE)
    ]
    task = partial(
        _run_shard, p, grid, cfg, psf1, psf2, master_seed, e, pump, sigma_e_of_tau
    )
    logger.info(
        "ensemble: %d members in %d shards on %d workers",
        n_members,
        len(shards),
        threads,
    )
    if threads == 1:
        results = [task(shard) for shard in shards]
    else:
        results = Parallel(n_jobs=threads)(delayed(task)(shard) for shard in shards)
    return reduce(merge, results)
