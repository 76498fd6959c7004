import math
from functools import partial
from pathlib import Path
from typing import List
from typing import Tuple
from typing import Union

import numpy as np
from joblib import delayed
from joblib import Parallel
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import StepTooCoarseError
from nanomotion_g2.mechanics import check_underdamped
from nanomotion_g2.mechanics import thermal_spread
from nanomotion_g2.params import DriveKind
from nanomotion_g2.params import OscillatorParams
from nanomotion_g2.params import Trajectory
from nanomotion_g2.params import TrajectoryGrid
from nanomotion_g2.utils import CsvConverter
from nanomotion_g2.utils import derive_seed
from nanomotion_g2.utils import make_rng
from scipy import fft
from scipy import linalg
from scipy import signal

MAX_STEP_PHASE = 0.1
BURN_IN_RELAXATION_TIMES = 10.0


def transition_matrix(omega0: float, gamma: float, dt: float) -> np.ndarray:
    """One-step propagator of (x, v) for x'' + gamma x' + omega0^2 x = 0."""
    generator = np.array([[0.0, 1.0], [-(omega0 ** 2), -gamma]])
    return linalg.expm(generator * dt)


def transition(p: OscillatorParams, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact discretisation of the thermal oscillator on the (position, velocity)
    state: returns the propagator and the covariance of the added noise.

    The restoring frequency is chosen so that the stationary position
    autocorrelation is exactly ``mechanics.position_autocorrelation``, i.e. the
    ringing frequency is Omega tilde with Omega tilde^2 = Omega_m^2 - Gamma_m^2/2.
    """
    check_underdamped(p)
    omega0_sq = p.omega_m ** 2 - 0.25 * p.gamma_m ** 2
    phi = transition_matrix(math.sqrt(omega0_sq), p.gamma_m, dt)
    stationary = stationary_covariance(p)
    noise = stationary - phi @ stationary @ phi.T
    return phi, 0.5 * (noise + noise.T)


def stationary_covariance(p: OscillatorParams) -> np.ndarray:
    variance = thermal_spread(p) ** 2
    return np.diag([variance, (p.omega_m ** 2 - 0.25 * p.gamma_m ** 2) * variance])


def _covariance_root(cov: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh(cov)
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def default_burn_in(p: OscillatorParams, dt: float) -> int:
    return int(math.ceil(BURN_IN_RELAXATION_TIMES / (p.gamma_m * dt)))


def simulate_thermal(
    p: OscillatorParams, grid: TrajectoryGrid, seed: int
) -> Trajectory:
    if grid.dt * p.omega_m >= MAX_STEP_PHASE:
        raise StepTooCoarseError(
            f"dt*omega_m={grid.dt * p.omega_m:.4g} must stay below {MAX_STEP_PHASE}"
        )
    phi, noise = transition(p, grid.dt)
    burn_in = grid.burn_in if grid.burn_in is not None else default_burn_in(p, grid.dt)
    n_total = burn_in + grid.n_samples

    rng = make_rng(seed)
    start = _covariance_root(stationary_covariance(p)) @ rng.standard_normal(2)
    kicks = _covariance_root(noise) @ rng.standard_normal((2, n_total - 1))

    # x_k as the output of a two-pole filter driven by [s0, e_0, e_1, ...]
    drive = np.concatenate([start[:, None], kicks], axis=1)
    denominator = [1.0, -np.trace(phi), linalg.det(phi)]
    positions = signal.lfilter([1.0, -phi[1, 1]], denominator, drive[0])
    positions += signal.lfilter([0.0, phi[0, 1]], denominator, drive[1])

    return Trajectory(
        positions=positions[burn_in:],
        dt=grid.dt,
        seed=seed,
        drive_kind=DriveKind.thermal,
    )


def simulate_coherent(
    amplitude: float, omega: float, phase: float, grid: TrajectoryGrid
) -> Trajectory:
    positions = amplitude * np.cos(omega * grid.times() + phase)
    return Trajectory(positions=positions, dt=grid.dt, drive_kind=DriveKind.coherent)


def _member(p: OscillatorParams, grid: TrajectoryGrid, master_seed: int, index: int):
    return simulate_thermal(p, grid, derive_seed(master_seed, index))


def simulate_ensemble(
    p: OscillatorParams,
    grid: TrajectoryGrid,
    master_seed: int,
    n_members: int,
    threads: int = 1,
) -> List[Trajectory]:
    task = partial(_member, p, grid, master_seed)
    if threads == 1:
        return [task(index) for index in range(n_members)]
    return Parallel(n_jobs=threads)(delayed(task)(i) for i in range(n_members))


def empirical_autocorrelation(t: Trajectory, max_lag: int) -> np.ndarray:
    """Biased (1/N) autocovariance of the mean-subtracted record, lags 0..max_lag."""
    n = t.n_samples
    if max_lag < 0 or max_lag >= n / 2:
        raise DomainError(f"max_lag={max_lag} must lie in [0, {n / 2})")
    centered = t.positions - t.positions.mean()
    size = fft.next_fast_len(2 * n)
    spectrum = fft.rfft(centered, size)
    acf = fft.irfft(spectrum * np.conj(spectrum), size)[: max_lag + 1]
    return acf / n


def write_trajectory_csv(t: Trajectory, path: Union[str, Path]) -> Path:
    return CsvConverter.write(path, ["t_s", "x_m"], [t.times(), t.positions])

