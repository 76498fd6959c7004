"""
Three-level rate model: ground (g), excited (e) and a dark metastable level (m).

    dg/dt = -P g + gamma_rad e + k_relax m
    de/dt =  P g - (gamma_rad + k_isc) e
    dm/dt =  k_isc e - k_relax m
"""
import math
from typing import Optional

import numpy as np
from nanomotion_g2.exceptions import DegenerateGeneratorError
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import PopulationDriftError
from nanomotion_g2.exceptions import StepTooCoarseError
from nanomotion_g2.params import EmitterParams
from nanomotion_g2.params import EmitterState
from nanomotion_g2.typing import ArrayLike
from nanomotion_g2.typing import FloatArray
from nanomotion_g2.typing import PumpFunc
from nanomotion_g2.utils import is_uniform
from scipy import linalg

MAX_STEP_RATE = 0.1
RK4_STEP_RATE = 0.05
MAX_POPULATION_DRIFT = 1e-6
GROUND = np.array([1.0, 0.0, 0.0])


def generator_matrix(e: EmitterParams, pump: float) -> np.ndarray:
    return np.array(
        [
            [-pump, e.gamma_rad, e.k_relax],
            [pump, -(e.gamma_rad + e.k_isc), 0.0],
            [0.0, e.k_isc, -e.k_relax],
        ]
    )


def no_jump_generator(e: EmitterParams, pump: float) -> np.ndarray:
    """Evolution between emissions: radiative decay leaves the no-emission record."""
    generator = generator_matrix(e, pump)
    generator[0, 1] = 0.0
    return generator


def steady_state(e: EmitterParams, pump: float) -> EmitterState:
    if pump < 0:
        raise DomainError(f"pump must be non-negative, got {pump}")
    kernel = linalg.null_space(generator_matrix(e, pump))
    if kernel.shape[1] != 1:
        raise DegenerateGeneratorError(
            f"rate generator has a {kernel.shape[1]}-dimensional null space"
        )
    populations = kernel[:, 0] / kernel[:, 0].sum()
    populations = np.clip(populations, 0.0, 1.0)
    populations /= populations.sum()
    return EmitterState(
        sigma_g=populations[0], sigma_e=populations[1], sigma_m=populations[2]
    )


def excited_population(e: EmitterParams, pump: ArrayLike) -> ArrayLike:
    """Steady-state sigma_e for every pump value, in closed form."""
    pump = np.asarray(pump, dtype=float)
    if e.k_isc == 0.0:
        shelving = 1.0
    elif e.k_relax == 0.0:
        return np.zeros_like(pump)
    else:
        shelving = 1.0 + e.k_isc / e.k_relax
    return pump / (pump * shelving + e.gamma_rad + e.k_isc)


def _rates(e: EmitterParams, y: FloatArray, pump: FloatArray) -> FloatArray:
    g, x, m = y[:, 0], y[:, 1], y[:, 2]
    out = np.empty_like(y)
    out[:, 0] = -pump * g + e.gamma_rad * x + e.k_relax * m
    out[:, 1] = pump * g - (e.gamma_rad + e.k_isc) * x
    out[:, 2] = e.k_isc * x - e.k_relax * m
    return out


def _pump_at(p0: FloatArray, p_half: FloatArray, p1: FloatArray, f: float):
    # piecewise-linear through the start, middle and end samples of a step
    if f <= 0.5:
        return p0 + (p_half - p0) * (2.0 * f)
    return p_half + (p1 - p_half) * (2.0 * f - 1.0)


def _substeps(h: float, max_rate: float) -> int:
    return max(1, int(math.ceil(h * max_rate / RK4_STEP_RATE - 1e-9)))


def integrate_populations(
    e: EmitterParams,
    pump_values: FloatArray,
    dt: float,
    initial: Optional[FloatArray] = None,
) -> FloatArray:
    """
    RK4 integration of a batch of emitters, each with its own pump record.

    ``pump_values`` has shape (batch, 2K + 1) sampled every ``dt``; one RK4 step
    spans two samples so the middle sample feeds the half-step stages. Returns
    populations of shape (batch, K + 1, 3) at times 0, 2 dt, ..., 2K dt.
    """
    pump_values = np.atleast_2d(np.asarray(pump_values, dtype=float))
    batch, n_pump = pump_values.shape
    if n_pump < 3 or n_pump % 2 == 0:
        raise DomainError(f"need an odd number (>= 3) of pump samples, got {n_pump}")
    max_rate = e.max_rate(float(pump_values.max()))
    if dt * max_rate > MAX_STEP_RATE:
        raise StepTooCoarseError(
            f"dt*max_rate={dt * max_rate:.4g} exceeds {MAX_STEP_RATE}"
        )

    n_steps = (n_pump - 1) // 2
    h = 2.0 * dt
    n_sub = _substeps(h, max_rate)
    hs = h / n_sub

    y = np.empty((batch, 3))
    y[:] = GROUND if initial is None else initial
    out = np.empty((batch, n_steps + 1, 3))
    out[:, 0] = y
    for k in range(n_steps):
        p0 = pump_values[:, 2 * k]
        p_half = pump_values[:, 2 * k + 1]
        p1 = pump_values[:, 2 * k + 2]
        for j in range(n_sub):
            pa = _pump_at(p0, p_half, p1, j / n_sub)
            pm = _pump_at(p0, p_half, p1, (j + 0.5) / n_sub)
            pb = _pump_at(p0, p_half, p1, (j + 1.0) / n_sub)
            k1 = _rates(e, y, pa)
            k2 = _rates(e, y + 0.5 * hs * k1, pm)
            k3 = _rates(e, y + 0.5 * hs * k2, pm)
            k4 = _rates(e, y + hs * k3, pb)
            y = y + hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = np.max(np.abs(y.sum(axis=1) - 1.0))
        if drift > MAX_POPULATION_DRIFT:
            raise PopulationDriftError(f"population sum drifted by {drift:.3g}")
        out[:, k + 1] = y
    return out


def step_response(
    e: EmitterParams,
    pump_of_t: PumpFunc,
    duration: float,
    dt: float,
    initial: Optional[FloatArray] = None,
) -> FloatArray:
    """sigma_e(t) on the grid 0, dt, ..., duration, starting from the ground state."""
    if duration <= 0:
        raise DomainError(f"duration must be positive, got {duration}")
    n_out = int(round(duration / dt))
    coarse = np.arange(2 * n_out + 1) * (0.5 * dt)
    coarse_pump = np.broadcast_to(np.asarray(pump_of_t(coarse), float), coarse.shape)
    max_rate = e.max_rate(float(coarse_pump.max()))
    if dt * max_rate > MAX_STEP_RATE:
        raise StepTooCoarseError(
            f"dt*max_rate={dt * max_rate:.4g} exceeds {MAX_STEP_RATE}"
        )

    n_sub = _substeps(dt, max_rate)
    fine = np.arange(2 * n_out * n_sub + 1) * (0.5 * dt / n_sub)
    pump = np.broadcast_to(np.asarray(pump_of_t(fine), float), fine.shape)
    states = integrate_populations(e, pump, 0.5 * dt / n_sub, initial=initial)
    return states[0, ::n_sub, 1]


def exact_response(e: EmitterParams, pump: float, tau: ArrayLike) -> FloatArray:
    """sigma_e(tau) from the ground state by matrix exponential."""
    generator = generator_matrix(e, pump)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    return np.array([(linalg.expm(generator * t) @ GROUND)[1] for t in tau])


def stationary_g2(e: EmitterParams, pump: float, tau_grid: ArrayLike) -> FloatArray:
    """g2(tau) = sigma_e(tau | ground start) / sigma_e(infinity)."""
    if pump <= 0:
        raise DomainError(f"stationary g2 needs a positive pump, got {pump}")
    tau = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if np.any(tau < 0):
        raise DomainError("tau grid must be non-negative")
    sigma_inf = float(excited_population(e, pump))

    def constant(t: FloatArray) -> FloatArray:
        return np.full_like(t, pump)

    t_end = float(tau.max())
    if t_end == 0.0:
        return np.zeros_like(tau)

    fine_dt = RK4_STEP_RATE / e.max_rate(pump)
    if tau[0] == 0.0 and is_uniform(tau):
        step = tau[1] - tau[0]
        stride = max(1, int(math.ceil(step / fine_dt - 1e-9)))
        sigma = step_response(e, constant, t_end, step / stride)[::stride]
        return sigma / sigma_inf

    n_fine = int(math.ceil(t_end / fine_dt))
    grid = np.linspace(0.0, t_end, n_fine + 1)
    sigma = step_response(e, constant, t_end, grid[1])
    return np.interp(tau, grid, sigma[: len(grid)]) / sigma_inf


def antibunching_slope(e: EmitterParams, pump: float) -> float:
    """d g2 / d tau at 0+ (1/s): sigma_e rises as pump * tau from the ground state."""
    return pump / float(excited_population(e, pump))


def emission_waiting_times(
    e: EmitterParams,
    pump: float,
    dt: float,
    tol: float = 1e-12,
    max_steps: int = 2 ** 22,
) -> FloatArray:
    """
    Probability that the first emission after a reset to ground falls in step k.

    Sums to one up to ``tol`` unless the emitter can be trapped forever (no
    metastable relaxation), in which case the deficit is the trapping probability.
    """
    if pump <= 0:
        raise DomainError(f"emission needs a positive pump, got {pump}")
    generator = no_jump_generator(e, pump)
    slowest = float(np.min(-linalg.eigvals(generator).real))
    if slowest <= 0:
        n_steps = max_steps
    else:
        n_steps = min(max_steps, int(math.ceil(math.log(1.0 / tol) / (slowest * dt))))
    propagator = linalg.expm(generator * dt)
    survival = np.empty(n_steps + 1)
    state = GROUND.copy()
    survival[0] = 1.0
    for k in range(n_steps):
        state = propagator @ state
        survival[k + 1] = state.sum()
    return np.clip(-np.diff(survival), 0.0, None)
