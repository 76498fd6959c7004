"""
Closed-form mechanics of a single oscillator mode.

Spectral convention: two-sided PSDs in angular frequency with the force noise
``S_F = 2 m_eff gamma_m k_B T_eff`` and variances given by
``(1 / 2 pi) * integral(S_x dOmega)`` over the whole real axis.
"""
import math
import warnings
from typing import List

import numpy as np
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import QuadratureError
from nanomotion_g2.exceptions import RootBracketError
from nanomotion_g2.exceptions import UnsupportedRegimeError
from nanomotion_g2.logger import logger
from nanomotion_g2.params import ActuatorParams
from nanomotion_g2.params import ForceConvention
from nanomotion_g2.params import ModeSolution
from nanomotion_g2.params import OscillatorParams
from nanomotion_g2.typing import ArrayLike
from scipy import constants
from scipy import integrate
from scipy import optimize

K_B = constants.k

MAX_BEAM_MODES = 12
# effective masses measured at the tip; every clamped-free mode gives 1/4
ANALYTIC_MEFF_RATIO = 0.25


def thermal_spread(p: OscillatorParams) -> float:
    return math.sqrt(K_B * p.temperature_eff / (p.m_eff * p.omega_m ** 2))


def temperature_for_spread(p: OscillatorParams, dx_th: float) -> float:
    return dx_th ** 2 * p.m_eff * p.omega_m ** 2 / K_B


def damped_frequency(p: OscillatorParams) -> float:
    """Omega tilde, with Omega tilde^2 = Omega_m^2 - Gamma_m^2 / 2."""
    check_underdamped(p)
    return math.sqrt(p.omega_m ** 2 - 0.5 * p.gamma_m ** 2)


def check_underdamped(p: OscillatorParams) -> None:
    if p.omega_m ** 2 <= 0.5 * p.gamma_m ** 2:
        raise UnsupportedRegimeError(
            f"omega_m^2={p.omega_m ** 2:.6g} <= gamma_m^2/2={0.5 * p.gamma_m ** 2:.6g}"
        )


def susceptibility(p: OscillatorParams, omega: ArrayLike) -> ArrayLike:
    omega = np.asarray(omega, dtype=float)
    return (1.0 / p.m_eff) / (p.omega_m ** 2 - omega ** 2 - 1j * p.gamma_m * p.omega_m)


def force_psd(p: OscillatorParams) -> float:
    return 2.0 * p.m_eff * p.gamma_m * K_B * p.temperature_eff


def displacement_psd(p: OscillatorParams, omega: ArrayLike) -> ArrayLike:
    return np.abs(susceptibility(p, omega)) ** 2 * force_psd(p)


def psd_variance(p: OscillatorParams) -> float:
    """Exact (1/2pi) * integral of displacement_psd; tends to thermal_spread^2."""
    root = np.sqrt(complex(p.omega_m ** 2, p.gamma_m * p.omega_m))
    return K_B * p.temperature_eff / (p.m_eff * p.omega_m) * (1.0 / root).real


def position_autocorrelation(p: OscillatorParams, tau: ArrayLike) -> ArrayLike:
    omega_t = damped_frequency(p)
    tau = np.abs(np.asarray(tau, dtype=float))
    half_gamma = 0.5 * p.gamma_m
    return (
        thermal_spread(p) ** 2
        * np.exp(-half_gamma * tau)
        * (np.cos(omega_t * tau) + half_gamma / omega_t * np.sin(omega_t * tau))
    )


def thermal_force_sensitivity(
    p: OscillatorParams, convention: ForceConvention = ForceConvention.angular
) -> float:
    gamma = p.gamma_m
    if convention is ForceConvention.hertz:
        gamma = gamma / (2.0 * math.pi)
    return math.sqrt(2.0 * p.m_eff * gamma * K_B * p.temperature_eff)


def _frequency_residual(beta: float) -> float:
    # cos(b) cosh(b) + 1 divided by cosh(b)
    return math.cos(beta) + 1.0 / math.cosh(beta)


def _mode_coefficient(beta: float) -> float:
    return -(math.cos(beta) + math.cosh(beta)) / (math.sin(beta) + math.sinh(beta))


def _mode_shape(beta: float, eta: ArrayLike) -> ArrayLike:
    """
    u(eta) = cos + A sin - cosh - A sinh, with cosh/sinh split into exponentials.

    (1 + A) is of order exp(-beta) and is only ever multiplied by exp(beta * eta)
    after both exponents have been combined.
    """
    eta = np.asarray(eta, dtype=float)
    s, c = math.sin(beta), math.cos(beta)
    decay = math.exp(-beta)
    a = _mode_coefficient(beta)
    # sin + sinh = exp(beta) * denom / 2
    denom = 1.0 + 2.0 * decay * s - decay ** 2
    growing = 2.0 * (s - c - decay) / denom * np.exp(beta * (eta - 1.0))
    return (
        np.cos(beta * eta)
        + a * np.sin(beta * eta)
        - 0.5 * growing
        - 0.5 * (1.0 - a) * np.exp(-beta * eta)
    )


def _meff_ratio(beta: float) -> float:
    tip = float(_mode_shape(beta, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(
                lambda eta: float(_mode_shape(beta, eta)) ** 2,
                0.0,
                1.0,
                epsabs=0.0,
                epsrel=1e-9,
                limit=200,
            )
        except integrate.IntegrationWarning as e:
            raise QuadratureError(f"effective mass quadrature for kL={beta}: {e}")
    return value / tip ** 2


def solve_beam_modes(n_max: int) -> List[ModeSolution]:
    if not 1 <= n_max <= MAX_BEAM_MODES:
        raise DomainError(f"n_max must lie in [1, {MAX_BEAM_MODES}], got {n_max}")

    modes = []
    for n in range(1, n_max + 1):
        lower, upper = (n - 1) * math.pi, n * math.pi
        if _frequency_residual(lower) * _frequency_residual(upper) > 0:
            raise RootBracketError(f"no sign change for mode {n} in [{lower}, {upper}]")
        beta = optimize.bisect(
            _frequency_residual, lower, upper, xtol=1e-12, rtol=4 * np.finfo(float).eps
        )
        ratio = _meff_ratio(beta)
        flagged = n >= 3
        if flagged:
            logger.warning(
                "mode %d: meff_ratio=%.6g from quadrature; tabulated high-mode values "
                "are not reproduced",
                n,
                ratio,
            )
        modes.append(
            ModeSolution(
                index=n,
                kL=beta,
                A_n=_mode_coefficient(beta),
                meff_ratio=ratio,
                flagged=flagged,
            )
        )
    return modes


def static_deflection(a: ActuatorParams, v: ArrayLike) -> ArrayLike:
    return a.kappa * np.asarray(v, dtype=float) ** 2


def linearized_force(a: ActuatorParams, dv: ArrayLike) -> ArrayLike:
    return 2.0 * a.alpha * a.v_offset * np.asarray(dv, dtype=float)


def actuator_force_psd(a: ActuatorParams) -> float:
    return 4.0 * a.alpha ** 2 * a.v_offset ** 2 * a.s_v


def effective_temperature(
    a: ActuatorParams, p: OscillatorParams, bath_T: float
) -> float:
    excess = 2.0 * a.alpha ** 2 * a.v_offset ** 2 * a.s_v / (p.m_eff * K_B * p.gamma_m)
    return bath_T + excess


def effective_mass(m_total: float, mode: ModeSolution) -> float:
    if m_total <= 0:
        raise DomainError(f"beam mass must be positive, got {m_total}")
    return m_total * mode.meff_ratio
