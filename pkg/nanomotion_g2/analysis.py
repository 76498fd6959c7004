"""
Post-processing of g2 curves: expansion fits, spectra and shot-noise figures.
"""
import math
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
from nanomotion_g2.correlator.models import CorrelationHistogram
from nanomotion_g2.correlator.models import G2Curve
from nanomotion_g2.exceptions import ConvergenceError
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import RankDeficientError
from nanomotion_g2.logger import logger
from nanomotion_g2.mechanics import thermal_spread
from nanomotion_g2.params import FrozenModel
from nanomotion_g2.params import Geometry
from nanomotion_g2.params import OscillatorParams
from nanomotion_g2.typing import FloatArray
from nanomotion_g2.typing import TauFunc
from nanomotion_g2.utils import is_uniform
from nanomotion_g2.wick import aj_closed_form
from numpy.polynomial import polynomial
from pydantic import Field
from scipy import fft
from scipy import optimize
from scipy import signal

MAX_FIT_ORDER = 4
MAX_FIT_EVALUATIONS = 200
FIT_DIFF_STEP = 1e-6
FIT_TOLERANCE = 1e-14
INIT_PADDING = 8
# fraction of sigma_e(infinity) below which the inversion is masked
MIN_SIGMA_FRACTION = 0.1

G2Data = Union[CorrelationHistogram, G2Curve]


class FitResult(FrozenModel):
    alpha: np.ndarray
    omega_fit: float = Field(..., gt=0, description="rad/s")
    gamma_fit: float = Field(..., description="rad/s")
    dx_fit: Optional[float] = Field(None, description="m")
    residual_rms: float = Field(..., ge=0)
    covariance_diag: np.ndarray
    tau: np.ndarray
    residuals: np.ndarray


class Spectrum(FrozenModel):
    freq: np.ndarray
    psd: np.ndarray
    window: str = "hann"


def _as_curve(data: G2Data) -> G2Curve:
    if isinstance(data, CorrelationHistogram):
        if not is_uniform(data.bin_edges):
            raise DomainError("histogram bins are not uniform")
        return data.curve()
    return data


def _hold_masked(tau: FloatArray, y: FloatArray, mask_tau: float) -> FloatArray:
    y = np.array(y, dtype=float)
    unmasked = np.flatnonzero(tau >= mask_tau)
    if not len(unmasked):
        raise DomainError(f"every bin lies below mask_tau={mask_tau}")
    y[: unmasked[0]] = y[unmasked[0]]
    return y


def _periodogram(
    tau: FloatArray, y: FloatArray, window: str, padding: int = 1
) -> Spectrum:
    if not is_uniform(tau):
        raise DomainError("g2 delays are not uniformly spaced")
    if not np.all(np.isfinite(y)):
        raise DomainError("g2 curve holds empty or non-finite bins")
    step = float(tau[1] - tau[0])
    # g2 is even in tau
    full = np.concatenate([y[:0:-1], y])
    taper = signal.get_window(window, len(full), fftbins=False)
    size = padding * len(full)
    transform = fft.rfft(full * taper, size)
    df = 1.0 / (size * step)
    scale = np.full(len(transform), 2.0)
    scale[0] = 1.0
    if size % 2 == 0:
        scale[-1] = 1.0
    power = scale * np.abs(transform) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return Spectrum(freq=fft.rfftfreq(size, step), psd=power, window=window)
    # the integral of the psd is the mean square of the input samples
    psd = power * float(np.mean(y ** 2)) / (total * df)
    return Spectrum(freq=fft.rfftfreq(size, step), psd=psd, window=window)


def spectrum_from_g2(
    data: G2Data, window: str = "hann", mask_tau: float = 0.0
) -> Spectrum:
    """
    One-sided PSD of g2 - 1 (units 1/Hz), window-compensated: summed over the
    frequency bins it returns the mean square of g2 - 1, its variance about the
    uncorrelated level.
    """
    curve = _as_curve(data)
    y = _hold_masked(curve.tau, curve.g2 - 1.0, mask_tau)
    return _periodogram(curve.tau, y, window)


def _line_estimate(spectrum: Spectrum) -> Tuple[float, float]:
    """(peak, FWHM) in Hz from half-maximum crossings around the largest bin."""
    freq, psd = spectrum.freq, spectrum.psd
    peak = 1 + int(np.argmax(psd[1:]))
    half = 0.5 * psd[peak]

    left = peak
    while left > 0 and psd[left] > half:
        left -= 1
    right = peak
    while right < len(psd) - 1 and psd[right] > half:
        right += 1
    f_left = np.interp(half, [psd[left], psd[left + 1]], [freq[left], freq[left + 1]])
    f_right = np.interp(
        half, [psd[right], psd[right - 1]], [freq[right], freq[right - 1]]
    )
    width = max(f_right - f_left, freq[1] - freq[0])
    return float(freq[peak]), float(width)


def fit_thermal_spectrum(
    spectrum: Spectrum, band: Optional[Tuple[float, float]] = None
) -> Tuple[float, float]:
    """
    Damped-oscillator line A (f0 w)^2 / ((f0^2 - f^2)^2 + (f w)^2) + B.

    Returns the frequency of the maximum, sqrt(f0^2 - w^2/2), and w, both in Hz.
    """
    freq, psd = spectrum.freq, spectrum.psd
    select = freq > 0
    if band is not None:
        select &= (freq >= band[0]) & (freq <= band[1])
    freq, psd = freq[select], psd[select]
    f_peak, width = _line_estimate(
        Spectrum(freq=np.r_[0.0, freq], psd=np.r_[0.0, psd])
    )

    def line(f, height, f0, w, floor):
        denominator = (f0 ** 2 - f ** 2) ** 2 + (f * w) ** 2
        return height * (f0 * w) ** 2 / denominator + floor

    scale = float(psd.max())
    try:
        popt, _ = optimize.curve_fit(
            line,
            freq,
            psd / scale,
            p0=[1.0, f_peak, width, float(np.median(psd)) / scale],
            maxfev=10000,
        )
    except RuntimeError as e:
        raise ConvergenceError(f"thermal spectrum fit did not converge: {e}")
    f0, w = abs(popt[1]), abs(popt[2])
    return math.sqrt(max(f0 ** 2 - 0.5 * w ** 2, 0.0)), w


def spectral_snr(spectrum: Spectrum, band: Tuple[float, float]) -> float:
    """Largest in-band PSD over the median out-of-band PSD (DC excluded)."""
    freq, psd = spectrum.freq, spectrum.psd
    inside = (freq >= band[0]) & (freq <= band[1])
    outside = ~inside & (freq > 0)
    if not np.any(inside) or not np.any(outside):
        raise DomainError(f"band {band} leaves no bins on one side")
    background = float(np.median(psd[outside]))
    if background <= 0:
        return math.inf
    return float(np.max(psd[inside])) / background


def normalized_autocorrelation(
    tau: FloatArray, omega: float, gamma: float
) -> FloatArray:
    tau = np.abs(tau)
    return np.exp(-0.5 * gamma * tau) * (
        np.cos(omega * tau) + 0.5 * gamma / omega * np.sin(omega * tau)
    )


def expansion_model(
    tau: FloatArray,
    alpha: FloatArray,
    omega: float,
    gamma: float,
    sigma: FloatArray,
) -> FloatArray:
    """sigma(tau) * sum_j alpha_j (-C(tau) / dx_th^2)^j."""
    c = normalized_autocorrelation(tau, omega, gamma)
    return sigma * polynomial.polyval(-c, alpha)


def _linear_alpha(tau, g2, sigma, omega, gamma, order) -> FloatArray:
    c = normalized_autocorrelation(tau, omega, gamma)
    design = sigma[:, None] * (-c[:, None]) ** np.arange(order + 1)[None, :]
    alpha, *_ = np.linalg.lstsq(design, g2, rcond=None)
    return alpha


def _spread_from_ratio(
    alpha: FloatArray, geometry: Geometry, w0: float
) -> Optional[float]:
    d1, d2 = geometry.deltas
    j = 1 if d1 * d2 != 0 else 2
    if len(alpha) <= j or alpha[0] == 0:
        return None
    target = alpha[j] / alpha[0]

    def mismatch(theta: float) -> float:
        g = geometry.copy(update={"theta": theta})
        ratio = aj_closed_form(j, g) / aj_closed_form(0, g)
        return ratio * (2.0 * theta ** 2) ** j - target

    lower, upper = 1e-6, (0.5 if j % 2 else 3.0)
    if mismatch(lower) * mismatch(upper) > 0:
        logger.warning("alpha_%d/alpha_0=%.4g has no spread in range", j, target)
        return None
    return optimize.brentq(mismatch, lower, upper, xtol=1e-14) * w0


def fit_expansion(
    data: G2Data,
    sigma_e_of_tau: Optional[TauFunc] = None,
    max_order: int = MAX_FIT_ORDER,
    geometry: Optional[Geometry] = None,
    w0: Optional[float] = None,
    mask_tau: float = 0.0,
) -> FitResult:
    """
    Least-squares fit of the expansion model over (alpha_0..alpha_K, omega, gamma)
    with uniform weights. Only alpha_j / alpha_0 and the dynamics are
    identifiable, alpha_0 takes up the overall scale.
    """
    if not 0 <= max_order <= MAX_FIT_ORDER:
        raise DomainError(f"max_order must lie in [0, {MAX_FIT_ORDER}]")
    curve = _as_curve(data)
    keep = np.isfinite(curve.g2) & (curve.tau >= mask_tau)
    tau, g2 = curve.tau[keep], curve.g2[keep]
    n_params = max_order + 3
    if len(tau) <= n_params:
        raise DomainError(f"{len(tau)} points cannot constrain {n_params} parameters")
    if sigma_e_of_tau is None:
        sigma = np.ones_like(tau)
    else:
        sigma = np.broadcast_to(np.asarray(sigma_e_of_tau(tau), float), tau.shape)

    motion = _hold_masked(curve.tau, np.nan_to_num(curve.g2 - 1.0), mask_tau)
    padded = _periodogram(curve.tau, motion, "hann", INIT_PADDING)
    f_peak, width = _line_estimate(padded)

    def residuals(x: FloatArray) -> FloatArray:
        return expansion_model(tau, x[:-2], x[-2], x[-1], sigma) - g2

    lower = np.r_[np.full(max_order + 1, -np.inf), 0.0, 0.0]
    best = None
    failure: Optional[ConvergenceError] = None
    # the line sits at the oscillator frequency, or at twice it when odd terms vanish
    for harmonic in (1.0, 2.0):
        omega0 = 2.0 * math.pi * f_peak / harmonic
        gamma0 = 2.0 * math.pi * width / harmonic
        alpha0 = _linear_alpha(tau, g2, sigma, omega0, gamma0, max_order)
        result = optimize.least_squares(
            residuals,
            np.r_[alpha0, omega0, gamma0],
            jac="3-point",
            diff_step=FIT_DIFF_STEP,
            bounds=(lower, np.inf),
            method="trf",
            x_scale="jac",
            ftol=FIT_TOLERANCE,
            xtol=FIT_TOLERANCE,
            gtol=FIT_TOLERANCE,
            max_nfev=MAX_FIT_EVALUATIONS,
        )
        if result.status <= 0:
            failure = ConvergenceError(f"expansion fit stopped: {result.message}")
            continue
        if best is None or result.cost < best.cost:
            best = result
    if best is None:
        raise failure

    jac = best.jac
    if np.linalg.matrix_rank(jac) < n_params:
        raise RankDeficientError("expansion fit jacobian is rank deficient")
    dof = max(len(tau) - n_params, 1)
    s2 = 2.0 * best.cost / dof
    covariance = s2 * np.linalg.pinv(jac.T @ jac)

    alpha = best.x[:-2]
    dx_fit = None
    if geometry is not None and w0 is not None:
        dx_fit = _spread_from_ratio(alpha, geometry, w0)
    return FitResult(
        alpha=alpha,
        omega_fit=best.x[-2],
        gamma_fit=best.x[-1],
        dx_fit=dx_fit,
        residual_rms=math.sqrt(np.mean(best.fun ** 2)),
        covariance_diag=np.diag(covariance).copy(),
        tau=tau,
        residuals=best.fun,
    )


def sensitivity(w0: float, flux: float, tau_bin: float) -> float:
    """Shot-noise floor on C_xi, in m^2 / sqrt(Hz)."""
    if w0 <= 0 or flux <= 0 or tau_bin <= 0:
        raise DomainError("w0, flux and tau_bin must be positive")
    return w0 ** 2 / (4.0 * flux * math.sqrt(tau_bin))


def extract_cxi(
    g2_values: FloatArray,
    sigma_e_values: FloatArray,
    w0: float,
    sigma_inf: float = 1.0,
) -> FloatArray:
    """
    Small-amplitude inversion C = (w0^2 / 4)(1 - g2 / sigma_e); bins where
    sigma_e < 0.1 sigma_e(infinity) come back as NaN.
    """
    g2 = np.asarray(g2_values, dtype=float)
    sigma = np.asarray(sigma_e_values, dtype=float)
    masked = sigma < MIN_SIGMA_FRACTION * sigma_inf
    if np.all(masked):
        raise DomainError("sigma_e is below the mask threshold everywhere")
    with np.errstate(invalid="ignore", divide="ignore"):
        c = 0.25 * w0 ** 2 * (1.0 - g2 / sigma)
    return np.where(masked, np.nan, c)


def photon_counting_regime(flux: float, omega_m: float) -> bool:
    """Fewer than one detected photon per mechanical period."""
    return flux < omega_m / (2.0 * math.pi)


def linear_detection_threshold(p: OscillatorParams, w0: float) -> float:
    """Flux (1/s) above which a differential readout beats shot noise."""
    return p.gamma_m * (w0 / thermal_spread(p)) ** 2

